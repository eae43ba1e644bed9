//! HTTP and websocket front end. Every session lives in its own task that
//! owns the [`Session`] and applies commands one at a time.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, oneshot, watch};

use crate::protocol::{ClientMessage, SeatView, ServerEvent, WireAction};
use crate::session::{ServiceError, Session, SessionConfig};

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

type Reply<T> = oneshot::Sender<Result<T, ServiceError>>;

enum Command {
    Join { token: Option<String>, reply: Reply<ServerEvent> },
    Submit { token: String, action: WireAction, reply: Reply<ServerEvent> },
    View { token: String, reply: Reply<SeatView> },
    Events { token: String, since: usize, reply: Reply<(Vec<ServerEvent>, usize)> },
}

#[derive(Clone)]
struct SessionHandle {
    commands: mpsc::Sender<Command>,
    changes: watch::Receiver<u64>,
}

#[derive(Default)]
struct Registry {
    sessions: HashMap<String, SessionHandle>,
    by_key: HashMap<String, String>,
}

/// Shared server state: the session registry and where finished series go.
#[derive(Clone)]
pub struct AppState {
    registry: Arc<Mutex<Registry>>,
    log_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(log_dir: Option<PathBuf>) -> Self {
        AppState {
            registry: Arc::default(),
            log_dir,
        }
    }

    /// Creates a session, or returns the one already created under `key`.
    pub fn create_session(&self, config: SessionConfig, key: Option<String>) -> Result<String, ServiceError> {
        let mut reg = self.registry.lock().expect("registry lock");
        if let Some(id) = key.as_ref().and_then(|k| reg.by_key.get(k)) {
            return Ok(id.clone());
        }
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = Session::new(&id, config, now_ms(), self.log_dir.clone())?;
        let (tx, rx) = mpsc::channel(256);
        let (changes_tx, changes_rx) = watch::channel(0);
        tokio::spawn(drive(session, rx, changes_tx));
        reg.sessions.insert(
            id.clone(),
            SessionHandle {
                commands: tx,
                changes: changes_rx,
            },
        );
        if let Some(k) = key {
            reg.by_key.insert(k, id.clone());
        }
        Ok(id)
    }

    fn handle(&self, id: &str) -> Result<SessionHandle, ServiceError> {
        let reg = self.registry.lock().expect("registry lock");
        reg.sessions.get(id).cloned().ok_or(ServiceError::NotFound)
    }

    async fn ask<T>(&self, id: &str, make: impl FnOnce(Reply<T>) -> Command) -> Result<T, ServiceError> {
        let h = self.handle(id)?;
        let (tx, rx) = oneshot::channel();
        h.commands
            .send(make(tx))
            .await
            .map_err(|_| ServiceError::Internal("session task stopped".into()))?;
        rx.await
            .map_err(|_| ServiceError::Internal("session task stopped".into()))?
    }

    /// Applies one client message and returns the direct response.
    pub async fn call(&self, id: &str, token: Option<String>, msg: ClientMessage) -> Result<ServerEvent, ServiceError> {
        let token_or = |t: Option<String>| t.ok_or(ServiceError::Unauthorized);
        match msg {
            ClientMessage::Join { token: t, .. } => {
                let token = t.or(token);
                self.ask(id, |reply| Command::Join { token, reply }).await
            }
            ClientMessage::Action { kind, to } => {
                let token = token_or(token)?;
                let action = WireAction::send(kind, &to);
                self.ask(id, |reply| Command::Submit { token, action, reply }).await
            }
            ClientMessage::Abstain => {
                let token = token_or(token)?;
                let action = WireAction::abstain();
                self.ask(id, |reply| Command::Submit { token, action, reply }).await
            }
            ClientMessage::View => {
                let token = token_or(token)?;
                let view = self.ask(id, |reply| Command::View { token, reply }).await?;
                Ok(ServerEvent::State { view: Box::new(view) })
            }
        }
    }

    pub async fn events(&self, id: &str, token: &str, since: usize) -> Result<(Vec<ServerEvent>, usize), ServiceError> {
        let token = token.to_string();
        self.ask(id, |reply| Command::Events { token, since, reply }).await
    }

    /// Like [`AppState::events`], but waits up to `wait` for something new.
    pub async fn wait_events(
        &self,
        id: &str,
        token: &str,
        since: usize,
        wait: Duration,
    ) -> Result<(Vec<ServerEvent>, usize), ServiceError> {
        let mut changes = self.handle(id)?.changes;
        changes.borrow_and_update();
        let got = self.events(id, token, since).await?;
        if !got.0.is_empty() || wait.is_zero() {
            return Ok(got);
        }
        let _ = tokio::time::timeout(wait, changes.changed()).await;
        self.events(id, token, since).await
    }
}

enum Wake {
    Command(Command),
    Timer,
    Closed,
}

async fn drive(mut session: Session, mut commands: mpsc::Receiver<Command>, changes: watch::Sender<u64>) {
    loop {
        let wake = match session.deadline() {
            Some(d) => {
                let wait = Duration::from_millis(d.saturating_sub(now_ms()));
                tokio::select! {
                    c = commands.recv() => c.map_or(Wake::Closed, Wake::Command),
                    _ = tokio::time::sleep(wait) => Wake::Timer,
                }
            }
            None => commands.recv().await.map_or(Wake::Closed, Wake::Command),
        };
        let mut changed = false;
        match wake {
            Wake::Closed => return,
            Wake::Timer => {}
            Wake::Command(c) => changed = apply(&mut session, c),
        }
        loop {
            match session.tick(now_ms()) {
                Ok(true) => changed = true,
                Ok(false) => break,
                Err(e) => {
                    eprintln!("session {}: {e}", session.id());
                    break;
                }
            }
        }
        if changed {
            changes.send_modify(|v| *v += 1);
        }
    }
}

/// Runs one command; reports whether seat-visible state may have changed.
fn apply(session: &mut Session, command: Command) -> bool {
    let now = now_ms();
    match command {
        Command::Join { token, reply } => {
            let _ = reply.send(session.join(token.as_deref(), now));
            true
        }
        Command::Submit { token, action, reply } => {
            let r = session.submit(&token, action, now);
            let ok = r.is_ok();
            let _ = reply.send(r);
            ok
        }
        Command::View { token, reply } => {
            let _ = reply.send(session.view(&token));
            false
        }
        Command::Events { token, since, reply } => {
            let _ = reply.send(session.events_since(&token, since));
            false
        }
    }
}

fn status_of(e: &ServiceError) -> StatusCode {
    match e {
        ServiceError::NotFound => StatusCode::NOT_FOUND,
        ServiceError::Unauthorized => StatusCode::UNAUTHORIZED,
        ServiceError::SessionFull | ServiceError::TooLate | ServiceError::NotInRound => StatusCode::CONFLICT,
        ServiceError::RuleViolation(_) | ServiceError::UnknownPlayer(_) => StatusCode::UNPROCESSABLE_ENTITY,
        ServiceError::Config(_) | ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
        ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

struct ApiError(ServiceError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (status_of(&self.0), Json(self.0.to_event())).into_response()
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

fn bearer(headers: &HeaderMap) -> Option<String> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(|t| t.trim().to_string())
}

#[derive(Debug, Deserialize)]
struct CreateRequest {
    #[serde(flatten)]
    config: SessionConfig,
    #[serde(default)]
    idempotency_key: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub session: String,
}

async fn create(
    State(app): State<AppState>,
    headers: HeaderMap,
    Json(req): Json<CreateRequest>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let header_key = headers
        .get("idempotency-key")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    let session = app.create_session(req.config, req.idempotency_key.or(header_key))?;
    Ok((StatusCode::CREATED, Json(Created { session })))
}

async fn rpc(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Json(msg): Json<ClientMessage>,
) -> Result<Json<ServerEvent>, ApiError> {
    Ok(Json(app.call(&id, bearer(&headers), msg).await?))
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    #[serde(default)]
    since: usize,
    #[serde(default)]
    wait_ms: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EventBatch {
    pub events: Vec<ServerEvent>,
    pub next: usize,
}

async fn events(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(q): Query<EventsQuery>,
) -> Result<Json<EventBatch>, ApiError> {
    let token = bearer(&headers).ok_or(ServiceError::Unauthorized)?;
    let wait = Duration::from_millis(q.wait_ms.min(30_000));
    let (events, next) = app.wait_events(&id, &token, q.since, wait).await?;
    Ok(Json(EventBatch { events, next }))
}

async fn view(State(app): State<AppState>, Path(id): Path<String>, headers: HeaderMap) -> Result<Json<ServerEvent>, ApiError> {
    Ok(Json(app.call(&id, bearer(&headers), ClientMessage::View).await?))
}

async fn ws_upgrade(State(app): State<AppState>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| ws_session(socket, app))
}

async fn send_event(socket: &mut WebSocket, event: &ServerEvent) -> bool {
    let line = serde_json::to_string(event).expect("events serialize");
    socket.send(WsMessage::Text(line.into())).await.is_ok()
}

fn parse_lines(text: &str) -> Vec<Result<ClientMessage, ServiceError>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| ServiceError::BadRequest(e.to_string())))
        .collect()
}

/// First frame must be `join`; afterwards seat events are pushed as they
/// appear and every client line gets a direct response.
async fn ws_session(mut socket: WebSocket, app: AppState) {
    let (id, token) = 'join: loop {
        let Some(Ok(frame)) = socket.recv().await else {
            return;
        };
        let WsMessage::Text(text) = frame else {
            continue;
        };
        for msg in parse_lines(text.as_str()) {
            let reply = match msg {
                Ok(ClientMessage::Join { session, token }) => {
                    app.call(&session, None, ClientMessage::Join { session: session.clone(), token }).await
                }
                Ok(_) => Err(ServiceError::Unauthorized),
                Err(e) => Err(e),
            };
            let ev = reply.unwrap_or_else(|e| e.to_event());
            if !send_event(&mut socket, &ev).await {
                return;
            }
            if let ServerEvent::Joined { session, token, .. } = ev {
                break 'join (session, token);
            }
        }
    };
    let Ok(mut changes) = app.handle(&id).map(|h| h.changes) else {
        return;
    };
    let mut cursor = 0;
    loop {
        changes.borrow_and_update();
        match app.events(&id, &token, cursor).await {
            Ok((events, next)) => {
                for e in &events {
                    if !send_event(&mut socket, e).await {
                        return;
                    }
                }
                cursor = next;
            }
            Err(_) => return,
        }
        tokio::select! {
            frame = socket.recv() => {
                let Some(Ok(frame)) = frame else { return };
                match frame {
                    WsMessage::Text(text) => {
                        for msg in parse_lines(text.as_str()) {
                            let reply = match msg {
                                Ok(m) => app.call(&id, Some(token.clone()), m).await,
                                Err(e) => Err(e),
                            };
                            let ev = reply.unwrap_or_else(|e| e.to_event());
                            if !send_event(&mut socket, &ev).await {
                                return;
                            }
                        }
                    }
                    WsMessage::Close(_) => return,
                    _ => {}
                }
            }
            r = changes.changed() => {
                if r.is_err() {
                    return;
                }
            }
        }
    }
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/rpc", post(rpc))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/view", get(view))
        .route("/ws", get(ws_upgrade))
        .with_state(app)
}

/// Serves until the listener fails. Returns the bound address through `bound`.
pub async fn serve(addr: SocketAddr, app: AppState, bound: Option<oneshot::Sender<SocketAddr>>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    if let Some(tx) = bound {
        let _ = tx.send(listener.local_addr()?);
    }
    axum::serve(listener, router(app)).await
}
