//! A session as a plain state machine. Time is passed in as Unix
//! milliseconds so that every transition is deterministic and testable; the
//! server drives it from a single task per session.

use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use expert_game::agent::{AgentConfig, BayesAgent};
use expert_game::log::write_series;
use expert_game::sim::{
    agent_rng, deal_game, derive_seed, replica_seed, SeriesConfig, DEFAULT_ROUND_JITTER,
    DEFAULT_ROUND_MEAN,
};
use expert_game::{Action, GameError, GameLog, GameState, MessageType, Outgoing, PlayerId};

use crate::names;
use crate::protocol::{KnownPlayer, SeatView, ServerEvent, Status, WireAction, WireKind, WireMessage};

pub const DEFAULT_DEADLINE_MS: u64 = 60_000;
pub const DEFAULT_INTERMISSION_MS: u64 = 3_000;

/// Stream index for naming and seat placement, apart from the game streams.
const SEATING_STREAM: u64 = 0x5ea7;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ServiceError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no such session")]
    NotFound,
    #[error("every seat is taken")]
    SessionFull,
    #[error("unknown or missing credential")]
    Unauthorized,
    #[error("no round is open")]
    NotInRound,
    #[error("the round deadline has passed")]
    TooLate,
    #[error("no player is called {0:?}")]
    UnknownPlayer(String),
    #[error("{0}")]
    RuleViolation(String),
    #[error("malformed message: {0}")]
    BadRequest(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Config(_) => "config",
            ServiceError::NotFound => "not_found",
            ServiceError::SessionFull => "session_full",
            ServiceError::Unauthorized => "unauthorized",
            ServiceError::NotInRound => "not_in_round",
            ServiceError::TooLate => "too_late",
            ServiceError::UnknownPlayer(_) => "unknown_player",
            ServiceError::RuleViolation(_) => "rule_violation",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Internal(_) => "internal",
        }
    }

    pub fn to_event(&self) -> ServerEvent {
        ServerEvent::Error {
            code: self.code().to_string(),
            reason: self.to_string(),
        }
    }
}

impl From<GameError> for ServiceError {
    fn from(e: GameError) -> Self {
        match e {
            GameError::RuleViolation(rule) => ServiceError::RuleViolation(rule.to_string()),
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub n_players: usize,
    pub n_games: usize,
    pub round_mean: u32,
    pub round_jitter: u32,
    /// Seats held by people; the rest are agents.
    pub humans: usize,
    pub deadline_ms: u64,
    /// Pause between games.
    pub intermission_ms: u64,
    #[serde(alias = "personality")]
    pub agent: AgentConfig,
    /// Fixed seed for reproducible sessions; random when absent.
    pub seed: Option<u64>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            n_players: 8,
            n_games: 4,
            round_mean: DEFAULT_ROUND_MEAN,
            round_jitter: DEFAULT_ROUND_JITTER,
            humans: 1,
            deadline_ms: DEFAULT_DEADLINE_MS,
            intermission_ms: DEFAULT_INTERMISSION_MS,
            agent: AgentConfig::default(),
            seed: None,
        }
    }
}

impl SessionConfig {
    pub fn series(&self) -> SeriesConfig {
        SeriesConfig {
            n_players: self.n_players,
            n_games: self.n_games,
            round_mean: self.round_mean,
            round_jitter: self.round_jitter,
            agent: self.agent.clone(),
            master_seed: self.seed.unwrap_or(0),
            n_replicas: 1,
        }
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        self.series()
            .validate()
            .map_err(|e| ServiceError::Config(e.to_string()))?;
        if self.humans > self.n_players {
            return Err(ServiceError::Config(format!(
                "{} human seats exceed {} players",
                self.humans, self.n_players
            )));
        }
        if self.deadline_ms == 0 {
            return Err(ServiceError::Config("deadline_ms must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum SeatKind {
    Human { token: Option<String> },
    Agent(Box<BayesAgent>),
}

#[derive(Debug, Clone)]
struct Seat {
    name: String,
    kind: SeatKind,
    events: Vec<ServerEvent>,
    submitted: Option<WireAction>,
    total_score: u32,
}

/// Live game plus the per-seat random streams of its agents.
#[derive(Debug, Clone)]
struct Running {
    state: GameState,
    rngs: Vec<ChaCha8Rng>,
}

#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    config: SessionConfig,
    series_seed: u64,
    seats: Vec<Seat>,
    status: Status,
    game: usize,
    running: Option<Running>,
    /// Round deadline, or the end of the intermission between games.
    deadline: Option<u64>,
    logs: Vec<GameLog>,
    log_dir: Option<PathBuf>,
    persisted: Option<PathBuf>,
}

impl Session {
    /// A new session in the lobby, or already playing when every seat is an agent.
    pub fn new(id: &str, config: SessionConfig, now: u64, log_dir: Option<PathBuf>) -> Result<Self, ServiceError> {
        config.validate()?;
        let root = config.seed.unwrap_or_else(|| rand::rng().random());
        let series_seed = replica_seed(root, 0);
        let mut seating = ChaCha8Rng::seed_from_u64(derive_seed(root, SEATING_STREAM, 0));
        let names = names::draw(config.n_players, &mut seating);
        let humans: Vec<usize> = sample(&mut seating, config.n_players, config.humans).into_vec();

        let series = config.series();
        let mut seats = Vec::with_capacity(config.n_players);
        for (i, name) in names.into_iter().enumerate() {
            let kind = if humans.contains(&i) {
                SeatKind::Human { token: None }
            } else {
                let agent = BayesAgent::new(PlayerId(i), config.n_players, &series.agent)
                    .map_err(|e| ServiceError::Config(e.to_string()))?;
                SeatKind::Agent(Box::new(agent))
            };
            seats.push(Seat {
                name,
                kind,
                events: Vec::new(),
                submitted: None,
                total_score: 0,
            });
        }
        let mut s = Session {
            id: id.to_string(),
            config,
            series_seed,
            seats,
            status: Status::Lobby,
            game: 0,
            running: None,
            deadline: None,
            logs: Vec::new(),
            log_dir,
            persisted: None,
        };
        if s.config.humans == 0 {
            s.start_game(now)?;
        }
        Ok(s)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn deadline(&self) -> Option<u64> {
        self.deadline
    }

    pub fn names(&self) -> Vec<String> {
        self.seats.iter().map(|s| s.name.clone()).collect()
    }

    /// Finished games so far.
    pub fn logs(&self) -> &[GameLog] {
        &self.logs
    }

    /// Where the finished series was written, if it was.
    pub fn persisted(&self) -> Option<&PathBuf> {
        self.persisted.as_ref()
    }

    /// Server-side game state; never sent to clients.
    pub fn game_state(&self) -> Option<&GameState> {
        self.running.as_ref().map(|r| &r.state)
    }

    pub fn seat_of_name(&self, name: &str) -> Option<PlayerId> {
        self.seats.iter().position(|s| s.name == name).map(PlayerId)
    }

    fn seat_of_token(&self, token: &str) -> Result<usize, ServiceError> {
        self.seats
            .iter()
            .position(|s| matches!(&s.kind, SeatKind::Human { token: Some(t) } if t == token))
            .ok_or(ServiceError::Unauthorized)
    }

    fn is_human(&self, seat: usize) -> bool {
        matches!(self.seats[seat].kind, SeatKind::Human { .. })
    }

    fn bound(&self) -> usize {
        self.seats
            .iter()
            .filter(|s| matches!(s.kind, SeatKind::Human { token: Some(_) }))
            .count()
    }

    fn push(&mut self, seat: usize, event: ServerEvent) {
        if self.is_human(seat) {
            self.seats[seat].events.push(event);
        }
    }

    fn broadcast_lobby(&mut self) {
        let event = ServerEvent::LobbyState {
            session: self.id.clone(),
            players: self.names(),
            seats: self.config.humans,
            bound: self.bound(),
            status: self.status,
        };
        for i in 0..self.seats.len() {
            if matches!(self.seats[i].kind, SeatKind::Human { token: Some(_) }) {
                self.push(i, event.clone());
            }
        }
    }

    /// Binds a free human seat, or reattaches the seat owning `token`.
    pub fn join(&mut self, token: Option<&str>, now: u64) -> Result<ServerEvent, ServiceError> {
        if let Some(t) = token {
            if let Ok(seat) = self.seat_of_token(t) {
                return Ok(self.joined(seat, t));
            }
        }
        let free = self
            .seats
            .iter()
            .position(|s| matches!(s.kind, SeatKind::Human { token: None }));
        let Some(seat) = free else {
            return Err(ServiceError::SessionFull);
        };
        if self.status != Status::Lobby {
            return Err(ServiceError::SessionFull);
        }
        let new_token = uuid::Uuid::new_v4().simple().to_string();
        self.seats[seat].kind = SeatKind::Human {
            token: Some(new_token.clone()),
        };
        self.broadcast_lobby();
        if self.bound() == self.config.humans {
            self.start_game(now)?;
        }
        Ok(self.joined(seat, &new_token))
    }

    fn joined(&self, seat: usize, token: &str) -> ServerEvent {
        ServerEvent::Joined {
            session: self.id.clone(),
            token: token.to_string(),
            your_name: self.seats[seat].name.clone(),
        }
    }

    fn start_game(&mut self, now: u64) -> Result<(), ServiceError> {
        let deal = deal_game(&self.config.series(), self.series_seed, self.game)
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
        let state = GameState::new(deal.assignment.clone(), deal.round_limit)?;
        let rngs = (0..self.seats.len()).map(|i| agent_rng(deal.seed, i)).collect();
        for seat in &mut self.seats {
            if let SeatKind::Agent(agent) = &mut seat.kind {
                agent.start_game();
            }
        }
        self.running = Some(Running { state, rngs });
        let players = self.names();
        for i in 0..self.seats.len() {
            let event = ServerEvent::GameStart {
                game: self.game,
                n_games: self.config.n_games,
                your_name: self.seats[i].name.clone(),
                your_expertise: deal.assignment.expertise_of(PlayerId(i)).0,
                your_task: deal.assignment.task_of(PlayerId(i)).0,
                approx_rounds: self.config.round_mean,
                players: players.clone(),
            };
            self.push(i, event);
        }
        self.begin_round(now)
    }

    fn begin_round(&mut self, now: u64) -> Result<(), ServiceError> {
        self.status = Status::InRound;
        let deadline = now.saturating_add(self.config.deadline_ms);
        self.deadline = Some(deadline);
        for seat in &mut self.seats {
            seat.submitted = None;
        }
        // Agents decide first and stage through the same path as people.
        for i in 0..self.seats.len() {
            let running = self.running.as_mut().expect("a game is running");
            if let SeatKind::Agent(agent) = &mut self.seats[i].kind {
                let view = running.state.view(PlayerId(i))?;
                let action = agent.act(&view, &mut running.rngs[i]);
                let wire = self.to_wire(action);
                self.stage(i, wire)?;
            }
        }
        let (game, round) = (self.game, self.current_round());
        for i in 0..self.seats.len() {
            if !self.is_human(i) {
                continue;
            }
            self.push(i, ServerEvent::RoundStart { game, round, deadline });
            let actions = self.legal_actions(i)?;
            self.push(i, ServerEvent::LegalActions { game, round, actions });
        }
        Ok(())
    }

    fn current_round(&self) -> u32 {
        self.running.as_ref().map_or(0, |r| r.state.round())
    }

    fn to_wire(&self, action: Action) -> WireAction {
        match action {
            Action::Abstain => WireAction::abstain(),
            Action::Send(out) => WireAction::send(out.kind, &self.seats[out.to.0].name),
        }
    }

    fn action_of(&self, action: &WireAction) -> Result<Action, ServiceError> {
        let kind = match action.kind {
            WireKind::Abstain => return Ok(Action::Abstain),
            WireKind::Q => MessageType::Q,
            WireKind::C => MessageType::C,
            WireKind::R => MessageType::R,
            WireKind::N => MessageType::N,
        };
        let name = action
            .to
            .as_deref()
            .ok_or_else(|| ServiceError::BadRequest("a message needs a receiver".into()))?;
        let to = self
            .seat_of_name(name)
            .ok_or_else(|| ServiceError::UnknownPlayer(name.to_string()))?;
        Ok(Action::Send(Outgoing { kind, to }))
    }

    fn stage(&mut self, seat: usize, action: WireAction) -> Result<(), ServiceError> {
        let parsed = self.action_of(&action)?;
        let running = self.running.as_mut().ok_or(ServiceError::NotInRound)?;
        running.state.stage_action(PlayerId(seat), parsed)?;
        self.seats[seat].submitted = Some(action);
        Ok(())
    }

    fn legal_actions(&self, seat: usize) -> Result<Vec<WireAction>, ServiceError> {
        let Some(running) = &self.running else {
            return Ok(Vec::new());
        };
        if self.status != Status::InRound {
            return Ok(Vec::new());
        }
        let mut out: Vec<WireAction> = running
            .state
            .legal_messages(PlayerId(seat))?
            .iter()
            .map(|m| WireAction::send(m.kind, &self.seats[m.to.0].name))
            .collect();
        out.push(WireAction::abstain());
        Ok(out)
    }

    /// Stages a seat's choice for the open round; a later call replaces it.
    pub fn submit(&mut self, token: &str, action: WireAction, now: u64) -> Result<ServerEvent, ServiceError> {
        let seat = self.seat_of_token(token)?;
        if self.status != Status::InRound {
            return Err(ServiceError::NotInRound);
        }
        if self.deadline.is_some_and(|d| now > d) {
            return Err(ServiceError::TooLate);
        }
        self.stage(seat, action.clone())?;
        Ok(ServerEvent::Ack {
            round: self.current_round(),
            action,
        })
    }

    /// True when the open round may be resolved, or the intermission is over.
    pub fn ready(&self, now: u64) -> bool {
        match self.status {
            Status::InRound => {
                self.deadline.is_some_and(|d| now >= d)
                    || (0..self.seats.len()).all(|i| !self.is_human(i) || self.seats[i].submitted.is_some())
            }
            Status::BetweenGames => self.deadline.is_some_and(|d| now >= d),
            Status::Lobby | Status::Done => false,
        }
    }

    /// Performs the next due transition. Returns whether anything happened.
    pub fn tick(&mut self, now: u64) -> Result<bool, ServiceError> {
        if !self.ready(now) {
            return Ok(false);
        }
        match self.status {
            Status::InRound => self.advance_round(now)?,
            Status::BetweenGames => self.start_game(now)?,
            Status::Lobby | Status::Done => {}
        }
        Ok(true)
    }

    /// Delivers the round. Seats without a submission abstain.
    pub fn advance_round(&mut self, now: u64) -> Result<(), ServiceError> {
        if self.status != Status::InRound {
            return Err(ServiceError::NotInRound);
        }
        let running = self.running.as_mut().expect("a game is running");
        let outcome = running.state.resolve_round()?;
        let game = self.game;
        for i in 0..self.seats.len() {
            let inbox: Vec<WireMessage> = outcome
                .delivered
                .iter()
                .filter(|m| m.to == PlayerId(i))
                .map(|m| self.wire_message(m))
                .collect();
            self.push(i, ServerEvent::Delivery { game, round: outcome.round, inbox });
        }
        for p in &outcome.newly_scored {
            self.seats[p.0].total_score += 1;
            let total_score = self.seats[p.0].total_score;
            self.push(p.0, ServerEvent::Score { game, round: outcome.round, total_score });
        }
        if outcome.finished {
            self.finish_game(now)
        } else {
            self.begin_round(now)
        }
    }

    fn wire_message(&self, m: &expert_game::Message) -> WireMessage {
        WireMessage {
            kind: m.kind,
            from: self.seats[m.from.0].name.clone(),
            round: m.round,
            expert: m.payload.map(|p| self.seats[p.0].name.clone()),
        }
    }

    fn finish_game(&mut self, now: u64) -> Result<(), ServiceError> {
        let running = self.running.as_ref().expect("a game is running");
        let log = GameLog::from_state(self.game, &running.state);
        let scored: Vec<bool> = (0..self.seats.len()).map(|i| running.state.is_scored(PlayerId(i))).collect();
        for seat in &mut self.seats {
            if let SeatKind::Agent(agent) = &mut seat.kind {
                agent.end_game(&log).map_err(|e| ServiceError::Internal(e.to_string()))?;
            }
            seat.submitted = None;
        }
        for i in 0..self.seats.len() {
            let event = ServerEvent::GameEnd {
                game: self.game,
                rounds: log.rounds,
                scored: scored[i],
                total_score: self.seats[i].total_score,
            };
            self.push(i, event);
        }
        self.logs.push(log);
        self.game += 1;
        if self.game < self.config.n_games {
            self.status = Status::BetweenGames;
            self.deadline = Some(now.saturating_add(self.config.intermission_ms));
            return Ok(());
        }
        self.status = Status::Done;
        self.deadline = None;
        self.game = self.config.n_games - 1;
        for i in 0..self.seats.len() {
            let event = ServerEvent::SeriesEnd {
                games: self.config.n_games,
                total_score: self.seats[i].total_score,
            };
            self.push(i, event);
        }
        self.persist()
    }

    fn persist(&mut self) -> Result<(), ServiceError> {
        let Some(dir) = &self.log_dir else {
            return Ok(());
        };
        let io = |e: std::io::Error| ServiceError::Internal(e.to_string());
        fs::create_dir_all(dir).map_err(io)?;
        let path = dir.join(format!("{}.jsonl", self.id));
        let f = fs::File::create(&path).map_err(io)?;
        write_series(&self.logs, BufWriter::new(f)).map_err(|e| ServiceError::Internal(e.to_string()))?;
        self.persisted = Some(path);
        Ok(())
    }

    /// Everything seat `token` may currently see.
    pub fn view(&self, token: &str) -> Result<SeatView, ServiceError> {
        let seat = self.seat_of_token(token)?;
        let me = PlayerId(seat);
        let mut v = SeatView {
            session: self.id.clone(),
            name: self.seats[seat].name.clone(),
            status: self.status,
            players: self.names(),
            game: self.game,
            n_games: self.config.n_games,
            round: None,
            approx_rounds: self.config.round_mean,
            deadline: None,
            expertise: None,
            task: None,
            scored: false,
            total_score: self.seats[seat].total_score,
            inbox: Vec::new(),
            known: Vec::new(),
            known_expert: None,
            legal: self.legal_actions(seat)?,
            submitted: self.seats[seat].submitted.clone(),
        };
        if let Some(running) = &self.running {
            let pv = running.state.view(me)?;
            if self.status == Status::InRound {
                v.round = Some(pv.round);
                v.deadline = self.deadline;
            }
            v.expertise = Some(pv.expertise.0);
            v.task = Some(pv.task.0);
            v.scored = pv.scored;
            v.inbox = pv.inbox.iter().map(|m| self.wire_message(m)).collect();
            v.known_expert = pv.known_expert.map(|p| self.seats[p.0].name.clone());
            let mut known: Vec<usize> = pv
                .knowledge
                .known_expertise
                .keys()
                .chain(pv.knowledge.known_task.keys())
                .map(|p| p.0)
                .filter(|&p| p != seat)
                .collect();
            known.sort_unstable();
            known.dedup();
            v.known = known
                .into_iter()
                .map(|p| KnownPlayer {
                    name: self.seats[p].name.clone(),
                    expertise: pv.knowledge.known_expertise.get(&PlayerId(p)).map(|e| e.0),
                    task: pv.knowledge.known_task.get(&PlayerId(p)).map(|t| t.0),
                })
                .collect();
        }
        Ok(v)
    }

    /// Events queued for seat `token` from position `since` on, and the next cursor.
    pub fn events_since(&self, token: &str, since: usize) -> Result<(Vec<ServerEvent>, usize), ServiceError> {
        let seat = self.seat_of_token(token)?;
        let all = &self.seats[seat].events;
        let from = since.min(all.len());
        Ok((all[from..].to_vec(), all.len()))
    }
}
