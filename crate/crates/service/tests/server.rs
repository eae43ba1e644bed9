use std::net::SocketAddr;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::sync::oneshot;
use tokio_tungstenite::tungstenite::Message;

use expert_game::log::read_series;
use expert_game_service::server::{serve, AppState, Created, EventBatch};
use expert_game_service::{ServerEvent, WireKind};

async fn start(log_dir: &std::path::Path) -> SocketAddr {
    let app = AppState::new(Some(log_dir.to_path_buf()));
    let (tx, rx) = oneshot::channel();
    tokio::spawn(serve("127.0.0.1:0".parse().unwrap(), app, Some(tx)));
    rx.await.unwrap()
}

fn small_game(key: &str) -> Value {
    json!({
        "n_players": 4,
        "humans": 1,
        "n_games": 2,
        "round_mean": 4,
        "round_jitter": 1,
        "deadline_ms": 5000,
        "intermission_ms": 0,
        "seed": 99,
        "idempotency_key": key,
    })
}

async fn create(client: &reqwest::Client, addr: SocketAddr, body: &Value) -> String {
    let resp = client.post(format!("http://{addr}/sessions")).json(body).send().await.unwrap();
    assert_eq!(resp.status(), 201);
    resp.json::<Created>().await.unwrap().session
}

async fn wait_for_file(path: std::path::PathBuf) -> Vec<expert_game::GameLog> {
    for _ in 0..200 {
        if let Ok(f) = std::fs::File::open(&path) {
            if let Ok(games) = read_series(std::io::BufReader::new(f)) {
                return games;
            }
        }
        tokio::time::sleep(Duration::from_millis(25)).await;
    }
    panic!("{} never appeared", path.display());
}

#[tokio::test]
async fn creation_is_idempotent_and_errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let addr = start(dir.path()).await;
    let client = reqwest::Client::new();
    let a = create(&client, addr, &small_game("k1")).await;
    let b = create(&client, addr, &small_game("k1")).await;
    let c = create(&client, addr, &small_game("k2")).await;
    assert_eq!(a, b);
    assert_ne!(a, c);

    let resp = client
        .post(format!("http://{addr}/sessions"))
        .header("Idempotency-Key", "k1")
        .json(&json!({}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.json::<Created>().await.unwrap().session, a);

    let bad = client.post(format!("http://{addr}/sessions")).json(&json!({"n_players": 2})).send().await.unwrap();
    assert_eq!(bad.status(), 400);
    let body: Value = bad.json().await.unwrap();
    assert_eq!(body["event"], "error");
    assert_eq!(body["code"], "config");

    let missing = client
        .post(format!("http://{addr}/sessions/nope/rpc"))
        .json(&json!({"op": "abstain"}))
        .bearer_auth("x")
        .send()
        .await
        .unwrap();
    assert_eq!(missing.status(), 404);
    let unauth = client.get(format!("http://{addr}/sessions/{a}/view")).bearer_auth("x").send().await.unwrap();
    assert_eq!(unauth.status(), 401);
}

#[tokio::test]
async fn websocket_player_finishes_a_series() {
    let dir = tempfile::tempdir().unwrap();
    let addr = start(dir.path()).await;
    let client = reqwest::Client::new();
    let id = create(&client, addr, &small_game("ws")).await;

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
    // Anything before join is refused.
    ws.send(Message::text(r#"{"op":"abstain"}"#)).await.unwrap();
    ws.send(Message::text(json!({"op": "join", "session": id}).to_string())).await.unwrap();

    let mut seen = Vec::new();
    let mut me = String::new();
    let mut tried_illegal = false;
    let mut errors = Vec::new();
    let result = tokio::time::timeout(Duration::from_secs(60), async {
        while let Some(frame) = ws.next().await {
            let Message::Text(text) = frame.unwrap() else { continue };
            for line in text.as_str().lines() {
                let ev: ServerEvent = serde_json::from_str(line).unwrap();
                match &ev {
                    ServerEvent::Joined { your_name, .. } => me = your_name.clone(),
                    ServerEvent::GameStart { players, your_name, .. } => {
                        assert_eq!(players.len(), 4);
                        assert_eq!(*your_name, me);
                    }
                    ServerEvent::LegalActions { actions, .. } => {
                        assert!(actions.iter().all(|a| a.to.as_deref() != Some(me.as_str())));
                        if !tried_illegal {
                            // A confirmation is never legal in the first round.
                            tried_illegal = true;
                            let to = actions[0].to.clone().unwrap();
                            ws.send(Message::text(json!({"op": "action", "type": "C", "to": to}).to_string())).await.unwrap();
                        }
                        // Prefer a confirmation, then a reply, then a request.
                        let pick = [WireKind::C, WireKind::R, WireKind::N, WireKind::Q, WireKind::Abstain]
                            .iter()
                            .find_map(|k| actions.iter().find(|a| a.kind == *k))
                            .unwrap();
                        let line = match pick.kind {
                            WireKind::Abstain => json!({"op": "abstain"}),
                            k => json!({"op": "action", "type": k, "to": pick.to}),
                        };
                        ws.send(Message::text(line.to_string())).await.unwrap();
                    }
                    ServerEvent::Error { code, .. } => errors.push(code.clone()),
                    _ => {}
                }
                let done = matches!(ev, ServerEvent::SeriesEnd { .. });
                seen.push(ev);
                if done {
                    return;
                }
            }
        }
    })
    .await;
    assert!(result.is_ok(), "series did not finish; saw {} events", seen.len());
    ws.close(None).await.ok();

    assert_eq!(errors, ["unauthorized", "rule_violation"]);
    let count = |f: fn(&ServerEvent) -> bool| seen.iter().filter(|e| f(e)).count();
    assert_eq!(count(|e| matches!(e, ServerEvent::GameStart { .. })), 2);
    assert_eq!(count(|e| matches!(e, ServerEvent::GameEnd { .. })), 2);
    let rounds = count(|e| matches!(e, ServerEvent::RoundStart { .. }));
    assert_eq!(rounds, count(|e| matches!(e, ServerEvent::Delivery { .. })));
    assert_eq!(rounds, count(|e| matches!(e, ServerEvent::Ack { .. })));

    let games = wait_for_file(dir.path().join(format!("{id}.jsonl"))).await;
    assert_eq!(games.len(), 2);
    let total: u32 = games.iter().map(|g| g.rounds).sum();
    assert_eq!(total as usize, rounds);
    for g in &games {
        g.replay().unwrap();
    }
}

#[tokio::test]
async fn http_fallback_player_finishes_a_series() {
    let dir = tempfile::tempdir().unwrap();
    let addr = start(dir.path()).await;
    let client = reqwest::Client::new();
    let id = create(&client, addr, &small_game("http")).await;
    let rpc = format!("http://{addr}/sessions/{id}/rpc");

    let joined: ServerEvent = client.post(&rpc).json(&json!({"op": "join", "session": id})).send().await.unwrap().json().await.unwrap();
    let ServerEvent::Joined { token, .. } = joined else { panic!("{joined:?}") };

    let mut since = 0;
    let mut acted = 0;
    let finished = tokio::time::timeout(Duration::from_secs(60), async {
        loop {
            let batch: EventBatch = client
                .get(format!("http://{addr}/sessions/{id}/events?since={since}&wait_ms=2000"))
                .bearer_auth(&token)
                .send()
                .await
                .unwrap()
                .json()
                .await
                .unwrap();
            since = batch.next;
            for ev in batch.events {
                match ev {
                    ServerEvent::LegalActions { actions, .. } => {
                        let a = &actions[acted % actions.len()];
                        let body = match a.kind {
                            WireKind::Abstain => json!({"op": "abstain"}),
                            k => json!({"op": "action", "type": k, "to": a.to}),
                        };
                        let resp = client.post(&rpc).bearer_auth(&token).json(&body).send().await.unwrap();
                        assert_eq!(resp.status(), 200);
                        acted += 1;
                    }
                    ServerEvent::SeriesEnd { .. } => return,
                    _ => {}
                }
            }
        }
    })
    .await;
    assert!(finished.is_ok());
    assert!(acted > 0);

    let view: Value = client.get(format!("http://{addr}/sessions/{id}/view")).bearer_auth(&token).send().await.unwrap().json().await.unwrap();
    assert_eq!(view["event"], "state");
    assert_eq!(view["view"]["status"], "done");
    let late = client.post(&rpc).bearer_auth(&token).json(&json!({"op": "abstain"})).send().await.unwrap();
    assert_eq!(late.status(), 409);

    let games = wait_for_file(dir.path().join(format!("{id}.jsonl"))).await;
    assert_eq!(games.len(), 2);
}
