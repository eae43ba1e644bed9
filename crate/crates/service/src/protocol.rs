//! Wire format. One JSON object per line (or per websocket text frame);
//! every player reference is a virtual identity name.

use serde::{Deserialize, Serialize};

use expert_game::MessageType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WireKind {
    Q,
    C,
    R,
    N,
    #[serde(rename = "abstain")]
    Abstain,
}

impl From<MessageType> for WireKind {
    fn from(k: MessageType) -> Self {
        match k {
            MessageType::Q => WireKind::Q,
            MessageType::C => WireKind::C,
            MessageType::R => WireKind::R,
            MessageType::N => WireKind::N,
        }
    }
}

/// A choice offered to (or made by) a seat: `{"type":"Q","to":"Bea"}` or
/// `{"type":"abstain"}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WireAction {
    #[serde(rename = "type")]
    pub kind: WireKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
}

impl WireAction {
    pub fn send(kind: MessageType, to: &str) -> Self {
        WireAction {
            kind: kind.into(),
            to: Some(to.to_string()),
        }
    }

    pub fn abstain() -> Self {
        WireAction {
            kind: WireKind::Abstain,
            to: None,
        }
    }
}

/// A delivered message as its receiver sees it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireMessage {
    #[serde(rename = "type")]
    pub kind: MessageType,
    pub from: String,
    pub round: u32,
    /// For referrals, the name of the receiver's expert.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Lobby,
    InRound,
    BetweenGames,
    Done,
}

/// What a seat has learned about another seat in the current game.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnownPlayer {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expertise: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<usize>,
}

/// Snapshot of everything one seat may see.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeatView {
    pub session: String,
    pub name: String,
    pub status: Status,
    pub players: Vec<String>,
    /// Zero-based index of the current (or last) game.
    pub game: usize,
    pub n_games: usize,
    pub round: Option<u32>,
    pub approx_rounds: u32,
    /// Unix time in milliseconds.
    pub deadline: Option<u64>,
    pub expertise: Option<usize>,
    pub task: Option<usize>,
    pub scored: bool,
    pub total_score: u32,
    pub inbox: Vec<WireMessage>,
    pub known: Vec<KnownPlayer>,
    pub known_expert: Option<String>,
    pub legal: Vec<WireAction>,
    pub submitted: Option<WireAction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ClientMessage {
    Join {
        session: String,
        #[serde(default)]
        token: Option<String>,
    },
    Action {
        #[serde(rename = "type")]
        kind: MessageType,
        to: String,
    },
    Abstain,
    /// Asks for a fresh [`SeatView`].
    View,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ServerEvent {
    /// Reply to `join`; carries the seat credential.
    Joined {
        session: String,
        token: String,
        your_name: String,
    },
    LobbyState {
        session: String,
        players: Vec<String>,
        seats: usize,
        bound: usize,
        status: Status,
    },
    GameStart {
        game: usize,
        n_games: usize,
        your_name: String,
        your_expertise: usize,
        your_task: usize,
        approx_rounds: u32,
        players: Vec<String>,
    },
    RoundStart {
        game: usize,
        round: u32,
        deadline: u64,
    },
    Delivery {
        game: usize,
        round: u32,
        inbox: Vec<WireMessage>,
    },
    LegalActions {
        game: usize,
        round: u32,
        actions: Vec<WireAction>,
    },
    Score {
        game: usize,
        round: u32,
        total_score: u32,
    },
    GameEnd {
        game: usize,
        rounds: u32,
        scored: bool,
        total_score: u32,
    },
    SeriesEnd {
        games: usize,
        total_score: u32,
    },
    Ack {
        round: u32,
        action: WireAction,
    },
    State {
        view: Box<SeatView>,
    },
    Error {
        code: String,
        reason: String,
    },
}
