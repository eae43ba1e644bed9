//! JSON-lines game log.
//!
//! One event per line, tagged by `event`:
//!
//! ```text
//! {"event":"assignment","game":0,"n_players":8,"round_limit":15,"expertise":[..],"task":[..]}
//! {"event":"message","game":0,"type":"Q","from":3,"to":5,"round":1}
//! {"event":"message","game":0,"type":"R","from":5,"to":3,"round":4,"payload":1}
//! {"event":"score","game":0,"player":3,"round":6}
//! {"event":"game_end","game":0,"rounds":15}
//! ```
//!
//! A series file is the concatenation of its games' events.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{
    Action, Assignment, GameError, GameState, Message, MessageType, PlayerId, ScoreEvent,
};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("game {game}: replay failed: {source}")]
    Replay {
        game: usize,
        #[source]
        source: GameError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Assignment {
        game: usize,
        n_players: usize,
        round_limit: u32,
        #[serde(flatten)]
        assignment: Assignment,
    },
    Message {
        game: usize,
        #[serde(flatten)]
        message: Message,
    },
    Score {
        game: usize,
        player: PlayerId,
        round: u32,
    },
    GameEnd {
        game: usize,
        rounds: u32,
    },
}

/// The append-only record of one finished game.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameLog {
    pub game: usize,
    pub assignment: Assignment,
    pub round_limit: u32,
    pub messages: Vec<Message>,
    pub scores: Vec<ScoreEvent>,
    /// Rounds actually played.
    pub rounds: u32,
}

impl GameLog {
    pub fn from_state(game: usize, state: &GameState) -> Self {
        GameLog {
            game,
            assignment: state.assignment().clone(),
            round_limit: state.config().round_limit,
            messages: state.history().to_vec(),
            scores: state.scores().to_vec(),
            rounds: state.round() - 1,
        }
    }

    pub fn n_players(&self) -> usize {
        self.assignment.n_players()
    }

    pub fn events(&self) -> Vec<LogEvent> {
        let mut out = Vec::with_capacity(self.messages.len() + self.scores.len() + 2);
        out.push(LogEvent::Assignment {
            game: self.game,
            n_players: self.n_players(),
            round_limit: self.round_limit,
            assignment: self.assignment.clone(),
        });
        let mut scores = self.scores.iter().peekable();
        for (i, m) in self.messages.iter().enumerate() {
            out.push(LogEvent::Message {
                game: self.game,
                message: *m,
            });
            // Scores follow the last message of the round that produced them.
            let round_done = self.messages.get(i + 1).is_none_or(|n| n.round != m.round);
            if round_done {
                while let Some(s) = scores.next_if(|s| s.round <= m.round) {
                    out.push(LogEvent::Score {
                        game: self.game,
                        player: s.player,
                        round: s.round,
                    });
                }
            }
        }
        for s in scores {
            out.push(LogEvent::Score {
                game: self.game,
                player: s.player,
                round: s.round,
            });
        }
        out.push(LogEvent::GameEnd {
            game: self.game,
            rounds: self.rounds,
        });
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), LogError> {
        for e in self.events() {
            serde_json::to_writer(&mut w, &e).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Re-runs the recorded messages through the rules engine, checking every
    /// message and score against the rules. Returns the final state.
    pub fn replay(&self) -> Result<GameState, LogError> {
        self.replay_with(|_| {})
    }

    /// Like [`GameLog::replay`], calling `after_round` with the state after
    /// each resolved round.
    pub fn replay_with<F: FnMut(&GameState)>(&self, mut after_round: F) -> Result<GameState, LogError> {
        let replay_err = |source| LogError::Replay {
            game: self.game,
            source,
        };
        let mut state = GameState::new(self.assignment.clone(), self.round_limit).map_err(replay_err)?;
        let mut idx = 0;
        for round in 1..=self.rounds {
            while let Some(m) = self.messages.get(idx).filter(|m| m.round == round) {
                if state.staged(m.from).is_some() {
                    return Err(replay_err(GameError::InvalidConfiguration(format!(
                        "{} sent two messages in round {round}",
                        m.from
                    ))));
                }
                let expected = state.validate(m.from, m.outgoing()).map_err(replay_err)?;
                if expected.payload != m.payload {
                    return Err(replay_err(GameError::InvalidConfiguration(format!(
                        "referral payload mismatch in round {round}"
                    ))));
                }
                state.stage_action(m.from, Action::Send(m.outgoing())).map_err(replay_err)?;
                idx += 1;
            }
            state.resolve_round().map_err(replay_err)?;
            after_round(&state);
        }
        if idx != self.messages.len() {
            return Err(replay_err(GameError::InvalidConfiguration(
                "messages out of round order or after game end".into(),
            )));
        }
        if state.scores() != self.scores.as_slice() {
            return Err(replay_err(GameError::InvalidConfiguration(
                "recorded scores disagree with the replay".into(),
            )));
        }
        Ok(state)
    }

    pub fn count(&self, kind: MessageType) -> usize {
        self.messages.iter().filter(|m| m.kind == kind).count()
    }
}

pub fn write_series<W: Write>(games: &[GameLog], mut w: W) -> Result<(), LogError> {
    for g in games {
        g.write_jsonl(&mut w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn series_to_string(games: &[GameLog]) -> String {
    let mut buf = Vec::new();
    write_series(games, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

/// Parses a JSON-lines stream into games. Blank lines are skipped. Messages
/// within a round may appear in any order.
pub fn read_series<R: BufRead>(r: R) -> Result<Vec<GameLog>, LogError> {
    let mut games = Vec::new();
    let mut current: Option<GameLog> = None;
    for (i, line) in r.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: LogEvent = serde_json::from_str(&line).map_err(|source| LogError::Parse {
            line: line_no,
            source,
        })?;
        let malformed = |reason: &str| LogError::Malformed {
            line: line_no,
            reason: reason.to_string(),
        };
        match event {
            LogEvent::Assignment {
                game,
                n_players,
                round_limit,
                assignment,
            } => {
                if current.is_some() {
                    return Err(malformed("assignment before previous game_end"));
                }
                if n_players != assignment.n_players() {
                    return Err(malformed("n_players disagrees with the assignment"));
                }
                current = Some(GameLog {
                    game,
                    assignment,
                    round_limit,
                    messages: Vec::new(),
                    scores: Vec::new(),
                    rounds: 0,
                });
            }
            LogEvent::Message { game, message } => {
                let g = current.as_mut().ok_or_else(|| malformed("message outside a game"))?;
                if g.game != game {
                    return Err(malformed("message tagged with another game"));
                }
                g.messages.push(message);
            }
            LogEvent::Score { game, player, round } => {
                let g = current.as_mut().ok_or_else(|| malformed("score outside a game"))?;
                if g.game != game {
                    return Err(malformed("score tagged with another game"));
                }
                g.scores.push(ScoreEvent { player, round });
            }
            LogEvent::GameEnd { game, rounds } => {
                let mut g = current.take().ok_or_else(|| malformed("game_end outside a game"))?;
                if g.game != game {
                    return Err(malformed("game_end tagged with another game"));
                }
                g.rounds = rounds;
                // Stable sort keeps within-round order while tolerating interleaving.
                g.messages.sort_by_key(|m| (m.round, m.from));
                g.scores.sort_by_key(|s| (s.round, s.player));
                games.push(g);
            }
        }
    }
    if current.is_some() {
        return Err(LogError::Malformed {
            line: 0,
            reason: "stream ended inside a game".into(),
        });
    }
    Ok(games)
}

pub fn read_series_str(s: &str) -> Result<Vec<GameLog>, LogError> {
    read_series(s.as_bytes())
}
