//! The expert game: a round-synchronous request/reply game in which every
//! player must find the one participant whose expertise matches their task.
//!
//! - [`game`]: rules engine for a single game.
//! - [`log`]: the JSON-lines event log shared by the simulator, the analysis
//!   and the live service.
//! - [`agent`]: Bayesian agents that learn how responsive each partner is.
//! - [`sim`]: seeded multi-game series and replica harness.
//! - [`analysis`]: adjacency, correlation, reciprocity, per-round curves and
//!   reply statistics.

pub mod agent;
pub mod analysis;
pub mod game;
pub mod log;
pub mod sim;

pub use game::{
    Action, Assignment, GameError, GameState, Message, MessageType, Outgoing, PlayerId, PlayerView,
};
pub use log::GameLog;
