//! Session host for live expert games between people and Bayesian agents.
//!
//! [`Session`] is a synchronous state machine holding one series; the
//! [`server`] module puts each session behind its own task and exposes it
//! over a websocket (one JSON object per frame) and an equivalent HTTP
//! request/response interface.

pub mod names;
pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{ClientMessage, SeatView, ServerEvent, Status, WireAction, WireKind, WireMessage};
pub use session::{ServiceError, Session, SessionConfig};
