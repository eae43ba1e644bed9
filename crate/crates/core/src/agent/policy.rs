use std::collections::BTreeSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::belief::{HypothesisGrid, TrustState};
use super::AgentError;
use crate::game::{Action, MessageType, Outgoing, PlayerId, PlayerView};

/// Once an agent knows its expert, requests to anyone else are weighted by
/// this factor for the rest of the game.
pub const ALPHA_DAMPING: f64 = 0.001;

/// Preferences for requesting (`alpha`), positive replies (`beta`, shared by
/// confirmations and referrals) and negations (`gamma`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Personality {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for Personality {
    fn default() -> Self {
        Personality {
            alpha: 1.0,
            beta: 5.0,
            gamma: 1.0,
        }
    }
}

impl Personality {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self, AgentError> {
        let p = Personality { alpha, beta, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let traits = [self.alpha, self.beta, self.gamma];
        if traits.iter().any(|t| !t.is_finite() || *t < 0.0) || traits.iter().all(|t| *t == 0.0) {
            return Err(AgentError::InvalidPersonality(*self));
        }
        Ok(())
    }

    pub fn preference(&self, kind: MessageType) -> f64 {
        match kind {
            MessageType::Q => self.alpha,
            MessageType::C | MessageType::R => self.beta,
            MessageType::N => self.gamma,
        }
    }
}

/// What an agent remembers within one game. Reset at every game start.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AgentGameMemory {
    /// `(type, receiver)` pairs already sent; each is sent at most once.
    pub sent: BTreeSet<(MessageType, PlayerId)>,
    pub pending_requests: BTreeSet<PlayerId>,
    pub expert_known: Option<PlayerId>,
    pub alpha_damped: bool,
}

impl AgentGameMemory {
    pub fn expert_requested(&self) -> bool {
        self.expert_known
            .is_some_and(|e| self.sent.contains(&(MessageType::Q, e)))
    }

    /// Folds in what the current view reveals.
    pub fn observe(&mut self, view: &PlayerView) {
        if let Some(e) = view.known_expert {
            self.expert_known = Some(e);
            self.alpha_damped = true;
        }
        self.pending_requests.extend(view.knowledge.requesters.iter().copied());
    }

    pub fn record(&mut self, action: Action) {
        if let Action::Send(out) = action {
            self.sent.insert((out.kind, out.to));
        }
    }
}

/// Picks this round's action.
///
/// A known but not yet contacted expert is always requested first. Otherwise
/// every legal, not-yet-sent `(type, receiver)` pair is weighted by the
/// sender's preference for the type times the expected responsiveness of the
/// receiver, and one is drawn. With no candidate or zero total weight the
/// agent abstains.
pub fn choose_action<R: Rng + ?Sized>(
    memory: &AgentGameMemory,
    trust: &TrustState,
    grid: &HypothesisGrid,
    view: &PlayerView,
    personality: &Personality,
    rng: &mut R,
) -> Action {
    let expert = view.known_expert.or(memory.expert_known);
    if let Some(e) = expert {
        if !memory.sent.contains(&(MessageType::Q, e)) {
            return Action::Send(Outgoing {
                kind: MessageType::Q,
                to: e,
            });
        }
    }
    let damped = memory.alpha_damped || expert.is_some();

    let mut candidates = Vec::with_capacity(view.legal.len());
    let mut weights = Vec::with_capacity(view.legal.len());
    for m in &view.legal {
        if m.to == view.me || memory.sent.contains(&(m.kind, m.to)) {
            continue;
        }
        let mut pref = personality.preference(m.kind);
        if damped && m.kind == MessageType::Q {
            pref *= ALPHA_DAMPING;
        }
        candidates.push(m.outgoing());
        weights.push(trust.mean(grid, m.to) * pref);
    }
    match WeightedIndex::new(&weights) {
        Ok(dist) => Action::Send(candidates[dist.sample(rng)]),
        // Empty list or all-zero weights.
        Err(_) => Action::Abstain,
    }
}
