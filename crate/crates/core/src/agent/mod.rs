//! Bayesian trust-and-choice agents.
//!
//! Each agent keeps, for every other player, a distribution over that
//! player's responsiveness. Between games the distributions are updated from
//! observed reply times; within a game they weight the agent's choice of
//! message and receiver.

mod belief;
mod observe;
mod policy;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use belief::{
    likelihood, mean_responsiveness, update_posterior, Belief, HypothesisGrid, Observation,
    TrustState, DEFAULT_GRID_STEP,
};
pub use observe::extract_observations;
pub use policy::{choose_action, AgentGameMemory, Personality, ALPHA_DAMPING};

use crate::game::{Action, PlayerId, PlayerView};
use crate::log::GameLog;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("invalid observation: k = {0}, must be at least 1")]
    InvalidObservation(u32),
    #[error("posterior has zero mass on every hypothesis")]
    DegeneratePosterior,
    #[error("grid step {0} must divide [0, 1] evenly")]
    InvalidGrid(f64),
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("invalid personality {0:?}: traits must be nonnegative with at least one positive")]
    InvalidPersonality(Personality),
    #[error("no trust slot for {0}")]
    UnknownPartner(PlayerId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorSpec {
    Named(NamedPrior),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedPrior {
    Uniform,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec::Named(NamedPrior::Uniform)
    }
}

/// Agent parameters as they appear in run configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub grid_step: f64,
    pub prior: PriorSpec,
}

impl Default for AgentConfig {
    fn default() -> Self {
        let p = Personality::default();
        AgentConfig {
            alpha: p.alpha,
            beta: p.beta,
            gamma: p.gamma,
            grid_step: DEFAULT_GRID_STEP,
            prior: PriorSpec::default(),
        }
    }
}

impl AgentConfig {
    pub fn personality(&self) -> Result<Personality, AgentError> {
        Personality::new(self.alpha, self.beta, self.gamma)
    }

    pub fn grid(&self) -> Result<HypothesisGrid, AgentError> {
        HypothesisGrid::with_step(self.grid_step)
    }

    pub fn prior(&self, grid: &HypothesisGrid) -> Result<Belief, AgentError> {
        match &self.prior {
            PriorSpec::Named(NamedPrior::Uniform) => Ok(Belief::uniform(grid)),
            PriorSpec::Explicit(p) => Belief::from_probs(grid, p.clone()),
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        self.personality()?;
        let grid = self.grid()?;
        self.prior(&grid)?;
        Ok(())
    }
}

/// Updates `trust` with every observation `me` made in a finished game.
pub fn end_of_game_update(
    trust: &TrustState,
    grid: &HypothesisGrid,
    log: &GameLog,
    me: PlayerId,
) -> Result<TrustState, AgentError> {
    let mut next = trust.clone();
    for obs in extract_observations(log, me) {
        next.observe(grid, &obs)?;
    }
    Ok(next)
}

/// An agent seat: persistent trust plus per-game memory.
#[derive(Debug, Clone)]
pub struct BayesAgent {
    id: PlayerId,
    personality: Personality,
    grid: HypothesisGrid,
    trust: TrustState,
    memory: AgentGameMemory,
}

impl BayesAgent {
    pub fn new(id: PlayerId, n_players: usize, config: &AgentConfig) -> Result<Self, AgentError> {
        let grid = config.grid()?;
        let prior = config.prior(&grid)?;
        Ok(BayesAgent {
            id,
            personality: config.personality()?,
            trust: TrustState::new(id, n_players, &prior),
            grid,
            memory: AgentGameMemory::default(),
        })
    }

    pub fn id(&self) -> PlayerId {
        self.id
    }

    pub fn trust(&self) -> &TrustState {
        &self.trust
    }

    pub fn grid(&self) -> &HypothesisGrid {
        &self.grid
    }

    pub fn memory(&self) -> &AgentGameMemory {
        &self.memory
    }

    pub fn start_game(&mut self) {
        self.memory = AgentGameMemory::default();
    }

    /// Chooses and remembers this round's action.
    pub fn act<R: Rng + ?Sized>(&mut self, view: &PlayerView, rng: &mut R) -> Action {
        self.memory.observe(view);
        let action = choose_action(&self.memory, &self.trust, &self.grid, view, &self.personality, rng);
        self.memory.record(action);
        action
    }

    pub fn end_game(&mut self, log: &GameLog) -> Result<(), AgentError> {
        self.trust = end_of_game_update(&self.trust, &self.grid, log, self.id)?;
        Ok(())
    }
}
