//! Responsiveness inference on a discrete hypothesis grid.
//!
//! A partner's responsiveness `theta` is the per-round probability of
//! answering a request. Waiting for the first reply is a Bernoulli process,
//! so a reply after `k` rounds has likelihood `(1-theta)^(k-1) * theta` and a
//! request still unanswered when the game ends `k` rounds later has
//! likelihood `(1-theta)^k`.

use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::game::PlayerId;

pub const DEFAULT_GRID_STEP: f64 = 0.05;

/// Tolerance for "sums to one" checks on incoming distributions.
const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Evenly spaced hypotheses `0, step, 2*step, ..., 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisGrid {
    values: Vec<f64>,
}

impl Default for HypothesisGrid {
    fn default() -> Self {
        HypothesisGrid::with_step(DEFAULT_GRID_STEP).expect("default step is valid")
    }
}

impl HypothesisGrid {
    /// `step` must divide 1 into a whole number of intervals.
    pub fn with_step(step: f64) -> Result<Self, AgentError> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(AgentError::InvalidGrid(step));
        }
        let intervals = (1.0 / step).round();
        if ((intervals * step) - 1.0).abs() > 1e-9 {
            return Err(AgentError::InvalidGrid(step));
        }
        let intervals = intervals as usize;
        // Index-based construction keeps 0.05*n exact up to one rounding.
        let values = (0..=intervals).map(|n| n as f64 * step).map(|v| v.min(1.0)).collect();
        Ok(HypothesisGrid { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Evidence about one partner from one game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub partner: PlayerId,
    /// Rounds from the first request to the first reply, or to the end of the
    /// game when `replied` is false.
    pub k: u32,
    pub replied: bool,
}

pub fn likelihood(theta: f64, obs: &Observation) -> Result<f64, AgentError> {
    if obs.k < 1 {
        return Err(AgentError::InvalidObservation(obs.k));
    }
    let miss = 1.0 - theta;
    Ok(if obs.replied {
        miss.powi(obs.k as i32 - 1) * theta
    } else {
        miss.powi(obs.k as i32)
    })
}

/// Probability vector over a [`HypothesisGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn uniform(grid: &HypothesisGrid) -> Self {
        let p = 1.0 / grid.len() as f64;
        Belief(vec![p; grid.len()])
    }

    /// Validates an explicit distribution for use with `grid`.
    pub fn from_probs(grid: &HypothesisGrid, probs: Vec<f64>) -> Result<Self, AgentError> {
        if probs.len() != grid.len() {
            return Err(AgentError::InvalidPrior(format!(
                "expected {} probabilities, got {}",
                grid.len(),
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(AgentError::InvalidPrior("probabilities must be finite and nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(AgentError::InvalidPrior(format!("probabilities sum to {total}")));
        }
        Ok(Belief(probs))
    }

    pub fn point_mass(grid: &HypothesisGrid, index: usize) -> Self {
        let mut probs = vec![0.0; grid.len()];
        probs[index] = 1.0;
        Belief(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    /// Posterior after one observation, renormalized.
    pub fn updated(&self, grid: &HypothesisGrid, obs: &Observation) -> Result<Belief, AgentError> {
        let mut post = Vec::with_capacity(self.0.len());
        for (theta, prior) in grid.values().iter().zip(&self.0) {
            post.push(likelihood(*theta, obs)? * prior);
        }
        let total: f64 = post.iter().sum();
        if !(total > 0.0) {
            return Err(AgentError::DegeneratePosterior);
        }
        post.iter_mut().for_each(|p| *p /= total);
        Ok(Belief(post))
    }

    /// Expected responsiveness.
    pub fn mean(&self, grid: &HypothesisGrid) -> f64 {
        grid.values().iter().zip(&self.0).map(|(t, p)| t * p).sum()
    }
}

/// `update_posterior` as a free function over raw probability vectors.
pub fn update_posterior(grid: &HypothesisGrid, prior: &[f64], obs: &Observation) -> Result<Vec<f64>, AgentError> {
    let prior = Belief::from_probs(grid, prior.to_vec())?;
    Ok(prior.updated(grid, obs)?.0)
}

pub fn mean_responsiveness(grid: &HypothesisGrid, dist: &[f64]) -> f64 {
    grid.values().iter().zip(dist).map(|(t, p)| t * p).sum()
}

/// One agent's beliefs about every other player. Persists across the games of
/// a series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustState {
    owner: PlayerId,
    beliefs: Vec<Belief>,
}

impl TrustState {
    pub fn new(owner: PlayerId, n_players: usize, prior: &Belief) -> Self {
        TrustState {
            owner,
            beliefs: vec![prior.clone(); n_players],
        }
    }

    pub fn from_beliefs(owner: PlayerId, beliefs: Vec<Belief>) -> Self {
        TrustState { owner, beliefs }
    }

    pub fn owner(&self) -> PlayerId {
        self.owner
    }

    pub fn belief(&self, other: PlayerId) -> &Belief {
        &self.beliefs[other.0]
    }

    pub fn mean(&self, grid: &HypothesisGrid, other: PlayerId) -> f64 {
        self.beliefs[other.0].mean(grid)
    }

    pub fn observe(&mut self, grid: &HypothesisGrid, obs: &Observation) -> Result<(), AgentError> {
        if obs.partner == self.owner || obs.partner.0 >= self.beliefs.len() {
            return Err(AgentError::UnknownPartner(obs.partner));
        }
        let slot = &mut self.beliefs[obs.partner.0];
        *slot = slot.updated(grid, obs)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(k: u32, replied: bool) -> Observation {
        Observation {
            partner: PlayerId(1),
            k,
            replied,
        }
    }

    #[test]
    fn grid_has_21_points() {
        let g = HypothesisGrid::default();
        assert_eq!(g.len(), 21);
        assert_eq!(g.values()[0], 0.0);
        assert_eq!(g.values()[20], 1.0);
        assert!((g.values()[7] - 0.35).abs() < 1e-15);
        assert!(g.values().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn bad_grid_step() {
        assert!(HypothesisGrid::with_step(0.3).is_err());
        assert!(HypothesisGrid::with_step(0.0).is_err());
        assert_eq!(HypothesisGrid::with_step(0.25).unwrap().len(), 5);
    }

    #[test]
    fn likelihood_values() {
        assert!((likelihood(0.5, &obs(3, true)).unwrap() - 0.125).abs() < 1e-15);
        assert_eq!(likelihood(1.0, &obs(1, true)).unwrap(), 1.0);
        assert!((likelihood(0.2, &obs(4, false)).unwrap() - 0.4096).abs() < 1e-12);
        assert_eq!(likelihood(0.5, &obs(0, true)), Err(AgentError::InvalidObservation(0)));
    }

    #[test]
    fn posterior_after_instant_reply() {
        // Oracle: posterior proportional to theta; mean = sum(t^2)/sum(t) = 7.175/10.5.
        let g = HypothesisGrid::default();
        let sum_t: f64 = (0..=20).map(|n| n as f64 / 20.0).sum();
        let sum_t2: f64 = (0..=20).map(|n| (n as f64 / 20.0).powi(2)).sum();
        assert!((sum_t - 10.5).abs() < 1e-12);
        assert!((sum_t2 - 7.175).abs() < 1e-12);
        let post = Belief::uniform(&g).updated(&g, &obs(1, true)).unwrap();
        assert!((post.mean(&g) - 7.175 / 10.5).abs() < 1e-12);
        assert!((post.mean(&g) - 0.68333).abs() < 1e-5);
    }

    #[test]
    fn point_mass_unchanged() {
        let g = HypothesisGrid::default();
        let pm = Belief::point_mass(&g, 10);
        for o in [obs(1, true), obs(5, false), obs(7, true)] {
            assert_eq!(pm.updated(&g, &o).unwrap(), pm);
        }
    }

    #[test]
    fn long_silence_concentrates_on_zero() {
        let g = HypothesisGrid::default();
        let post = Belief::uniform(&g).updated(&g, &obs(100, false)).unwrap();
        // Oracle: 1 / sum_n (1 - n/20)^100.
        let z: f64 = (0..=20).map(|n| (1.0 - n as f64 / 20.0).powi(100)).sum();
        assert!((post.probs()[0] - 1.0 / z).abs() < 1e-12);
        assert!((post.probs()[0] - 0.994).abs() < 5e-4);
    }

    #[test]
    fn uniform_mean_is_half() {
        let g = HypothesisGrid::default();
        assert!((Belief::uniform(&g).mean(&g) - 0.5).abs() < 1e-12);
        assert!((Belief::point_mass(&g, 15).mean(&g) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn degenerate_posterior_reported() {
        let g = HypothesisGrid::default();
        let zero = Belief::point_mass(&g, 0);
        assert_eq!(zero.updated(&g, &obs(1, true)), Err(AgentError::DegeneratePosterior));
    }

    #[test]
    fn explicit_prior_validation() {
        let g = HypothesisGrid::default();
        assert!(Belief::from_probs(&g, vec![0.5; 21]).is_err());
        assert!(Belief::from_probs(&g, vec![1.0 / 21.0; 20]).is_err());
        assert!(update_posterior(&g, &[1.0 / 21.0; 21], &obs(2, false)).is_ok());
    }

    #[test]
    fn trust_rejects_self_observation() {
        let g = HypothesisGrid::default();
        let mut t = TrustState::new(PlayerId(1), 4, &Belief::uniform(&g));
        assert_eq!(t.observe(&g, &obs(1, true)), Err(AgentError::UnknownPartner(PlayerId(1))));
    }
}
