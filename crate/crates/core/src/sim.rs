//! Seeded multi-game series with persistent agents, plus a replica harness.
//!
//! Every random stream is derived from the master seed by position
//! (replica, game, agent), so results do not depend on iteration order or on
//! how many threads run the replicas.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentConfig, AgentError, BayesAgent};
use crate::game::{Assignment, GameError, GameState, PlayerId};
use crate::log::{write_series, GameLog, LogError};

/// Rounds per game used unless configured otherwise. Calibrated over
/// 10..=20 against the reply statistics of 1000 8-player, 4-game series
/// (`examples/calibrate_rounds.rs`); 10 gives the smallest worst-case
/// deviation.
pub const DEFAULT_ROUND_MEAN: u32 = 10;
pub const DEFAULT_ROUND_JITTER: u32 = 2;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeriesConfig {
    pub n_players: usize,
    pub n_games: usize,
    pub round_mean: u32,
    /// Maximum absolute deviation of a game's length from `round_mean`.
    pub round_jitter: u32,
    #[serde(alias = "personality")]
    pub agent: AgentConfig,
    pub master_seed: u64,
    pub n_replicas: usize,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        SeriesConfig {
            n_players: 8,
            n_games: 4,
            round_mean: DEFAULT_ROUND_MEAN,
            round_jitter: DEFAULT_ROUND_JITTER,
            agent: AgentConfig::default(),
            master_seed: 0,
            n_replicas: 1,
        }
    }
}

impl SeriesConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_players <= 2 {
            return Err(SimError::Config(format!(
                "n_players must exceed 2, got {}",
                self.n_players
            )));
        }
        if self.n_games < 1 {
            return Err(SimError::Config("n_games must be at least 1".into()));
        }
        if self.round_mean < self.round_jitter || self.round_mean - self.round_jitter < 2 {
            return Err(SimError::Config(format!(
                "round_mean - round_jitter must be at least 2, got {} - {}",
                self.round_mean, self.round_jitter
            )));
        }
        self.agent
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))?;
        Ok(())
    }
}

mod stream {
    pub const REPLICA: u64 = 1;
    pub const GAME: u64 = 2;
    pub const DEAL: u64 = 3;
    pub const AGENT: u64 = 4;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for position `index` of stream `stream` under `parent`.
pub fn derive_seed(parent: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(parent) ^ stream) ^ index)
}

pub fn replica_seed(master_seed: u64, replica: usize) -> u64 {
    derive_seed(master_seed, stream::REPLICA, replica as u64)
}

/// Private assignment and hidden round limit of one game.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deal {
    pub seed: u64,
    pub assignment: Assignment,
    pub round_limit: u32,
}

/// Deals game `game` of the series seeded with `series_seed`.
pub fn deal_game(config: &SeriesConfig, series_seed: u64, game: usize) -> Result<Deal, SimError> {
    let seed = derive_seed(series_seed, stream::GAME, game as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream::DEAL, 0));
    let assignment = Assignment::sample(config.n_players, &mut rng)?;
    let round_limit =
        rng.random_range(config.round_mean - config.round_jitter..=config.round_mean + config.round_jitter);
    Ok(Deal {
        seed,
        assignment,
        round_limit,
    })
}

/// Random stream of seat `agent` in the game seeded with `game_seed`.
pub fn agent_rng(game_seed: u64, agent: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(game_seed, stream::AGENT, agent as u64))
}

/// Per-game bookkeeping kept alongside the logs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameLineage {
    pub game: usize,
    pub seed: u64,
    pub round_limit: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeriesLog {
    pub replica: usize,
    pub seed: u64,
    pub games: Vec<GameLog>,
    pub lineage: Vec<GameLineage>,
}

impl SeriesLog {
    pub fn to_jsonl(&self) -> String {
        crate::log::series_to_string(&self.games)
    }
}

/// Runs replica 0 of `config`.
pub fn run_series(config: &SeriesConfig) -> Result<SeriesLog, SimError> {
    run_replica(config, 0)
}

pub fn run_replica(config: &SeriesConfig, replica: usize) -> Result<SeriesLog, SimError> {
    run_replica_observed(config, replica, |_, _| {})
}

/// Runs one series, calling `before_game(g, agents)` before each game `g` and
/// once more with `g == n_games` after the final trust update.
pub fn run_replica_observed<F>(
    config: &SeriesConfig,
    replica: usize,
    mut before_game: F,
) -> Result<SeriesLog, SimError>
where
    F: FnMut(usize, &[BayesAgent]),
{
    config.validate()?;
    let seed = replica_seed(config.master_seed, replica);
    let mut agents = (0..config.n_players)
        .map(|i| BayesAgent::new(PlayerId(i), config.n_players, &config.agent))
        .collect::<Result<Vec<_>, _>>()?;

    let mut games = Vec::with_capacity(config.n_games);
    let mut lineage = Vec::with_capacity(config.n_games);
    for g in 0..config.n_games {
        before_game(g, &agents);
        let deal = deal_game(config, seed, g)?;
        let mut rngs: Vec<ChaCha8Rng> = (0..config.n_players).map(|i| agent_rng(deal.seed, i)).collect();

        let log = play_game(g, deal.assignment, deal.round_limit, &mut agents, &mut rngs)?;
        for agent in &mut agents {
            agent.end_game(&log)?;
        }
        lineage.push(GameLineage {
            game: g,
            seed: deal.seed,
            round_limit: deal.round_limit,
        });
        games.push(log);
    }
    before_game(config.n_games, &agents);
    Ok(SeriesLog {
        replica,
        seed,
        games,
        lineage,
    })
}

/// Plays one game to completion with every seat held by an agent.
pub fn play_game<R: Rng>(
    game: usize,
    assignment: Assignment,
    round_limit: u32,
    agents: &mut [BayesAgent],
    rngs: &mut [R],
) -> Result<GameLog, SimError> {
    let mut state = GameState::new(assignment, round_limit)?;
    for agent in agents.iter_mut() {
        agent.start_game();
    }
    while !state.is_finished() {
        for (agent, rng) in agents.iter_mut().zip(rngs.iter_mut()) {
            let view = state.view(agent.id())?;
            let action = agent.act(&view, rng);
            state.stage_action(agent.id(), action)?;
        }
        state.resolve_round()?;
    }
    Ok(GameLog::from_state(game, &state))
}

/// Runs every replica on the current rayon pool. Output order is replica
/// order regardless of scheduling.
pub fn run_replicas(config: &SeriesConfig) -> Result<Vec<SeriesLog>, SimError> {
    if config.n_replicas < 1 {
        return Err(SimError::Config("n_replicas must be at least 1".into()));
    }
    config.validate()?;
    (0..config.n_replicas)
        .into_par_iter()
        .map(|r| run_replica(config, r))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicaEntry {
    pub replica: usize,
    pub seed: u64,
    pub file: String,
    pub games: Vec<GameLineage>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: SeriesConfig,
    pub replicas: Vec<ReplicaEntry>,
}

pub fn series_file_name(replica: usize) -> String {
    format!("series_{replica:05}.jsonl")
}

/// Writes one JSON-lines file per replica and `manifest.json` into `out_dir`.
pub fn write_outputs(config: &SeriesConfig, series: &[SeriesLog], out_dir: &Path) -> Result<Manifest, SimError> {
    fs::create_dir_all(out_dir)?;
    let mut replicas = Vec::with_capacity(series.len());
    for s in series {
        let file = series_file_name(s.replica);
        let f = fs::File::create(out_dir.join(&file))?;
        write_series(&s.games, BufWriter::new(f))?;
        replicas.push(ReplicaEntry {
            replica: s.replica,
            seed: s.seed,
            file,
            games: s.lineage.clone(),
        });
    }
    let manifest = Manifest {
        config: config.clone(),
        replicas,
    };
    let f = fs::File::create(out_dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &manifest).map_err(std::io::Error::from)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SeriesConfig {
        SeriesConfig {
            n_players: 5,
            n_games: 3,
            round_mean: 8,
            round_jitter: 2,
            master_seed: 42,
            ..Default::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(SeriesConfig { n_players: 2, ..small() }.validate().is_err());
        assert!(SeriesConfig { n_games: 0, ..small() }.validate().is_err());
        assert!(SeriesConfig { round_mean: 3, round_jitter: 2, ..small() }.validate().is_err());
        assert!(SeriesConfig { round_mean: 4, round_jitter: 2, ..small() }.validate().is_ok());
        let mut bad_agent = small();
        bad_agent.agent.alpha = -1.0;
        assert!(matches!(bad_agent.validate(), Err(SimError::Config(_))));
    }

    #[test]
    fn deterministic() {
        let a = run_series(&small()).unwrap();
        let b = run_series(&small()).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        let c = run_series(&SeriesConfig { master_seed: 43, ..small() }).unwrap();
        assert_ne!(a.to_jsonl(), c.to_jsonl());
    }

    #[test]
    fn round_limits_within_jitter() {
        let cfg = SeriesConfig {
            n_games: 40,
            round_mean: 15,
            round_jitter: 2,
            ..small()
        };
        let s = run_series(&cfg).unwrap();
        assert!(s.games.iter().all(|g| (13..=17).contains(&g.rounds) && g.rounds == g.round_limit));
        let distinct: std::collections::BTreeSet<_> = s.games.iter().map(|g| g.rounds).collect();
        assert_eq!(distinct.len(), 5);
    }

    #[test]
    fn seeds_are_distinct() {
        let seeds: std::collections::BTreeSet<u64> = (0..1000).map(|r| replica_seed(7, r)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(derive_seed(1, stream::GAME, 0), derive_seed(1, stream::AGENT, 0));
    }

    #[test]
    fn writes_manifest_and_logs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SeriesConfig { n_replicas: 2, ..small() };
        let series = run_replicas(&cfg).unwrap();
        let manifest = write_outputs(&cfg, &series, dir.path()).unwrap();
        assert_eq!(manifest.replicas.len(), 2);
        let text = fs::read_to_string(dir.path().join(&manifest.replicas[1].file)).unwrap();
        let games = crate::log::read_series_str(&text).unwrap();
        assert_eq!(games, series[1].games);
        let m: Manifest =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m.replicas[0].seed, series[0].seed);
    }
}
