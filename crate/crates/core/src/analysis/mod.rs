//! Metrics over recorded games: networks, per-round curves and reply tables.

mod network;
mod rates;
mod replies;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use network::{
    adjacency, degree_preserving_shuffle, game_correlations, pearson, reciprocity, AdjacencyMatrix,
    CorrelationMatrix, GameSelection, TypeFilter,
};
pub use rates::{
    game_knowledge, knowledge_curves, message_type_fractions, per_round_rates, ClassCurves,
    KnowledgeCurves, RateCurves, TypeFractions,
};
pub use replies::{reply_stats, ReplyStats};

use crate::log::{GameLog, LogError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("matrices differ in size")]
    ShapeMismatch,
    #[error("adjacency matrices must have a zero diagonal")]
    NonZeroDiagonal,
    #[error("need at least two games, got {0}")]
    TooFewGames(usize),
    #[error("need at least three players, got {0}")]
    TooFewPlayers(usize),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

/// Network metrics of one series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesNetwork {
    pub name: String,
    pub aggregate: AdjacencyMatrix,
    pub per_game: Vec<AdjacencyMatrix>,
    pub correlations: Option<CorrelationMatrix>,
    pub reciprocity: Option<f64>,
}

impl SeriesNetwork {
    pub fn compute(name: &str, games: &[GameLog], filter: TypeFilter) -> Result<Self, AnalysisError> {
        let per_game: Vec<AdjacencyMatrix> = games
            .iter()
            .map(|g| adjacency(std::slice::from_ref(g), &GameSelection::All, filter))
            .collect();
        let aggregate = adjacency(games, &GameSelection::All, filter);
        let correlations = if per_game.len() >= 2 {
            Some(game_correlations(&per_game)?)
        } else {
            None
        };
        let reciprocity = if aggregate.n() >= 3 {
            reciprocity(&aggregate)?
        } else {
            None
        };
        Ok(SeriesNetwork {
            name: name.to_string(),
            aggregate,
            per_game,
            correlations,
            reciprocity,
        })
    }

    /// Mean correlation between games `g` and `g + 1`, skipping undefined entries.
    pub fn consecutive_correlation(&self) -> Option<f64> {
        let c = self.correlations.as_ref()?;
        let vals: Vec<f64> = (0..c.n.saturating_sub(1)).filter_map(|g| c.get(g, g + 1)).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Everything the analysis reports for a set of series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsBundle {
    pub type_filter: TypeFilter,
    pub series: Vec<SeriesNetwork>,
    pub rates: RateCurves,
    pub knowledge: KnowledgeCurves,
    pub reply_stats: ReplyStats,
    pub fractions: Option<TypeFractions>,
    pub mean_consecutive_correlation: Option<f64>,
    pub mean_reciprocity: Option<f64>,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl MetricsBundle {
    pub fn compute(series: &[(String, Vec<GameLog>)], filter: TypeFilter) -> Result<Self, AnalysisError> {
        let networks = series
            .iter()
            .map(|(name, games)| SeriesNetwork::compute(name, games, filter))
            .collect::<Result<Vec<_>, _>>()?;
        let all = || series.iter().flat_map(|(_, g)| g.iter());
        Ok(MetricsBundle {
            type_filter: filter,
            rates: per_round_rates(all()),
            knowledge: knowledge_curves(all())?,
            reply_stats: reply_stats(all()),
            fractions: message_type_fractions(all()),
            mean_consecutive_correlation: mean_of(networks.iter().filter_map(|s| s.consecutive_correlation())),
            mean_reciprocity: mean_of(networks.iter().filter_map(|s| s.reciprocity)),
            series: networks,
        })
    }

    /// Writes CSV tables and `summary.json` into `out_dir`.
    pub fn write(&self, out_dir: &Path) -> Result<(), AnalysisError> {
        fs::create_dir_all(out_dir)?;
        for s in &self.series {
            write_matrix(&out_dir.join(format!("{}_adjacency_all.csv", s.name)), &s.aggregate)?;
            for (g, m) in s.per_game.iter().enumerate() {
                write_matrix(&out_dir.join(format!("{}_adjacency_game{}.csv", s.name, g + 1)), m)?;
            }
            if let Some(c) = &s.correlations {
                let mut w = csv::Writer::from_path(out_dir.join(format!("{}_correlations.csv", s.name)))?;
                for g in 0..c.n {
                    w.write_record((0..c.n).map(|h| c.get(g, h).map_or(String::new(), |v| v.to_string())))?;
                }
                w.flush()?;
            }
        }

        let mut w = csv::Writer::from_path(out_dir.join("rates.csv"))?;
        w.write_record(["round", "question", "positive", "negative"])?;
        let m = &self.rates.mean;
        for r in 0..m.len() {
            w.serialize((r + 1, m.question[r], m.positive[r], m.negative[r]))?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(out_dir.join("knowledge.csv"))?;
        w.write_record(["round", "overall", "relevant"])?;
        for t in 0..self.knowledge.overall.len() {
            w.serialize((t, self.knowledge.overall[t], self.knowledge.relevant[t]))?;
        }
        w.flush()?;

        let s = &self.reply_stats;
        let mut w = csv::Writer::from_path(out_dir.join("reply_stats.csv"))?;
        w.write_record(["reply_type", "average_lag", "average_rate"])?;
        w.serialize(("N", s.lag_n, s.rate_n))?;
        w.serialize(("Y", s.lag_y, s.rate_y))?;
        w.serialize(("no_reply_with_knowledge", None::<f64>, s.rate_noreply_with_knowledge))?;
        w.flush()?;

        let f = fs::File::create(out_dir.join("summary.json"))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self).map_err(std::io::Error::from)?;
        Ok(())
    }
}

fn write_matrix(path: &Path, m: &AdjacencyMatrix) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in m.rows() {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Loads every `*.jsonl` file in `dir`, sorted by file name.
pub fn load_series_dir(dir: &Path) -> Result<Vec<(String, Vec<GameLog>)>, AnalysisError> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let f = fs::File::open(&p)?;
        let games = crate::log::read_series(std::io::BufReader::new(f))?;
        let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        out.push((name, games));
    }
    Ok(out)
}
