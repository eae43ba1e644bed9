//! Communication networks: adjacency counts, correlation between games and
//! reciprocity.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::game::MessageType;
use crate::log::GameLog;

/// Which message types an adjacency matrix counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeFilter {
    #[default]
    All,
    /// Requests only.
    Q,
    /// C, R and N.
    Replies,
}

impl TypeFilter {
    pub fn admits(self, kind: MessageType) -> bool {
        match self {
            TypeFilter::All => true,
            TypeFilter::Q => kind == MessageType::Q,
            TypeFilter::Replies => kind.is_reply(),
        }
    }
}

impl std::str::FromStr for TypeFilter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(TypeFilter::All),
            "q" => Ok(TypeFilter::Q),
            "replies" => Ok(TypeFilter::Replies),
            other => Err(format!("unknown type filter {other:?}, expected q|replies|all")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum GameSelection {
    #[default]
    All,
    /// Game indices as recorded in the logs.
    Games(Vec<usize>),
}

impl GameSelection {
    pub fn contains(&self, game: usize) -> bool {
        match self {
            GameSelection::All => true,
            GameSelection::Games(g) => g.contains(&game),
        }
    }
}

/// `counts[i][j]` is the number of messages from `i` to `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjacencyMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl AdjacencyMatrix {
    pub fn zeros(n: usize) -> Self {
        AdjacencyMatrix {
            n,
            counts: vec![0; n * n],
        }
    }

    /// Builds from rows; the diagonal must be zero.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self, AnalysisError> {
        let n = rows.len();
        let mut m = AdjacencyMatrix::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(AnalysisError::ShapeMismatch);
            }
            if row[i] != 0 {
                return Err(AnalysisError::NonZeroDiagonal);
            }
            m.counts[i * n..(i + 1) * n].copy_from_slice(row);
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, from: usize, to: usize) -> u64 {
        self.counts[from * self.n + to]
    }

    fn bump(&mut self, from: usize, to: usize) {
        self.counts[from * self.n + to] += 1;
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.n.max(1)).map(|c| c.to_vec()).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Off-diagonal entries in row-major order.
    pub fn off_diagonal(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * self.n.saturating_sub(1));
        for i in 0..self.n {
            for j in (0..self.n).filter(|&j| j != i) {
                out.push(self.get(i, j) as f64);
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut t = AdjacencyMatrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.counts[j * self.n + i] = self.get(i, j);
            }
        }
        t
    }

    /// Player `i` becomes `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> Self {
        let mut out = AdjacencyMatrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out.counts[perm[i] * self.n + perm[j]] = self.get(i, j);
            }
        }
        out
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self, AnalysisError> {
        if self.n != other.n {
            return Err(AnalysisError::ShapeMismatch);
        }
        Ok(AdjacencyMatrix {
            n: self.n,
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn out_strength(&self) -> Vec<u64> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j)).sum()).collect()
    }

    pub fn in_strength(&self) -> Vec<u64> {
        (0..self.n).map(|j| (0..self.n).map(|i| self.get(i, j)).sum()).collect()
    }
}

/// Counts messages between players over the selected games.
pub fn adjacency(logs: &[GameLog], selection: &GameSelection, filter: TypeFilter) -> AdjacencyMatrix {
    let n = logs.first().map_or(0, GameLog::n_players);
    let mut m = AdjacencyMatrix::zeros(n);
    for log in logs.iter().filter(|l| selection.contains(l.game)) {
        for msg in log.messages.iter().filter(|m| filter.admits(m.kind)) {
            m.bump(msg.from.0, msg.to.0);
        }
    }
    m
}

/// Pearson correlation, or `None` when either side has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Symmetric game-by-game matrix of correlations; `None` marks undefined entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub n: usize,
    pub values: Vec<Option<f64>>,
}

impl CorrelationMatrix {
    pub fn get(&self, g: usize, h: usize) -> Option<f64> {
        self.values[g * self.n + h]
    }
}

pub fn game_correlations(matrices: &[AdjacencyMatrix]) -> Result<CorrelationMatrix, AnalysisError> {
    if matrices.len() < 2 {
        return Err(AnalysisError::TooFewGames(matrices.len()));
    }
    if matrices.iter().any(|m| m.n() != matrices[0].n()) {
        return Err(AnalysisError::ShapeMismatch);
    }
    let g = matrices.len();
    let vecs: Vec<Vec<f64>> = matrices.iter().map(AdjacencyMatrix::off_diagonal).collect();
    let mut values = vec![None; g * g];
    for a in 0..g {
        // The diagonal is 1 by definition, even for a constant matrix.
        values[a * g + a] = Some(1.0);
        for b in a + 1..g {
            let r = pearson(&vecs[a], &vecs[b]);
            values[a * g + b] = r;
            values[b * g + a] = r;
        }
    }
    Ok(CorrelationMatrix { n: g, values })
}

/// Correlation between the off-diagonal flows and their transpose.
pub fn reciprocity(m: &AdjacencyMatrix) -> Result<Option<f64>, AnalysisError> {
    if m.n() < 3 {
        return Err(AnalysisError::TooFewPlayers(m.n()));
    }
    Ok(pearson(&m.off_diagonal(), &m.transpose().off_diagonal()))
}

/// Random rewiring that keeps every player's out- and in-strength: pairs of
/// messages `a->b`, `c->d` swap receivers when no self-message results.
pub fn degree_preserving_shuffle<R: Rng + ?Sized>(m: &AdjacencyMatrix, rng: &mut R) -> AdjacencyMatrix {
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(m.total() as usize);
    for i in 0..m.n() {
        for j in 0..m.n() {
            for _ in 0..m.get(i, j) {
                edges.push((i, j));
            }
        }
    }
    if edges.len() >= 2 {
        for _ in 0..10 * edges.len() {
            let x = rng.random_range(0..edges.len());
            let y = rng.random_range(0..edges.len());
            let ((a, b), (c, d)) = (edges[x], edges[y]);
            if x != y && a != d && c != b {
                edges[x] = (a, d);
                edges[y] = (c, b);
            }
        }
    }
    let mut out = AdjacencyMatrix::zeros(m.n());
    for (a, b) in edges {
        out.bump(a, b);
    }
    out
}
