//! Per-round behaviour curves and message-type fractions.

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::game::{MessageType, PlayerId};
use crate::log::GameLog;

/// Messages per person per round, indexed by `round - 1`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassCurves {
    pub question: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

impl ClassCurves {
    pub fn len(&self) -> usize {
        self.question.len()
    }

    pub fn is_empty(&self) -> bool {
        self.question.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.question.iter().chain(&self.positive).chain(&self.negative).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurves {
    pub per_game: Vec<ClassCurves>,
    /// Average over the games that reached each round.
    pub mean: ClassCurves,
}

fn game_curves(log: &GameLog) -> ClassCurves {
    let rounds = log.rounds as usize;
    let n = log.n_players() as f64;
    let mut c = ClassCurves {
        question: vec![0.0; rounds],
        positive: vec![0.0; rounds],
        negative: vec![0.0; rounds],
    };
    for m in &log.messages {
        let slot = match m.kind {
            MessageType::Q => &mut c.question,
            MessageType::C | MessageType::R => &mut c.positive,
            MessageType::N => &mut c.negative,
        };
        slot[m.round as usize - 1] += 1.0 / n;
    }
    c
}

pub fn per_round_rates<'a, I>(logs: I) -> RateCurves
where
    I: IntoIterator<Item = &'a GameLog>,
{
    let per_game: Vec<ClassCurves> = logs.into_iter().map(game_curves).collect();
    let max = per_game.iter().map(ClassCurves::len).max().unwrap_or(0);
    let mut mean = ClassCurves {
        question: vec![0.0; max],
        positive: vec![0.0; max],
        negative: vec![0.0; max],
    };
    let mut reached = vec![0usize; max];
    for c in &per_game {
        for r in 0..c.len() {
            mean.question[r] += c.question[r];
            mean.positive[r] += c.positive[r];
            mean.negative[r] += c.negative[r];
            reached[r] += 1;
        }
    }
    for r in 0..max {
        let k = reached[r] as f64;
        mean.question[r] /= k;
        mean.positive[r] /= k;
        mean.negative[r] /= k;
    }
    RateCurves { per_game, mean }
}

/// Knowledge fractions indexed by round `t`, where `t = 0` is the state
/// before any delivery.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct KnowledgeCurves {
    /// Mean fraction of other players whose expertise a player knows.
    pub overall: Vec<f64>,
    /// Fraction of players who know their own expert (or already scored).
    pub relevant: Vec<f64>,
}

/// Knowledge after every round of one game, replayed through the rules engine.
pub fn game_knowledge(log: &GameLog) -> Result<KnowledgeCurves, AnalysisError> {
    let n = log.n_players();
    let mut curves = KnowledgeCurves {
        overall: vec![0.0],
        relevant: vec![0.0],
    };
    log.replay_with(|state| {
        let ledger = state.knowledge();
        let mut overall = 0.0;
        let mut relevant = 0.0;
        for p in (0..n).map(PlayerId) {
            let k = ledger.of(p);
            overall += k.known_expertise.keys().filter(|&&o| o != p).count() as f64 / (n - 1) as f64;
            if k.known_expert.is_some() || state.is_scored(p) {
                relevant += 1.0;
            }
        }
        curves.overall.push(overall / n as f64);
        curves.relevant.push(relevant / n as f64);
    })?;
    Ok(curves)
}

/// Averages per-game knowledge curves; a game that ended earlier keeps its
/// final value.
pub fn knowledge_curves<'a, I>(logs: I) -> Result<KnowledgeCurves, AnalysisError>
where
    I: IntoIterator<Item = &'a GameLog>,
{
    let games = logs
        .into_iter()
        .map(game_knowledge)
        .collect::<Result<Vec<_>, _>>()?;
    let len = games.iter().map(|g| g.overall.len()).max().unwrap_or(1);
    let mut out = KnowledgeCurves {
        overall: vec![0.0; len],
        relevant: vec![0.0; len],
    };
    if games.is_empty() {
        return Ok(out);
    }
    for g in &games {
        for t in 0..len {
            let i = t.min(g.overall.len() - 1);
            out.overall[t] += g.overall[i];
            out.relevant[t] += g.relevant[i];
        }
    }
    let k = games.len() as f64;
    out.overall.iter_mut().for_each(|v| *v /= k);
    out.relevant.iter_mut().for_each(|v| *v /= k);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeFractions {
    pub question: f64,
    pub positive: f64,
    pub negative: f64,
}

/// Shares of requests, positive replies and negations; `None` without messages.
pub fn message_type_fractions<'a, I>(logs: I) -> Option<TypeFractions>
where
    I: IntoIterator<Item = &'a GameLog>,
{
    let (mut q, mut pos, mut neg) = (0usize, 0usize, 0usize);
    for log in logs {
        for m in &log.messages {
            match m.kind {
                MessageType::Q => q += 1,
                MessageType::C | MessageType::R => pos += 1,
                MessageType::N => neg += 1,
            }
        }
    }
    let total = (q + pos + neg) as f64;
    (total > 0.0).then(|| TypeFractions {
        question: q as f64 / total,
        positive: pos as f64 / total,
        negative: neg as f64 / total,
    })
}
