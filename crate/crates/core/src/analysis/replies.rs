//! Reply lags and reply rates over first-request events.
//!
//! An event is the first request from a requester to a responder within a
//! game, including requests in the final round. Its outcome is the
//! responder's first reply to the requester, if any. The knowledge-conditioned
//! no-reply rate counts events where the responder was the requester's expert
//! or learned who the expert is at any point of the game.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::game::{MessageType, PlayerId};
use crate::log::GameLog;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReplyStats {
    pub events: usize,
    pub negative_replies: usize,
    pub positive_replies: usize,
    pub knowledge_events: usize,
    pub knowledge_unanswered: usize,
    /// Mean lag of first replies that are negations.
    pub lag_n: Option<f64>,
    /// Mean lag of first replies that are confirmations or referrals.
    pub lag_y: Option<f64>,
    pub rate_n: Option<f64>,
    pub rate_y: Option<f64>,
    pub rate_noreply_with_knowledge: Option<f64>,
}

#[derive(Default)]
struct Tally {
    events: usize,
    n_count: usize,
    n_lag: u64,
    y_count: usize,
    y_lag: u64,
    knowing: usize,
    knowing_unanswered: usize,
}

impl Tally {
    fn add_game(&mut self, log: &GameLog) {
        let mut first_q: BTreeMap<(PlayerId, PlayerId), u32> = BTreeMap::new();
        let mut first_reply: BTreeMap<(PlayerId, PlayerId), (u32, MessageType)> = BTreeMap::new();
        for m in &log.messages {
            if m.kind == MessageType::Q {
                first_q.entry((m.from, m.to)).or_insert(m.round);
            } else {
                first_reply.entry((m.from, m.to)).or_insert((m.round, m.kind));
            }
        }
        for (&(requester, responder), &t_q) in &first_q {
            self.events += 1;
            let expert = log.assignment.expert_of(requester);
            let knew = responder == expert || first_q.contains_key(&(expert, responder));
            match first_reply.get(&(responder, requester)) {
                Some(&(t_r, kind)) => {
                    let lag = u64::from(t_r - t_q);
                    if kind == MessageType::N {
                        self.n_count += 1;
                        self.n_lag += lag;
                    } else {
                        self.y_count += 1;
                        self.y_lag += lag;
                    }
                    if knew {
                        self.knowing += 1;
                    }
                }
                None => {
                    if knew {
                        self.knowing += 1;
                        self.knowing_unanswered += 1;
                    }
                }
            }
        }
    }

    fn finish(self) -> ReplyStats {
        let ratio = |num: f64, den: usize| (den > 0).then(|| num / den as f64);
        ReplyStats {
            events: self.events,
            negative_replies: self.n_count,
            positive_replies: self.y_count,
            knowledge_events: self.knowing,
            knowledge_unanswered: self.knowing_unanswered,
            lag_n: ratio(self.n_lag as f64, self.n_count),
            lag_y: ratio(self.y_lag as f64, self.y_count),
            rate_n: ratio(self.n_count as f64, self.events),
            rate_y: ratio(self.y_count as f64, self.events),
            rate_noreply_with_knowledge: ratio(self.knowing_unanswered as f64, self.knowing),
        }
    }
}

/// Pools every first-request event across `logs`.
pub fn reply_stats<'a, I>(logs: I) -> ReplyStats
where
    I: IntoIterator<Item = &'a GameLog>,
{
    let mut t = Tally::default();
    for log in logs {
        t.add_game(log);
    }
    t.finish()
}
