use std::collections::BTreeMap;

use super::belief::Observation;
use crate::game::{MessageType, PlayerId};
use crate::log::GameLog;

/// Reply-time evidence `me` collected during one finished game.
///
/// Only the first request to each partner and that partner's first reply
/// count. A referral following a negation is scored as an instant reply.
/// Requests sent in the final round carry no information and are skipped.
pub fn extract_observations(log: &GameLog, me: PlayerId) -> Vec<Observation> {
    let mut first_request: BTreeMap<PlayerId, u32> = BTreeMap::new();
    let mut first_reply: BTreeMap<PlayerId, (u32, MessageType)> = BTreeMap::new();
    let mut referred_after: BTreeMap<PlayerId, bool> = BTreeMap::new();

    for m in &log.messages {
        if m.from == me && m.kind == MessageType::Q {
            first_request.entry(m.to).or_insert(m.round);
        } else if m.to == me && m.kind.is_reply() {
            match first_reply.get(&m.from) {
                None => {
                    first_reply.insert(m.from, (m.round, m.kind));
                }
                Some((_, MessageType::N)) if m.kind == MessageType::R => {
                    referred_after.insert(m.from, true);
                }
                Some(_) => {}
            }
        }
    }

    let mut out = Vec::new();
    for (&partner, &t_q) in &first_request {
        let obs = match first_reply.get(&partner) {
            Some(&(t_r, _)) => {
                let k = if referred_after.contains_key(&partner) {
                    1
                } else {
                    t_r - t_q
                };
                Observation {
                    partner,
                    k,
                    replied: true,
                }
            }
            None if log.rounds > t_q => Observation {
                partner,
                k: log.rounds - t_q,
                replied: false,
            },
            None => continue,
        };
        out.push(obs);
    }
    out
}
