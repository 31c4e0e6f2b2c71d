//! The trace operator and level-wise contact tracing.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::ContactGraph;
use crate::model::{SlotBits, UserId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("trace operator applied to a zero vector")]
    ZeroVector,
    #[error("vector widths differ ({0} vs {1})")]
    WidthMismatch(u32, u32),
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("level bound must be at least 1")]
    InvalidLevels,
}

/// Can infection pass along a two-hop path whose first edge carries `c1` and
/// second edge carries `c2`? True iff some contact on the first edge is no
/// later than some contact on the second.
pub fn sigma(c1: &SlotBits, c2: &SlotBits) -> Result<bool, TraceError> {
    if c1.len() != c2.len() {
        return Err(TraceError::WidthMismatch(c1.len(), c2.len()));
    }
    let (Some(i), Some(j)) = (c1.earliest(), c2.latest()) else {
        return Err(TraceError::ZeroVector);
    };
    if c1 >= c2 {
        return Ok(true);
    }
    let msb = c1.len() - 1;
    if c1.get(msb) && c2.get(msb) {
        return Ok(true);
    }
    Ok(i >= j)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraceEntry {
    pub user: UserId,
    pub level: u32,
    pub via: UserId,
    /// Infected user at the root of the discovery path.
    pub source: UserId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChiEdge {
    pub from: UserId,
    pub to: UserId,
}

/// Accumulated trace state: infected set, suspected list and the directed
/// edges along which suspects were admitted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceResult {
    pub infected: Vec<UserId>,
    pub gamma: Vec<TraceEntry>,
    pub chi: Vec<ChiEdge>,
}

impl TraceResult {
    pub fn entry(&self, user: UserId) -> Option<&TraceEntry> {
        self.gamma.iter().find(|e| e.user == user)
    }

    pub fn is_infected(&self, user: UserId) -> bool {
        self.infected.contains(&user)
    }

    /// Suspects discovered from `source`, ordered by level then discovery.
    pub fn gamma_of(&self, source: UserId) -> Vec<TraceEntry> {
        self.gamma.iter().filter(|e| e.source == source).copied().collect()
    }

    /// `(user, level)` pairs sorted by user.
    pub fn levels(&self) -> Vec<(UserId, u32)> {
        let mut v: Vec<_> = self.gamma.iter().map(|e| (e.user, e.level)).collect();
        v.sort_unstable();
        v
    }
}

/// Work counters of one trace call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceStats {
    /// Adjacency records read while expanding infected users.
    pub direct_reads: u64,
    /// Adjacency records read while expanding suspects.
    pub indirect_reads: u64,
    pub sigma_calls: u64,
}

struct Candidate {
    via: UserId,
    source: UserId,
    bits: SlotBits,
    // earliest index of the admitting vector; larger is earlier in time
    key: u32,
}

/// Traces `new_infected` through `g` for up to `max_level` levels and merges
/// the outcome into `prior`.
///
/// Levels are built one at a time. A user reachable from several members of
/// the previous level is admitted once, through the predecessor whose edge
/// holds the earliest contact (first discovery breaks ties), since that edge
/// admits the most continuations.
pub fn trace_contacts(
    g: &ContactGraph,
    new_infected: &[UserId],
    prior: &TraceResult,
    max_level: u32,
) -> Result<TraceResult, TraceError> {
    trace_contacts_with_stats(g, new_infected, prior, max_level).map(|(r, _)| r)
}

pub fn trace_contacts_with_stats(
    g: &ContactGraph,
    new_infected: &[UserId],
    prior: &TraceResult,
    max_level: u32,
) -> Result<(TraceResult, TraceStats), TraceError> {
    if max_level == 0 {
        return Err(TraceError::InvalidLevels);
    }
    let users = g.config().population();
    if let Some(&p) = new_infected.iter().find(|p| p.0 >= users) {
        return Err(TraceError::UnknownUser(p));
    }

    let mut result = prior.clone();
    let mut sources = Vec::new();
    for &p in new_infected {
        if !sources.contains(&p) {
            sources.push(p);
        }
        if !result.infected.contains(&p) {
            result.infected.push(p);
        }
    }
    // a suspect that tests positive leaves the suspect list
    let now_infected: HashSet<UserId> = result.infected.iter().copied().collect();
    result.gamma.retain(|e| !now_infected.contains(&e.user));

    let mut seen: HashSet<UserId> = now_infected;
    seen.extend(result.gamma.iter().map(|e| e.user));
    let mut stats = TraceStats::default();

    // level 1
    let mut order: Vec<UserId> = Vec::new();
    let mut best: HashMap<UserId, Candidate> = HashMap::new();
    for &s in &sources {
        for (u, a) in g.neighbors(s).map_err(|_| TraceError::UnknownUser(s))? {
            stats.direct_reads += 1;
            if seen.contains(&u) {
                continue;
            }
            let bits = g.view(a);
            offer(
                &mut order,
                &mut best,
                u,
                Candidate {
                    via: s,
                    source: s,
                    key: earliest(&bits),
                    bits,
                },
            );
        }
    }

    let mut level = 1;
    loop {
        let mut frontier = Vec::with_capacity(order.len());
        for u in order.drain(..) {
            let c = best.remove(&u).expect("every ordered user has a candidate");
            seen.insert(u);
            result.gamma.push(TraceEntry {
                user: u,
                level,
                via: c.via,
                source: c.source,
            });
            result.chi.push(ChiEdge { from: c.via, to: u });
            frontier.push((u, c));
        }
        if frontier.is_empty() || level == max_level {
            break;
        }
        level += 1;
        for (p, pc) in &frontier {
            for (u, a) in g.neighbors(*p).map_err(|_| TraceError::UnknownUser(*p))? {
                stats.indirect_reads += 1;
                if seen.contains(&u) {
                    continue;
                }
                let bits = g.view(a);
                stats.sigma_calls += 1;
                if sigma(&pc.bits, &bits)? {
                    let cand = Candidate {
                        via: *p,
                        source: pc.source,
                        key: earliest(&bits),
                        bits,
                    };
                    offer(&mut order, &mut best, u, cand);
                }
            }
        }
    }
    Ok((result, stats))
}

fn earliest(bits: &SlotBits) -> u32 {
    bits.earliest().expect("live neighbors have nonzero vectors")
}

fn offer(order: &mut Vec<UserId>, best: &mut HashMap<UserId, Candidate>, u: UserId, cand: Candidate) {
    match best.get_mut(&u) {
        Some(cur) => {
            if cand.key > cur.key {
                *cur = cand;
            }
        }
        None => {
            order.push(u);
            best.insert(u, cand);
        }
    }
}

#[cfg(test)]
mod tests;
