//! Trace answers computed from ground truth only: absolute contact slots per
//! pair, no graph, no contact vectors.

use std::collections::{BTreeMap, BTreeSet};

use super::GroundTruth;
use crate::model::UserId;
use crate::trace::{ChiEdge, TraceEntry, TraceResult};

/// Admits a user at level `l` when a chain of `l` contacts leads to it from
/// an infected user, every hop having a live contact no earlier than the
/// earliest usable contact of the hop before it, and every inner user sitting
/// at its own smallest level.
pub fn oracle_trace(truth: &GroundTruth, infected: &[UserId], max_level: u32) -> TraceResult {
    let mut live: BTreeMap<u32, Vec<(u32, u64, u64)>> = BTreeMap::new();
    for p in &truth.pairs {
        let slots = truth.live_slots(p.a, p.b);
        if let (Some(&lo), Some(&hi)) = (slots.iter().min(), slots.iter().max()) {
            live.entry(p.a.0).or_default().push((p.b.0, lo, hi));
            live.entry(p.b.0).or_default().push((p.a.0, lo, hi));
        }
    }
    let sources: BTreeSet<u32> = infected.iter().map(|u| u.0).collect();
    let mut result = TraceResult {
        infected: sources.iter().map(|&u| UserId(u)).collect(),
        ..TraceResult::default()
    };
    let mut placed: BTreeSet<u32> = sources.clone();

    // frontier: user -> (earliest usable slot into it, via, source)
    let mut frontier: BTreeMap<u32, (u64, u32, u32)> = BTreeMap::new();
    for &s in &sources {
        for &(u, lo, _) in live.get(&s).into_iter().flatten() {
            if placed.contains(&u) {
                continue;
            }
            let e = frontier.entry(u).or_insert((lo, s, s));
            if lo < e.0 {
                *e = (lo, s, s);
            }
        }
    }
    let mut level = 1;
    while !frontier.is_empty() {
        for (&u, &(_, via, source)) in &frontier {
            placed.insert(u);
            result.gamma.push(TraceEntry {
                user: UserId(u),
                level,
                via: UserId(via),
                source: UserId(source),
            });
            result.chi.push(ChiEdge {
                from: UserId(via),
                to: UserId(u),
            });
        }
        if level == max_level {
            break;
        }
        let mut next: BTreeMap<u32, (u64, u32, u32)> = BTreeMap::new();
        for (&p, &(usable, _, source)) in &frontier {
            for &(u, lo, hi) in live.get(&p).into_iter().flatten() {
                if placed.contains(&u) || hi < usable {
                    continue;
                }
                let e = next.entry(u).or_insert((lo, p, source));
                if lo < e.0 {
                    *e = (lo, p, source);
                }
            }
        }
        frontier = next;
        level += 1;
    }
    result
}
