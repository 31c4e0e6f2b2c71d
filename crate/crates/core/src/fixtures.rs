//! Shared unit-test fixtures.

use std::collections::BTreeMap;

use crate::graph::ContactGraph;
use crate::model::{ConfigParams, TraceConfig, UserId};

/// Daily slots (tau = 1 day, delta = 288 min, rho = 5).
pub(crate) fn daily_config(days: u32, population: u32, q: u32) -> TraceConfig {
    TraceConfig::new(ConfigParams {
        days,
        tau: 1440,
        delta: 288,
        rho: None,
        population,
        q,
        r: 2,
        deployment: "01/01/2021:00:00".parse().unwrap(),
    })
    .unwrap()
}

/// One-day contacts of the ten-user example, as `(a, b, slots)` with day `k`
/// at slot `k - 1`.
pub(crate) const TEN_USER_CONTACTS: &[(u32, u32, &[u64])] = &[
    (0, 2, &[1, 2]),
    (0, 5, &[2, 5]),
    (2, 7, &[3]),
    (3, 7, &[2]),
    (2, 8, &[2]),
    (3, 8, &[1]),
    (3, 5, &[1, 2, 5]),
    (1, 9, &[5]),
    (6, 8, &[0]),
    (1, 6, &[3, 4]),
    (1, 4, &[4]),
];

/// The ten-user graph with every contact up to `last_slot` installed.
pub(crate) fn ten_users_until(last_slot: u64) -> ContactGraph {
    let mut g = ContactGraph::new(daily_config(5, 10, 4));
    let mut by_slot: BTreeMap<u64, Vec<(u32, u32)>> = BTreeMap::new();
    for &(a, b, slots) in TEN_USER_CONTACTS {
        for &s in slots {
            by_slot.entry(s).or_default().push((a, b));
        }
    }
    for (s, pairs) in by_slot.range(..=last_slot) {
        for &(a, b) in pairs {
            // a run completing at the last interval of the day lands on that day
            g.install(UserId(a), UserId(b), *s, 4).unwrap();
        }
    }
    g.advance_clock(last_slot);
    g
}
