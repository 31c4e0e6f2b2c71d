use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use super::*;
use crate::fixtures::{daily_config, ten_users_until};

fn bits(s: &str) -> SlotBits {
    s.parse().unwrap()
}

fn sig(a: &str, b: &str) -> bool {
    sigma(&bits(a), &bits(b)).unwrap()
}

/// Some contact in `c1` is no later than some contact in `c2`.
fn semantic(c1: u32, c2: u32, n: u32) -> bool {
    (0..n).any(|i| c1 >> i & 1 == 1 && (0..=i).any(|j| c2 >> j & 1 == 1))
}

#[test]
fn worked_examples() {
    assert!(sig("11000", "01001"));
    assert!(!sig("00100", "01000"));
    assert!(sig("01001", "11001"));
    assert!(!sig("00000011", "00100100"));
    assert!(sig("10010010", "10010010"));
}

#[test]
fn rejects_zero_and_mixed_widths() {
    assert_eq!(sigma(&bits("000"), &bits("001")), Err(TraceError::ZeroVector));
    assert_eq!(sigma(&bits("001"), &bits("000")), Err(TraceError::ZeroVector));
    assert_eq!(sigma(&bits("001"), &bits("0001")), Err(TraceError::WidthMismatch(3, 4)));
}

#[test]
fn exhaustive_against_semantics() {
    for n in 1..=10u32 {
        let all: Vec<SlotBits> = (0..1u32 << n).map(|v| SlotBits::from_u128(n, v.into())).collect();
        for c1 in 1..1u32 << n {
            for c2 in 1..1u32 << n {
                let want = semantic(c1, c2, n);
                let got = sigma(&all[c1 as usize], &all[c2 as usize]).unwrap();
                assert_eq!(got, want, "n={n} c1={c1:b} c2={c2:b}");
                if c1 >= c2 {
                    assert!(want, "value shortcut disagrees at n={n} c1={c1:b} c2={c2:b}");
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn extra_bits_never_revoke(n in 1u32..40, c1 in 1u64.., c2 in 1u64.., i in 0u32..40, j in 0u32..40) {
        let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        let (c1, c2) = (c1 & mask, c2 & mask);
        prop_assume!(c1 != 0 && c2 != 0);
        let a = SlotBits::from_u128(n, c1.into());
        let b = SlotBits::from_u128(n, c2.into());
        if sigma(&a, &b).unwrap() {
            let mut a2 = a.clone();
            a2.set(i % n, true);
            prop_assert!(sigma(&a2, &b).unwrap());
            // a later contact on the second edge
            let lat = b.latest().unwrap();
            let mut b2 = b.clone();
            b2.set((j % n).min(lat), true);
            prop_assert!(sigma(&a, &b2).unwrap());
        }
    }
}

fn entries(r: &TraceResult, source: u32) -> BTreeSet<(u32, u32)> {
    r.gamma_of(UserId(source)).iter().map(|e| (e.user.0, e.level)).collect()
}

fn chi(r: &TraceResult) -> BTreeSet<(u32, u32)> {
    r.chi.iter().map(|e| (e.from.0, e.to.0)).collect()
}

#[test]
fn ten_user_example() {
    let g = ten_users_until(5);
    let r = trace_contacts(&g, &[UserId(2)], &TraceResult::default(), 3).unwrap();
    assert_eq!(entries(&r, 2), BTreeSet::from([(0, 1), (7, 1), (8, 1), (5, 2), (3, 3)]));
    assert_eq!(chi(&r), BTreeSet::from([(2, 8), (2, 7), (2, 0), (0, 5), (5, 3)]));

    let r6 = trace_contacts(&g, &[UserId(6)], &TraceResult::default(), 2).unwrap();
    assert_eq!(entries(&r6, 6), BTreeSet::from([(1, 1), (4, 2), (9, 2)]));
    assert_eq!(chi(&r6), BTreeSet::from([(6, 1), (1, 4), (1, 9)]));

    let both = trace_contacts(&g, &[UserId(2), UserId(6)], &TraceResult::default(), 3).unwrap();
    assert_eq!(entries(&both, 2), entries(&r, 2));
    assert_eq!(entries(&both, 6), entries(&r6, 6));
    // ordered by level
    assert!(both.gamma.windows(2).all(|w| w[0].level <= w[1].level));

    let r1 = trace_contacts(&g, &[UserId(2)], &TraceResult::default(), 1).unwrap();
    assert_eq!(entries(&r1, 2), BTreeSet::from([(0, 1), (7, 1), (8, 1)]));
}

#[test]
fn rerun_is_idempotent() {
    let g = ten_users_until(5);
    let r = trace_contacts(&g, &[UserId(2), UserId(6)], &TraceResult::default(), 3).unwrap();
    let again = trace_contacts(&g, &[UserId(2), UserId(6)], &r, 3).unwrap();
    assert_eq!(again, r);
}

#[test]
fn isolated_and_invalid() {
    let g = ten_users_until(5);
    // user 6's only live edge at slot 5 is to user 1; use a graph where 9 is alone
    let g0 = ten_users_until(0);
    let r = trace_contacts(&g0, &[UserId(9)], &TraceResult::default(), 3).unwrap();
    assert!(r.gamma.is_empty() && r.chi.is_empty());
    assert_eq!(r.infected, vec![UserId(9)]);
    assert_eq!(
        trace_contacts(&g, &[UserId(2)], &TraceResult::default(), 0),
        Err(TraceError::InvalidLevels)
    );
    assert_eq!(
        trace_contacts(&g, &[UserId(10)], &TraceResult::default(), 1),
        Err(TraceError::UnknownUser(UserId(10)))
    );
}

#[test]
fn infected_users_leave_gamma() {
    let g = ten_users_until(5);
    let r = trace_contacts(&g, &[UserId(2)], &TraceResult::default(), 3).unwrap();
    let r2 = trace_contacts(&g, &[UserId(0)], &r, 3).unwrap();
    assert!(r2.entry(UserId(0)).is_none());
    assert!(r2.is_infected(UserId(0)) && r2.is_infected(UserId(2)));
    // two infected neighbours never list each other
    let r3 = trace_contacts(&g, &[UserId(0), UserId(2)], &TraceResult::default(), 1).unwrap();
    assert!(r3.entry(UserId(0)).is_none() && r3.entry(UserId(2)).is_none());
    assert!(!r3.chi.iter().any(|e| e.to == UserId(0) || e.to == UserId(2)));
}

#[test]
fn direct_reads_scale_with_degree() {
    // every infected user has exactly q live contacts
    let q = 4u32;
    let users = 50;
    let mut g = ContactGraph::new(daily_config(5, users, q));
    for p in 0..users {
        for k in 1..=q / 2 {
            g.install(UserId(p), UserId((p + k) % users), 3, 4).unwrap();
        }
    }
    let infected: Vec<UserId> = (0..users).step_by(5).map(UserId).collect();
    let (_, stats) = trace_contacts_with_stats(&g, &infected, &TraceResult::default(), 1).unwrap();
    assert_eq!(stats.direct_reads, u64::from(q) * infected.len() as u64);
    assert_eq!(stats.sigma_calls, 0);
}

/// Reference tracer: enumerates every chain whose inner nodes sit at their own
/// minimal level and admits the end user at the first level any such chain
/// reaches it. Contacts are compared in absolute time.
fn chain_oracle(
    users: u32,
    live: &BTreeMap<(u32, u32), BTreeSet<u64>>,
    infected: &[u32],
    max_level: u32,
) -> BTreeMap<u32, u32> {
    let edge = |a: u32, b: u32| live.get(&(a.min(b), a.max(b))).filter(|s| !s.is_empty());
    let mut level: BTreeMap<u32, u32> = BTreeMap::new();
    let blocked = |u: u32, level: &BTreeMap<u32, u32>| infected.contains(&u) || level.contains_key(&u);
    for l in 1..=max_level {
        let mut found = BTreeSet::new();
        // chains: (node, slots of the edge that reached it)
        let mut chains: Vec<(u32, Option<&BTreeSet<u64>>)> = infected.iter().map(|&s| (s, None)).collect();
        for depth in 1..=l {
            let mut next = Vec::new();
            for &(p, prev) in &chains {
                for u in 0..users {
                    let Some(slots) = edge(p, u) else { continue };
                    if u == p {
                        continue;
                    }
                    let ok = prev.is_none_or(|prev| prev.first().unwrap() <= slots.last().unwrap());
                    if !ok {
                        continue;
                    }
                    if depth == l {
                        if !blocked(u, &level) {
                            found.insert(u);
                        }
                    } else if level.get(&u) == Some(&depth) {
                        next.push((u, Some(slots)));
                    }
                }
            }
            chains = next;
        }
        for u in found {
            level.insert(u, l);
        }
    }
    level
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn matches_chain_oracle(
        users in 2u32..=8,
        days in 1u32..=6,
        contacts in proptest::collection::vec((0u32..8, 0u32..8, 0u64..12), 0..30),
        infected in proptest::collection::btree_set(0u32..8, 1..3),
        max_level in 1u32..=4,
    ) {
        let cfg = daily_config(days, users, 3);
        let mut g = ContactGraph::new(cfg.clone());
        let mut slots: BTreeMap<(u32, u32), BTreeSet<u64>> = BTreeMap::new();
        let mut now = 0;
        let mut ordered = contacts.clone();
        ordered.sort_by_key(|c| c.2);
        for (a, b, s) in ordered {
            let (a, b) = (a % users, b % users);
            if a == b { continue; }
            g.install(UserId(a), UserId(b), s, 4).unwrap();
            slots.entry((a.min(b), a.max(b))).or_default().insert(s);
            now = now.max(s);
        }
        g.advance_clock(now);
        let n = u64::from(cfg.n());
        let live: BTreeMap<_, BTreeSet<u64>> = slots
            .into_iter()
            .map(|(k, v)| (k, v.into_iter().filter(|&s| s + n > now).collect()))
            .collect();
        let infected: Vec<u32> = infected.into_iter().map(|u| u % users).collect::<BTreeSet<_>>().into_iter().collect();
        let ids: Vec<UserId> = infected.iter().map(|&u| UserId(u)).collect();
        let r = trace_contacts(&g, &ids, &TraceResult::default(), max_level).unwrap();
        let got: BTreeMap<u32, u32> = r.gamma.iter().map(|e| (e.user.0, e.level)).collect();
        prop_assert_eq!(got.len(), r.gamma.len());
        prop_assert_eq!(&got, &chain_oracle(users, &live, &infected, max_level));

        // structural checks on the result
        prop_assert_eq!(r.chi.len(), r.gamma.len());
        for e in &r.gamma {
            prop_assert!(!infected.contains(&e.user.0));
            if e.level == 1 {
                prop_assert!(infected.contains(&e.via.0));
            } else {
                prop_assert_eq!(got.get(&e.via.0), Some(&(e.level - 1)));
            }
            let admitted = ChiEdge { from: e.via, to: e.user };
            prop_assert!(r.chi.contains(&admitted));
        }
    }
}
