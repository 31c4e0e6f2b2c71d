//! Synthetic device streams with an independently computed ground truth.
//!
//! [`generate`] turns a contact script (or a seeded random one) into one
//! wire-format stream per user plus the slots each pair must register.
//! [`oracle_trace`] answers trace queries from that ground truth alone.

mod oracle;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{IdError, IdMode, VirtualIdTable};
use crate::model::{ConfigError, ConfigParams, TraceConfig, UserId, MINUTES_PER_DAY};

pub use oracle::oracle_trace;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("contact {index}: {detail}")]
    BadContact { index: usize, detail: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Id(#[from] IdError),
}

/// One scripted proximity episode, in sample intervals since deployment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedContact {
    pub a: u32,
    pub b: u32,
    pub start: u64,
    pub length: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RandomContacts {
    pub seed: u64,
    pub mean_contacts_per_user_per_day: f64,
    pub min_run: u64,
    pub max_run: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Scenario {
    pub config: ConfigParams,
    #[serde(default)]
    pub ids: IdMode,
    pub horizon_days: u32,
    #[serde(default)]
    pub contacts: Vec<ScriptedContact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomContacts>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSlots {
    pub a: UserId,
    pub b: UserId,
    pub slots: Vec<u64>,
}

/// What ingesting the generated streams must produce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GroundTruth {
    pub users: u32,
    pub n: u32,
    /// Graph clock after all streams are ingested.
    pub now: Option<u64>,
    /// Registered slots per unordered pair (`a < b`), ascending.
    pub pairs: Vec<PairSlots>,
    pub streams: u64,
    pub samples: u64,
    pub gaps: u64,
    /// Detections over all streams; each contact is seen from both ends.
    pub detections: u64,
}

impl GroundTruth {
    pub fn slots(&self, a: UserId, b: UserId) -> &[u64] {
        let key = (a.min(b), a.max(b));
        self.pairs
            .iter()
            .find(|p| (p.a, p.b) == key)
            .map_or(&[], |p| p.slots.as_slice())
    }

    /// Registered slots still inside the window at `now`.
    pub fn live_slots(&self, a: UserId, b: UserId) -> Vec<u64> {
        let Some(now) = self.now else { return Vec::new() };
        let n = u64::from(self.n);
        self.slots(a, b).iter().copied().filter(|&s| s + n > now).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Generated {
    /// One stream per user, in user order.
    pub streams: Vec<(UserId, String)>,
    pub truth: GroundTruth,
}

impl Scenario {
    pub fn trace_config(&self) -> Result<TraceConfig, GenError> {
        Ok(TraceConfig::new(self.config.clone())?)
    }

    /// Total sample intervals in the horizon.
    pub fn horizon_intervals(&self) -> u64 {
        MINUTES_PER_DAY * u64::from(self.horizon_days) / u64::from(self.config.delta.max(1))
    }

    /// The scripted contacts plus the seeded random ones.
    pub fn contact_list(&self) -> Result<Vec<ScriptedContact>, GenError> {
        let cfg = self.trace_config()?;
        let horizon = self.horizon_intervals();
        let mut all = self.contacts.clone();
        if let Some(rc) = &self.random {
            if rc.min_run == 0 || rc.min_run > rc.max_run || rc.max_run > horizon {
                return Err(GenError::Invalid(format!(
                    "run bounds {}..={} do not fit a horizon of {horizon} intervals",
                    rc.min_run, rc.max_run
                )));
            }
            if cfg.population() < 2
                || rc.mean_contacts_per_user_per_day.is_nan()
                || rc.mean_contacts_per_user_per_day < 0.0
            {
                return Err(GenError::Invalid(
                    "random contacts need two users and a non-negative mean".into(),
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(rc.seed);
            let users = cfg.population();
            let total = (rc.mean_contacts_per_user_per_day * f64::from(users) * f64::from(self.horizon_days) / 2.0)
                .round() as u64;
            for _ in 0..total {
                let a = rng.gen_range(0..users);
                let mut b = rng.gen_range(0..users - 1);
                if b >= a {
                    b += 1;
                }
                let length = rng.gen_range(rc.min_run..=rc.max_run);
                let start = rng.gen_range(0..=horizon - length);
                all.push(ScriptedContact { a, b, start, length });
            }
        }
        for (index, c) in all.iter().enumerate() {
            let bad = |detail: String| GenError::BadContact { index, detail };
            if c.a == c.b {
                return Err(bad(format!("user {} paired with itself", c.a)));
            }
            if c.a.max(c.b) >= cfg.population() {
                return Err(bad(format!("user {} outside population", c.a.max(c.b))));
            }
            if c.length == 0 || c.start + c.length > horizon {
                return Err(bad(format!(
                    "intervals {}..{} outside horizon of {horizon}",
                    c.start,
                    c.start + c.length
                )));
            }
        }
        Ok(all)
    }
}

/// Builds the streams and the ground truth for `scenario`.
pub fn generate(scenario: &Scenario) -> Result<Generated, GenError> {
    let cfg = scenario.trace_config()?;
    let contacts = scenario.contact_list()?;
    let table = VirtualIdTable::assign(cfg.population(), cfg.r(), scenario.ids)?;
    let users = cfg.population();

    // per user: interval -> receivers present
    let mut seen: Vec<BTreeMap<u64, Vec<u32>>> = vec![BTreeMap::new(); users as usize];
    // per pair: sorted distinct intervals
    let mut pair_intervals: BTreeMap<(u32, u32), Vec<u64>> = BTreeMap::new();
    for c in &contacts {
        for k in c.start..c.start + c.length {
            seen[c.a as usize].entry(k).or_default().push(c.b);
            seen[c.b as usize].entry(k).or_default().push(c.a);
        }
        pair_intervals
            .entry((c.a.min(c.b), c.a.max(c.b)))
            .or_default()
            .extend(c.start..c.start + c.length);
    }

    let vid = |u: u32, k: u64| -> u64 {
        let ids = table.ids_of(UserId(u)).expect("user in range");
        ids.start() + k % u64::from(cfg.r())
    };
    let rho = u64::from(cfg.rho());
    let mut streams = Vec::with_capacity(users as usize);
    let (mut samples, mut gaps) = (0, 0);
    let mut last_slot: Option<u64> = None;
    for u in 0..users {
        let intervals = &seen[u as usize];
        let first = intervals.keys().next().copied().unwrap_or(0);
        let start = cfg.deployment().plus_minutes(first * u64::from(cfg.delta()));
        let mut text = format!("H {} {} {}\n", UserId(u), start, table.epoch());
        let mut expect = first;
        for (&k, recs) in intervals {
            if k > expect {
                text.push_str(&format!("G {}\n", k - expect));
                gaps += 1;
            }
            let mut recs = recs.clone();
            recs.sort_unstable();
            recs.dedup();
            let list: Vec<String> = recs.iter().map(|&r| vid(r, k).to_string()).collect();
            text.push_str(&format!("S {} {}\n", vid(u, k), list.join(",")));
            samples += 1;
            expect = k + 1;
            last_slot = last_slot.max(Some(k / rho));
        }
        text.push_str("E\n");
        streams.push((UserId(u), text));
    }

    let mut pairs = Vec::new();
    let mut detections = 0;
    for ((a, b), mut ks) in pair_intervals {
        ks.sort_unstable();
        ks.dedup();
        let slots = registered_slots(&ks, &cfg);
        detections += 2 * completed_runs(&ks, rho).len() as u64;
        pairs.push(PairSlots {
            a: UserId(a),
            b: UserId(b),
            slots,
        });
    }
    Ok(Generated {
        streams,
        truth: GroundTruth {
            users,
            n: cfg.n(),
            now: last_slot,
            pairs,
            streams: u64::from(users),
            samples,
            gaps,
            detections,
        },
    })
}

/// Interval indices at which a run of `rho` consecutive intervals completes,
/// counting each maximal run in whole multiples of `rho`.
pub fn completed_runs(intervals: &[u64], rho: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < intervals.len() {
        let mut j = i;
        while j + 1 < intervals.len() && intervals[j + 1] == intervals[j] + 1 {
            j += 1;
        }
        let len = (j - i + 1) as u64;
        for m in 1..=len / rho {
            out.push(intervals[i] + m * rho - 1);
        }
        i = j + 1;
    }
    out
}

/// Slot a completed run is recorded in: the slot holding most of the run,
/// which is the previous slot when the run ends in the first half of a slot.
fn registered_slots(intervals: &[u64], cfg: &TraceConfig) -> Vec<u64> {
    let rho = u64::from(cfg.rho());
    let mut slots: Vec<u64> = completed_runs(intervals, rho)
        .into_iter()
        .map(|k| {
            let (slot, lambda) = (k / rho, k % rho);
            if lambda > rho / 2 || slot == 0 || cfg.n() == 1 {
                slot
            } else {
                slot - 1
            }
        })
        .collect();
    slots.sort_unstable();
    slots.dedup();
    slots
}
