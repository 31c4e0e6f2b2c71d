//! Acceptance checks. Runs without the libtest harness so every line is
//! printed, and exits non-zero if a hard criterion fails.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use contact_sketch::engine::{AppConfig, SweepPolicy};
use contact_sketch::graph::{space_estimate, GB_BITS};
use contact_sketch::ids::IdRegistry;
use contact_sketch::model::ConfigParams;
use contact_sketch::pathways::InfectionForest;
use contact_sketch::stream::{detect, parse_stream};
use contact_sketch::streamgen::{generate, oracle_trace, RandomContacts, Scenario, ScriptedContact};
use contact_sketch::{sigma, Engine, IdMode, SlotBits, TraceConfig, UserId, VirtualIdTable};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn params(days: u32, tau: u32, delta: u32, population: u32, q: u32, r: u32) -> ConfigParams {
    ConfigParams {
        days,
        tau,
        delta,
        rho: None,
        population,
        q,
        r,
        deployment: "01/01/2021:00:00".parse().unwrap(),
    }
}

fn csketch(data: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_csketch"))
        .env_remove("CSKETCH_DATA")
        .arg("--data")
        .arg(data)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn ten_user_replay() -> Outcome {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = work.path().join("data");
    let gen = work.path().join("gen");
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/ten_users.json");
    let t0 = Instant::now();
    csketch(&data, &["gen", scenario.to_str().unwrap(), gen.to_str().unwrap()])?;
    csketch(&data, &["init", "--config", gen.join("config.json").to_str().unwrap()])?;
    csketch(&data, &["ingest", gen.join("streams").to_str().unwrap()])?;
    let json = csketch(&data, &["trace", "--infected", "P2,P6", "--levels", "3", "--json"])?;
    let elapsed = t0.elapsed();

    let recs: Vec<Value> = json
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let gamma = |src: u64| -> BTreeSet<(u64, u64)> {
        recs.iter()
            .filter(|r| r.get("level").is_some() && r["source"] == src)
            .map(|r| (r["user"].as_u64().unwrap(), r["level"].as_u64().unwrap()))
            .collect()
    };
    let chi: BTreeSet<(u64, u64)> = recs
        .iter()
        .filter(|r| r.get("from").is_some())
        .map(|r| (r["from"].as_u64().unwrap(), r["to"].as_u64().unwrap()))
        .collect();
    let want2 = BTreeSet::from([(0, 1), (7, 1), (8, 1), (5, 2), (3, 3)]);
    let want6 = BTreeSet::from([(1, 1), (4, 2), (9, 2)]);
    let want_chi = BTreeSet::from([(2, 8), (2, 7), (2, 0), (0, 5), (5, 3), (6, 1), (1, 4), (1, 9)]);
    let entries = recs.iter().filter(|r| r.get("level").is_some()).count();
    let ok = gamma(2) == want2 && gamma(6) == want6 && chi == want_chi && entries == 8;
    check(
        ok && elapsed < Duration::from_secs(1),
        format!(
            "gamma/chi exact={ok}, gen+init+ingest+trace {:.0} ms (limit 1000)",
            elapsed.as_secs_f64() * 1e3
        ),
    )
}

fn bits(s: &str) -> SlotBits {
    s.parse().unwrap()
}

/// Some contact in `c1` is no later than some contact in `c2` (bit 0 latest).
fn semantic(c1: u32, c2: u32, n: u32) -> bool {
    (0..n).any(|i| c1 >> i & 1 == 1 && (0..=i).any(|j| c2 >> j & 1 == 1))
}

fn sigma_table() -> Outcome {
    let t0 = Instant::now();
    let examples = [
        ("11000", "01001", true),
        ("00100", "01000", false),
        ("01001", "11001", true),
        ("00000011", "00100100", false),
        ("10010010", "10010010", true),
    ];
    for (a, b, want) in examples {
        let got = sigma(&bits(a), &bits(b)).map_err(|e| e.to_string())?;
        if got != want {
            return Err(format!("sigma({a}, {b}) = {got}, expected {want}"));
        }
    }
    let n = 8u32;
    let all: Vec<SlotBits> = (0..1u32 << n).map(|v| SlotBits::from_u128(n, v.into())).collect();
    let mut pairs = 0u64;
    for c1 in 1..1u32 << n {
        for c2 in 1..1u32 << n {
            pairs += 1;
            let got = sigma(&all[c1 as usize], &all[c2 as usize]).map_err(|e| e.to_string())?;
            if got != semantic(c1, c2, n) {
                return Err(format!("n=8 c1={c1:08b} c2={c2:08b}: got {got}"));
            }
        }
    }
    let elapsed = t0.elapsed();
    check(
        elapsed < Duration::from_secs(60),
        format!(
            "5 worked examples, {pairs} nonzero pairs at n=8 agree, {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn space() -> Outcome {
    let gb = space_estimate(10_000_000, 64, 1344).map_err(|e| e.to_string())? / GB_BITS;
    check(
        (54.0..=56.0).contains(&gb),
        format!("space_estimate(1e7, 64, 1344) = {gb:.2} GB (accept 54..56)"),
    )
}

fn oracle_equivalence() -> Outcome {
    let t0 = Instant::now();
    let mut traced = 0usize;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let users = rng.gen_range(2..=40);
        let days = rng.gen_range(1..=7);
        let delta = if rng.gen_bool(0.5) { 20 } else { 12 };
        let levels = rng.gen_range(1..=3);
        let sc = Scenario {
            config: params(days, 60, delta, users, rng.gen_range(1..=4), rng.gen_range(1..=3)),
            ids: IdMode::Seeded { seed },
            horizon_days: rng.gen_range(1..=days + 1),
            contacts: vec![],
            random: Some(RandomContacts {
                seed,
                mean_contacts_per_user_per_day: rng.gen_range(0.5..6.0),
                min_run: 1,
                max_run: 40,
            }),
        };
        let generated = generate(&sc).map_err(|e| format!("seed {seed}: {e}"))?;
        let mut engine = Engine::new(AppConfig {
            trace: sc.config.clone(),
            ids: sc.ids,
            sweep: SweepPolicy::Manual,
        })
        .map_err(|e| format!("seed {seed}: {e}"))?;
        for (_, text) in &generated.streams {
            let r = engine.ingest_bytes(text.as_bytes());
            if r.parse_errors + r.sample_errors > 0 {
                return Err(format!("seed {seed}: {:?}", r.errors));
            }
        }
        let k = rng.gen_range(1..=3.min(users));
        let mut infected: Vec<UserId> = Vec::new();
        while infected.len() < k as usize {
            let p = UserId(rng.gen_range(0..users));
            if !infected.contains(&p) {
                infected.push(p);
            }
        }
        let want = oracle_trace(&generated.truth, &infected, levels);
        let got = engine
            .trace(&infected, levels)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        if got.levels() != want.levels() {
            return Err(format!(
                "seed {seed}: engine {:?} oracle {:?}",
                got.levels(),
                want.levels()
            ));
        }
        traced += got.gamma.len();
    }
    let elapsed = t0.elapsed();
    check(
        elapsed < Duration::from_secs(300),
        format!(
            "100 seeds agree ({traced} suspected users in total), {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn expiry() -> Outcome {
    // days 1, tau 60, delta 20: n = 24 slots, rho = 3
    let n = 24u64;
    let rho = 3u64;
    let mut cases = 0;
    for s in [0u64, 5, 23, 40] {
        for t in s..=s + n + 3 {
            let sc = Scenario {
                config: params(1, 60, 20, 4, 2, 1),
                ids: IdMode::Deterministic,
                horizon_days: 4,
                contacts: vec![
                    ScriptedContact {
                        a: 0,
                        b: 1,
                        start: s * rho,
                        length: rho,
                    },
                    ScriptedContact {
                        a: 2,
                        b: 3,
                        start: t * rho,
                        length: rho,
                    },
                ],
                random: None,
            };
            let generated = generate(&sc).map_err(|e| e.to_string())?;
            let mut engine = Engine::new(AppConfig {
                trace: sc.config.clone(),
                ids: sc.ids,
                sweep: SweepPolicy::Manual,
            })
            .map_err(|e| e.to_string())?;
            for (_, text) in &generated.streams {
                engine.ingest_bytes(text.as_bytes());
            }
            if engine.graph().now() != Some(t) {
                return Err(format!("s={s} t={t}: clock at {:?}", engine.graph().now()));
            }
            let live = t < s + n;
            let reached = engine
                .trace(&[UserId(0)], 3)
                .map_err(|e| e.to_string())?
                .gamma_of(UserId(0))
                .iter()
                .any(|e| e.user == UserId(1));
            if reached != live {
                return Err(format!("s={s} t={t}: P1 traced={reached}, window live={live}"));
            }
            engine.sweep();
            let kept = engine
                .graph()
                .neighbors(UserId(0))
                .map_err(|e| e.to_string())?
                .iter()
                .any(|&(u, _)| u == UserId(1));
            if kept != live {
                return Err(format!("s={s} t={t}: edge after sweep={kept}, window live={live}"));
            }
            cases += 1;
        }
    }
    check(
        true,
        format!("{cases} (contact slot, trace slot) cases: no influence from slot s+n on, edge swept"),
    )
}

/// Completion intervals of every close contact in a presence timeline.
fn run_splitting(timeline: &[bool], rho: usize, start: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut k = 0;
    while k < timeline.len() {
        if !timeline[k] {
            k += 1;
            continue;
        }
        let mut end = k;
        while end < timeline.len() && timeline[end] {
            end += 1;
        }
        for m in 1..=(end - k) / rho {
            out.push(start + (k + m * rho - 1) as u64);
        }
        k = end;
    }
    out
}

fn watch_window() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2021);
    let configs = [params(1, 15, 5, 4, 2, 1), params(1, 15, 3, 4, 2, 1)];
    let mut contacts = 0usize;
    for case in 0..10_000 {
        let cfg = TraceConfig::new(configs[case % 2].clone()).map_err(|e| e.to_string())?;
        let ids = IdRegistry::new(VirtualIdTable::assign(4, 1, IdMode::Deterministic).map_err(|e| e.to_string())?);
        let start = rng.gen_range(0..5000u64);
        let len = rng.gen_range(0..150);
        let density = rng.gen_range(0.3..0.95);
        let mut text = format!(
            "H P0 {} 0\n",
            cfg.deployment().plus_minutes(start * u64::from(cfg.delta()))
        );
        let mut presence = Vec::with_capacity(len);
        for _ in 0..len {
            let present = rng.gen_bool(density);
            presence.push(present);
            text.push_str(match (present, rng.gen_bool(0.3)) {
                (true, _) => "S 1 2,3\n",
                (false, true) => "G 1\n",
                (false, false) => "S 1 3\n",
            });
        }
        text.push_str("E\n");
        let recs = parse_stream(text.as_bytes()).map_err(|e| e.to_string())?;
        let (found, diags) = detect(&recs, &cfg, &ids).map_err(|e| e.to_string())?;
        if !diags.is_empty() {
            return Err(format!("case {case}: {diags:?}"));
        }
        let rho = u64::from(cfg.rho());
        let got: Vec<u64> = found
            .iter()
            .filter(|d| d.receiver == UserId(1))
            .map(|d| d.abs_slot * rho + u64::from(d.lambda))
            .collect();
        let want = run_splitting(&presence, rho as usize, start);
        if got != want {
            return Err(format!(
                "case {case} (start {start}, rho {rho}): got {got:?}, want {want:?}"
            ));
        }
        contacts += want.len();
    }
    check(
        true,
        format!("10000 timelines, {contacts} contacts, positions match run splitting"),
    )
}

fn disjoint_set() -> Outcome {
    let t0 = Instant::now();
    let users = 1_000_000u32;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut forest = InfectionForest::new(users);
    // independent partition: relabel the smaller side on every merge
    let mut label: Vec<u32> = (0..users).collect();
    let mut members: HashMap<u32, Vec<u32>> = (0..users).map(|p| (p, vec![p])).collect();
    let mut longest = 0;
    for _ in 0..1_000_000 {
        let a = rng.gen_range(0..users);
        let b = rng.gen_range(0..users);
        // links walked by the finds this operation performs
        let walked = forest.depth(UserId(a)).unwrap();
        longest = longest.max(walked);
        if rng.gen_bool(0.5) {
            longest = longest.max(forest.depth(UserId(b)).unwrap());
            forest.union(UserId(a), UserId(b)).map_err(|e| e.to_string())?;
            let (la, lb) = (label[a as usize], label[b as usize]);
            if la != lb {
                let (big, small) = if members[&la].len() >= members[&lb].len() {
                    (la, lb)
                } else {
                    (lb, la)
                };
                let moved = members.remove(&small).unwrap();
                for &p in &moved {
                    label[p as usize] = big;
                }
                members.get_mut(&big).unwrap().extend(moved);
            }
        } else {
            forest.find(UserId(a)).map_err(|e| e.to_string())?;
        }
    }
    // nodes never searched again keep their link chains
    let resting = (0..users).map(|p| forest.depth(UserId(p)).unwrap()).max().unwrap_or(0);
    let mut root_of_label: HashMap<u32, UserId> = HashMap::new();
    let mut label_of_root: HashMap<UserId, u32> = HashMap::new();
    for p in 0..users {
        let root = forest.find(UserId(p)).map_err(|e| e.to_string())?;
        let l = label[p as usize];
        if *root_of_label.entry(l).or_insert(root) != root || *label_of_root.entry(root).or_insert(l) != l {
            return Err(format!("P{p} is in the wrong set"));
        }
    }
    let elapsed = t0.elapsed();
    check(
        longest <= 5 && elapsed < Duration::from_secs(30),
        format!(
            "1e6 ops on {users} users: longest find chain {longest} (limit 5), resting depth {resting}, {} sets match, {:.2} s",
            members.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn throughput() -> Outcome {
    let users = 1000u32;
    let per_user = 1000usize;
    let cfg = params(14, 15, 3, users, 64, 4);
    let mut engine = Engine::new(AppConfig {
        trace: cfg.clone(),
        ids: IdMode::Deterministic,
        sweep: SweepPolicy::Manual,
    })
    .map_err(|e| e.to_string())?;
    let table = VirtualIdTable::assign(users, 4, IdMode::Deterministic).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let streams: Vec<String> = (0..users)
        .map(|p| {
            let own = *table.ids_of(UserId(p)).unwrap().start();
            let mut text = format!("H P{p} 01/01/2021:00:00 0\n");
            // each device sees a few stable neighbours so runs complete
            let near: Vec<u64> = (0..3)
                .map(|_| {
                    *table
                        .ids_of(UserId((p + rng.gen_range(1..users)) % users))
                        .unwrap()
                        .start()
                })
                .collect();
            for k in 0..per_user {
                let tran = own + (k as u64 / 5) % 4;
                let recs: Vec<String> = near
                    .iter()
                    .filter(|_| rng.gen_bool(0.9))
                    .map(|v| v.to_string())
                    .collect();
                if recs.is_empty() {
                    text.push_str("G 1\n");
                } else {
                    text.push_str(&format!("S {tran} {}\n", recs.join(",")));
                }
            }
            text.push_str("E\n");
            text
        })
        .collect();
    let t0 = Instant::now();
    let mut samples = 0;
    for text in &streams {
        let r = engine.ingest_bytes(text.as_bytes());
        if r.parse_errors + r.sample_errors > 0 {
            return Err(format!("{:?}", r.errors));
        }
        samples += r.samples + r.gaps;
    }
    let secs = t0.elapsed().as_secs_f64();
    let rate = samples as f64 / secs;
    let detail = format!("{samples} records in {secs:.2} s ({rate:.0}/s, soft limit 60 s)");
    if samples != (users as u64) * per_user as u64 {
        return Err(detail);
    }
    if secs < 60.0 {
        Ok(detail)
    } else {
        Ok(format!("{detail}; over the soft limit, reported only"))
    }
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("ten-user end-to-end replay", ten_user_replay),
        ("sigma truth table", sigma_table),
        ("space estimate", space),
        ("oracle equivalence", oracle_equivalence),
        ("sliding-window expiry", expiry),
        ("watch-window detection", watch_window),
        ("disjoint-set stress", disjoint_set),
        ("ingest throughput", throughput),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
