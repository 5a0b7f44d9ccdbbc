//! One pass/fail line per acceptance criterion.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ftmrs_cli::presets::{Plan, Preset, DESK_SIZES, FAILED_FRACTIONS, TABLE3_SIZES};
use ftmrs_cli::{cmd_run, run_all, RunManifest};
use ftmrs_core::config::{RedundancyMode, ScenarioConfig};
use ftmrs_core::engine::{run_with, ScenarioRun, Simulation};
use ftmrs_core::faults::Onset;
use ftmrs_core::metrics::{detection_rounds, series};
use ftmrs_core::model::{classify_role, HardwareStatus, NodeRole};
use ftmrs_core::routing::{build_path_set, path_cost, shortest_path, LinkCost};
use ftmrs_core::topology::NetworkGraph;
use ftmrs_core::{EnergyParams, NodeId, Position};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

const ROUND0_BUDGET: Duration = Duration::from_secs(1);
const LIFETIME_BUDGET: Duration = Duration::from_secs(300);
const LIFETIME_SEEDS: u64 = 5;
const MIN_R2: f64 = 0.99;
const LEMMA1_MIN_RATIO: f64 = 2.5;
const LEMMA1_ROUNDS: u64 = 100;
const FIG9_K1_CEILING: f64 = 0.05;
const FIG9_SEEDS: u64 = 5;
const DIAGNOSIS_SEEDS: u64 = 10;
const DIAGNOSIS_FAULTS: usize = 100;
const DIAGNOSIS_WINDOW: u64 = 10;
const MIN_DIAGNOSIS_RATE: f64 = 0.90;
const ORACLE_GRAPHS: usize = 500;
const ORACLE_MAX_NODES: usize = 8;
const FUZZ_PATH_SETS: usize = 10_000;
const CONSERVATION_RTOL: f64 = 1e-9;

/// Energy books checked over every run the criteria produce.
#[derive(Default)]
struct Books {
    rounds: u64,
    worst: f64,
    failures: Vec<String>,
}

impl Books {
    fn audit(&mut self, label: &str, run: &ScenarioRun) {
        let initial = run.initial_energy;
        for r in &run.reports {
            self.rounds += 1;
            let residual = r.global_energy;
            let rel = (initial - r.charged - residual).abs() / initial;
            self.worst = self.worst.max(rel);
            if rel > CONSERVATION_RTOL {
                self.failures.push(format!("{label} round {}", r.round));
            }
        }
    }
}

type Outcome = (bool, String);

fn check(books: &mut Books, f: impl FnOnce(&mut Books) -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(|| f(books))) {
        Ok(o) => o,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    }
}

fn c1_round0(_: &mut Books) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let m = RunManifest {
        preset: Some(Preset::Table3),
        rounds: Some(0),
        ..RunManifest::new(dir.path())
    };
    cmd_run(&m).unwrap();
    let elapsed = t.elapsed();
    let mut ok = elapsed < ROUND0_BUDGET;
    let mut seen = Vec::new();
    for f in [0, 40] {
        for n in TABLE3_SIZES {
            let csv = fs::read_to_string(dir.path().join(format!("table3_n{n}_f{f}_seed1.csv"))).unwrap();
            let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
            let energy: f64 = row[2].parse().unwrap();
            ok &= row[1] == "0" && energy == 0.5 * n as f64;
            seen.push(row[2].to_string());
        }
    }
    (ok, format!("round-0 J = [{}] in {:.2?}", seen.join(", "), elapsed))
}

fn r_squared(points: &[(f64, f64)]) -> f64 {
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

struct Lifetimes {
    /// (node_count, fault percent) -> per-seed lifetimes.
    by_cell: BTreeMap<(usize, u32), Vec<u64>>,
    fault_free: Vec<ScenarioRun>,
    elapsed: Duration,
}

fn lifetime_runs(books: &mut Books) -> Lifetimes {
    let mut configs = Vec::new();
    for seed in 1..=LIFETIME_SEEDS {
        let Plan::Series(scenarios) = Preset::Table3Desk.plan(seed, None) else {
            unreachable!()
        };
        configs.extend(scenarios.into_iter().map(|s| s.config));
    }
    let t = Instant::now();
    let runs = run_all(&configs, 0).unwrap();
    let elapsed = t.elapsed();
    let mut by_cell: BTreeMap<(usize, u32), Vec<u64>> = BTreeMap::new();
    let mut fault_free = Vec::new();
    for (cfg, run) in configs.iter().zip(runs) {
        books.audit("lifetime", &run);
        // Lifetime is the first round in which global energy reaches zero.
        let zero = run.reports.iter().find(|r| r.global_energy == 0.0).map(|r| r.round);
        assert_eq!(zero, run.lifetime, "seed {} N {}", cfg.seed, cfg.node_count);
        let pct = (cfg.faults.node_fault_fraction * 100.0).round() as u32;
        by_cell
            .entry((cfg.node_count, pct))
            .or_default()
            .push(run.lifetime.expect("network dies within the round limit"));
        if pct == 0 {
            fault_free.push(run);
        }
    }
    Lifetimes {
        by_cell,
        fault_free,
        elapsed,
    }
}

fn mean(v: &[u64]) -> f64 {
    v.iter().sum::<u64>() as f64 / v.len() as f64
}

fn c2_lifetime(l: &Lifetimes) -> Outcome {
    let m0: Vec<f64> = DESK_SIZES.iter().map(|&n| mean(&l.by_cell[&(n, 0)])).collect();
    let m40: Vec<f64> = DESK_SIZES.iter().map(|&n| mean(&l.by_cell[&(n, 40)])).collect();
    let increasing = m0.windows(2).all(|w| w[0] < w[1]);
    let faults_shorten = m0.iter().zip(&m40).all(|(a, b)| b < a);
    let per_seed = DESK_SIZES
        .iter()
        .map(|&n| {
            l.by_cell[&(n, 0)]
                .iter()
                .zip(&l.by_cell[&(n, 40)])
                .filter(|(a, b)| b < a)
                .count()
        })
        .sum::<usize>();
    let ok = increasing && faults_shorten && l.elapsed < LIFETIME_BUDGET;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.0}")).collect::<Vec<_>>().join(" < ");
    (
        ok,
        format!(
            "N={DESK_SIZES:?} mean L(0%) = {} ; mean L(40%) = [{}] ; 40% < 0% in {per_seed}/{} seed pairs ; {} runs in {:.1?}",
            fmt(&m0),
            m40.iter().map(|x| format!("{x:.0}")).collect::<Vec<_>>().join(", "),
            DESK_SIZES.len() * LIFETIME_SEEDS as usize,
            l.by_cell.values().map(Vec::len).sum::<usize>(),
            l.elapsed
        ),
    )
}

fn c3_linear(l: &Lifetimes) -> Outcome {
    let r2: Vec<f64> = l
        .fault_free
        .iter()
        .map(|run| {
            let cut = 0.8 * run.lifetime.unwrap() as f64;
            let pts: Vec<(f64, f64)> = series(run)
                .iter()
                .filter(|r| r.round as f64 <= cut)
                .map(|r| (r.round as f64, r.global_energy))
                .collect();
            r_squared(&pts)
        })
        .collect();
    let min = r2.iter().copied().fold(f64::INFINITY, f64::min);
    (
        min >= MIN_R2,
        format!("min R^2 = {min:.5} over {} fault-free runs", r2.len()),
    )
}

fn c4_lemma1(books: &mut Books) -> Outcome {
    let mut ok = true;
    let mut ratios = Vec::new();
    let mut same_sets = 0;
    for seed in 1..=3 {
        let mut spent = Vec::new();
        let mut delivered = Vec::new();
        for mode in [RedundancyMode::FTMRS, RedundancyMode::AlwaysDuplicate { k: 3 }] {
            let cfg = ScenarioConfig {
                redundancy_mode: mode,
                ..ScenarioConfig::new(150, LEMMA1_ROUNDS, seed)
            };
            let mut sim = Simulation::new(cfg.clone()).unwrap();
            let initial = sim.initial_report();
            let mut reports = Vec::new();
            while !sim.is_finished() {
                reports.push(sim.run_round());
            }
            books.audit(
                "lemma1",
                &ScenarioRun {
                    config: cfg,
                    initial,
                    reports,
                    events: Vec::new(),
                    injected: Vec::new(),
                    diagnoses: Vec::new(),
                    lifetime: sim.lifetime(),
                    ledger: *sim.ledger(),
                    initial_energy: sim.initial_energy(),
                    node_count: sim.nodes().len(),
                },
            );
            spent.push(sim.ledger().radio());
            delivered.push(sim.delivered().clone());
        }
        let ratio = spent[1] / spent[0];
        let same = delivered[0] == delivered[1] && !delivered[0].is_empty();
        same_sets += usize::from(same);
        ok &= same;
        ok &= ratio >= LEMMA1_MIN_RATIO && spent[1] > spent[0];
        ratios.push(format!("{ratio:.3}"));
    }
    (
        ok,
        format!(
            "duplicate/ftmrs energy ratio = [{}], identical delivered sets in {same_sets}/3 seeds",
            ratios.join(", ")
        ),
    )
}

fn c5_fig9(books: &mut Books) -> Outcome {
    let modes: Vec<RedundancyMode> = (1..=3).map(|k| RedundancyMode::Failover { k }).collect();
    // [seed][k-1][fraction index]
    let mut thr = Vec::new();
    for seed in 1..=FIG9_SEEDS {
        let Plan::PathFailure { base, .. } = Preset::Fig9.plan(seed, None) else {
            unreachable!()
        };
        let mut per_k = Vec::new();
        for &mode in &modes {
            let cfg = ScenarioConfig {
                redundancy_mode: mode,
                ..(*base).clone()
            };
            let mut row = Vec::new();
            for &f in &FAILED_FRACTIONS {
                let run = run_with(&cfg, |s| s.force_primary_faults(f)).unwrap();
                books.audit("fig9", &run);
                row.push(run.throughput());
            }
            per_k.push(row);
        }
        thr.push(per_k);
    }
    let mut ok = true;
    for per_k in &thr {
        ok &= (0..FAILED_FRACTIONS.len()).all(|i| per_k[2][i] >= per_k[1][i] && per_k[1][i] >= per_k[0][i]);
        for row in per_k {
            ok &= row.windows(2).all(|w| w[1] <= w[0]);
        }
        ok &= per_k[0][FAILED_FRACTIONS.len() - 1] <= FIG9_K1_CEILING;
    }
    let means: Vec<String> = (0..3)
        .map(|k| {
            let m: Vec<String> = (0..FAILED_FRACTIONS.len())
                .map(|i| format!("{:.2}", thr.iter().map(|s| s[k][i]).sum::<f64>() / thr.len() as f64))
                .collect();
            format!("k={}: {}", k + 1, m.join(" "))
        })
        .collect();
    (
        ok,
        format!(
            "per-seed ordering over f={FAILED_FRACTIONS:?}; means {}",
            means.join(" | ")
        ),
    )
}

fn c6_diagnosis(books: &mut Books) -> Outcome {
    let mut rates = Vec::new();
    let mut counts_ok = true;
    for seed in 1..=DIAGNOSIS_SEEDS {
        let mut cfg = ScenarioConfig::new(250, 100, seed);
        cfg.faults.node_fault_fraction = DIAGNOSIS_FAULTS as f64 / 250.0;
        cfg.faults.onset = Onset::At { round: 20 };
        let run = run_with(&cfg, |_| {}).unwrap();
        books.audit("diagnosis", &run);
        counts_ok &= run.injected.len() == DIAGNOSIS_FAULTS;
        let found = detection_rounds(&run.injected, &run.diagnoses, DIAGNOSIS_WINDOW);
        rates.push(found.iter().filter(|d| d.is_some()).count() as f64 / run.injected.len() as f64);
    }
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    (
        counts_ok && mean >= MIN_DIAGNOSIS_RATE,
        format!("mean rate {mean:.3}, worst seed {min:.3}, {DIAGNOSIS_FAULTS} faults x {DIAGNOSIS_SEEDS} seeds, window {DIAGNOSIS_WINDOW}"),
    )
}

fn link_cost() -> LinkCost {
    LinkCost::new(800, EnergyParams::default())
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize, density: f64) -> NetworkGraph {
    let pos: Vec<Position> = (0..n)
        .map(|_| Position::new(rng.random_range(0.0..300.0), rng.random_range(0.0..300.0)))
        .collect();
    let mut edges = Vec::new();
    for u in 0..n as u32 {
        for v in (u + 1)..n as u32 {
            if rng.random::<f64>() < density {
                edges.push((u, v));
            }
        }
    }
    NetworkGraph::from_edges(pos, &edges)
}

fn cheapest_simple_path(g: &NetworkGraph, hops: &mut Vec<NodeId>, dst: NodeId, best: &mut Option<f64>) {
    let u = *hops.last().unwrap();
    if u == dst {
        let c = path_cost(g, hops, &link_cost());
        if best.is_none_or(|b| c < b) {
            *best = Some(c);
        }
        return;
    }
    for &(v, _) in g.neighbors(u) {
        if !hops.contains(&v) {
            hops.push(v);
            cheapest_simple_path(g, hops, dst, best);
            hops.pop();
        }
    }
}

fn c7_oracle(_: &mut Books) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut graphs, mut pairs, mut mismatches) = (0, 0, 0);
    while graphs < ORACLE_GRAPHS {
        let n = rng.random_range(2..=ORACLE_MAX_NODES);
        let density = rng.random_range(0.15..1.0);
        let g = random_graph(&mut rng, n, density);
        if g.hop_distances(NodeId(0)).iter().any(Option::is_none) {
            continue;
        }
        graphs += 1;
        for s in 0..n as u32 {
            for d in 0..n as u32 {
                if s == d {
                    continue;
                }
                pairs += 1;
                let mut best = None;
                cheapest_simple_path(&g, &mut vec![NodeId(s)], NodeId(d), &mut best);
                let got = shortest_path(&g, NodeId(s), NodeId(d), &link_cost())
                    .map(|p| p.cost)
                    .ok();
                if got != best {
                    mismatches += 1;
                }
            }
        }
    }
    (
        mismatches == 0,
        format!("{graphs} connected graphs, {pairs} pairs, {mismatches} cost mismatches"),
    )
}

fn c8_disjoint(_: &mut Books) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut built, mut bad) = (0, 0);
    while built < FUZZ_PATH_SETS {
        let n = rng.random_range(3..=20);
        let density = rng.random_range(0.1..0.9);
        let g = random_graph(&mut rng, n, density);
        let s = NodeId(rng.random_range(0..n as u32));
        let d = NodeId(rng.random_range(0..n as u32));
        if s == d {
            continue;
        }
        let Ok(ps) = build_path_set(&g, s, d, 3, &link_cost()) else {
            continue;
        };
        built += 1;
        let mut interiors = std::collections::HashSet::new();
        let pairwise = ps.paths().all(|p| p.interior().iter().all(|id| interiors.insert(*id)));
        let costs: Vec<f64> = ps.paths().map(|p| p.cost).collect();
        let ordered = costs.windows(2).all(|w| w[0] <= w[1]);
        if !(pairwise && ordered && ps.validate(&g).is_ok()) {
            bad += 1;
        }
    }
    (bad == 0, format!("{built} path sets, {bad} violations"))
}

fn c9_conservation(books: &mut Books) -> Outcome {
    (
        books.failures.is_empty() && books.rounds > 0,
        format!(
            "{} rounds audited, worst relative drift {:.2e}, {} violations",
            books.rounds,
            books.worst,
            books.failures.len()
        ),
    )
}

fn digest_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            let bytes = fs::read(e.path()).unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                Sha256::digest(&bytes).to_vec(),
            )
        })
        .collect()
}

fn c10_determinism(_: &mut Books) -> Outcome {
    let mut ok = true;
    let mut files = 0;
    for p in Preset::ALL {
        let rounds = match p {
            Preset::Table3 => Some(2),
            Preset::Table3Desk => Some(60),
            Preset::Fig6 | Preset::Fig7 | Preset::Fig8 => Some(40),
            Preset::Fig9 | Preset::Fig10 => None,
        };
        let mut hashes = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().unwrap();
            let m = RunManifest {
                preset: Some(p),
                rounds,
                seeds: vec![7],
                ..RunManifest::new(dir.path())
            };
            cmd_run(&m).unwrap();
            hashes.push(digest_dir(dir.path()));
        }
        files += hashes[0].len();
        ok &= !hashes[0].is_empty() && hashes[0] == hashes[1];
    }
    (
        ok,
        format!("{} presets run twice, {files} files hash-identical", Preset::ALL.len()),
    )
}

fn c11_roles(_: &mut Books) -> Outcome {
    let rank = |r: NodeRole| match r {
        NodeRole::Normal => 0,
        NodeRole::Traffic => 1,
        NodeRole::End => 2,
        _ => 3,
    };
    let mut bad = 0;
    for bits in 0u8..32 {
        let s = HardwareStatus::from_bits(bits);
        // Each failed circuit alone implies one table row; the worst one wins.
        let implied = [
            (!s.microcontroller_ok, NodeRole::Dead),
            (!s.transmitter_ok, NodeRole::Dead),
            (!s.battery_ok, NodeRole::Dead),
            (!s.receiver_ok, NodeRole::End),
            (!s.sensor_circuit_ok, NodeRole::Traffic),
        ];
        let expected = implied
            .iter()
            .filter(|(failed, _)| *failed)
            .map(|(_, r)| *r)
            .max_by_key(|r| rank(*r))
            .unwrap_or(NodeRole::Normal);
        if classify_role(s) != expected {
            bad += 1;
        }
    }
    let rows = [
        (31, NodeRole::Normal),
        (31 & !2, NodeRole::Traffic),
        (31 & !8, NodeRole::End),
        (0, NodeRole::Dead),
        (31 & !2 & !8, NodeRole::End),
    ];
    let rows_ok = rows
        .iter()
        .all(|&(b, r)| classify_role(HardwareStatus::from_bits(b)) == r);
    (
        bad == 0 && rows_ok,
        format!("32 combinations, {bad} mismatches; table rows ok = {rows_ok}"),
    )
}

fn c12_delivery(books: &mut Books) -> Outcome {
    let mut ok = true;
    let mut runs = 0;
    for n in DESK_SIZES {
        for seed in 1..=3 {
            let run = run_with(&ScenarioConfig::new(n, 200, seed), |_| {}).unwrap();
            books.audit("delivery", &run);
            let rows = series(&run);
            let last = rows.last().unwrap();
            ok &= last.pdr == 1.0 && last.avg_delay == Some(0.0);
            runs += 1;
        }
    }
    (
        ok,
        format!("{runs} fault-free runs of 200 rounds: pdr == 1 and delay == 0 in all = {ok}"),
    )
}

fn main() -> ExitCode {
    let mut books = Books::default();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    results.push((1, "round-0 global energy", check(&mut books, c1_round0)));
    let lifetimes = catch_unwind(AssertUnwindSafe(|| lifetime_runs(&mut books)));
    match &lifetimes {
        Ok(l) => {
            results.push((2, "lifetime ordering", check(&mut books, |_| c2_lifetime(l))));
            results.push((3, "linear energy decline", check(&mut books, |_| c3_linear(l))));
        }
        Err(_) => {
            results.push((2, "lifetime ordering", (false, "lifetime runs panicked".into())));
            results.push((3, "linear energy decline", (false, "lifetime runs panicked".into())));
        }
    }
    results.push((4, "single path vs duplication energy", check(&mut books, c4_lemma1)));
    results.push((5, "throughput under primary failures", check(&mut books, c5_fig9)));
    results.push((6, "diagnosis rate", check(&mut books, c6_diagnosis)));
    results.push((7, "shortest-path oracle", check(&mut books, c7_oracle)));
    results.push((8, "path-set disjointness", check(&mut books, c8_disjoint)));
    results.push((10, "determinism", check(&mut books, c10_determinism)));
    results.push((11, "role table", check(&mut books, c11_roles)));
    results.push((12, "fault-free delivery", check(&mut books, c12_delivery)));
    results.push((9, "energy conservation", check(&mut books, c9_conservation)));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (id, name, (ok, detail)) in &results {
        println!(
            "criterion {id:>2} {} {name}: {detail}",
            if *ok { "PASS" } else { "FAIL" }
        );
        failed += usize::from(!ok);
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
