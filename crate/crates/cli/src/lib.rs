//! Command-line front end: single runs, presets and parameter sweeps.

pub mod output;
pub mod presets;
pub mod sweep;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use ftmrs_core::config::ScenarioConfig;
use ftmrs_core::engine::{run_scenario, sweep_point, ScenarioRun, SweepPoint};
use ftmrs_core::metrics::{series, write_csv, write_events_csv};
use rayon::prelude::*;

use crate::output::{plot_data, OutDir};
use crate::presets::{Measure, Plan, Preset};
use crate::sweep::Grid;

/// Overrides the output directory given on the command line.
pub const OUT_DIR_ENV: &str = "FTMRS_OUT_DIR";

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Empty means the config's own seed.
    pub seeds: Vec<u64>,
    pub preset: Option<Preset>,
    pub rounds: Option<u64>,
    /// Worker threads; 0 picks one per core.
    pub jobs: usize,
}

impl RunManifest {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            config: None,
            out_dir: out_dir.into(),
            seeds: Vec::new(),
            preset: None,
            rounds: None,
            jobs: 0,
        }
    }

    fn seeds_or(&self, fallback: u64) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![fallback]
        } else {
            self.seeds.clone()
        }
    }

    fn base_config(&self) -> Result<(String, ScenarioConfig)> {
        let Some(path) = &self.config else {
            bail!("a config file is required");
        };
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .filter(|s| !s.is_empty())
            .unwrap_or("run")
            .to_string();
        let mut cfg = load_config(path)?;
        if let Some(r) = self.rounds {
            cfg.rounds_max = r;
        }
        Ok((stem, cfg))
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ScenarioConfig::from_toml(&text).with_context(|| format!("in {}", path.display()))
}

/// End-of-run figures for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rounds: u64,
    pub lifetime: Option<u64>,
    pub global_energy: f64,
    pub pdr: f64,
    /// Whole-run deduplicated delivered / created.
    pub throughput: f64,
    pub avg_delay: Option<f64>,
    pub avg_dissipated: f64,
    pub diagnosis_rate: f64,
    pub alive_count: u64,
}

pub const SUMMARY_HEADER: &str =
    "seed,rounds,lifetime,global_energy_j,pdr,throughput,avg_delay_rounds,avg_dissipated_j_per_node,diagnosis_rate,alive_count";

impl Summary {
    pub fn of(run: &ScenarioRun) -> Self {
        let rows = series(run);
        let last = rows.last().expect("series has a round 0 row");
        Self {
            rounds: last.round,
            lifetime: run.lifetime,
            global_energy: last.global_energy,
            pdr: last.pdr,
            throughput: run.throughput(),
            avg_delay: last.avg_delay,
            avg_dissipated: last.avg_dissipated,
            diagnosis_rate: last.diagnosis_rate,
            alive_count: last.alive_count,
        }
    }

    pub fn measure(&self, m: Measure) -> Option<f64> {
        match m {
            Measure::Delay => self.avg_delay,
            Measure::DeliveryRatio => Some(self.pdr),
            Measure::Dissipated => Some(self.avg_dissipated),
            Measure::DiagnosisRate => Some(self.diagnosis_rate),
        }
    }

    fn csv_row(&self, seed: u64) -> String {
        let opt = |v: Option<String>| v.unwrap_or_default();
        format!(
            "{seed},{},{},{},{},{},{},{},{},{}",
            self.rounds,
            opt(self.lifetime.map(|l| l.to_string())),
            self.global_energy,
            self.pdr,
            self.throughput,
            opt(self.avg_delay.map(|d| d.to_string())),
            self.avg_dissipated,
            self.diagnosis_rate,
            self.alive_count
        )
    }
}

/// Invariants every finished run must satisfy.
pub fn check_run(run: &ScenarioRun) -> Result<()> {
    let initial = run.initial_energy;
    let mut prev = run.initial.global_energy;
    ensure!(prev == initial, "round 0 energy {prev} differs from deployed {initial}");
    for (i, r) in run.reports.iter().enumerate() {
        ensure!(r.round == i as u64 + 1, "round {} reported out of sequence", r.round);
        let drift = (initial - r.charged - r.global_energy).abs();
        ensure!(
            drift <= 1e-9 * initial,
            "round {}: energy books off by {drift} J",
            r.round
        );
        ensure!(r.global_energy <= prev, "round {}: global energy rose", r.round);
        prev = r.global_energy;
    }
    for row in series(run) {
        for (name, v) in [
            ("pdr", row.pdr),
            ("throughput", row.throughput),
            ("diagnosis_rate", row.diagnosis_rate),
        ] {
            ensure!(
                (0.0..=1.0).contains(&v),
                "round {}: {name} = {v} outside [0, 1]",
                row.round
            );
        }
    }
    Ok(())
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("starting worker threads")
}

/// Runs every config, checking each result, in input order.
pub fn run_all(configs: &[ScenarioConfig], jobs: usize) -> Result<Vec<ScenarioRun>> {
    pool(jobs)?.install(|| {
        configs
            .par_iter()
            .map(|cfg| {
                let run = run_scenario(cfg)?;
                check_run(&run).with_context(|| format!("scenario with seed {}", cfg.seed))?;
                Ok(run)
            })
            .collect()
    })
}

pub fn series_csv(run: &ScenarioRun) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(&series(run), &mut buf).expect("writing to memory");
    buf
}

pub fn events_csv(run: &ScenarioRun) -> Vec<u8> {
    let mut buf = Vec::new();
    write_events_csv(&run.events, &mut buf).expect("writing to memory");
    buf
}

fn energy_plot(name: &str, run: &ScenarioRun) -> String {
    let points: Vec<(f64, f64)> = series(run).iter().map(|r| (r.round as f64, r.global_energy)).collect();
    plot_data(&format!("{name}: round global_energy_j"), &points)
}

fn log_line(log: &mut String, name: &str, seed: u64, s: &Summary) {
    let lifetime = s.lifetime.map(|l| l.to_string()).unwrap_or_else(|| "none".into());
    writeln!(
        log,
        "scenario={name} seed={seed} rounds={} lifetime={lifetime} global_energy_j={} pdr={} throughput={} diagnosis_rate={}",
        s.rounds, s.global_energy, s.pdr, s.throughput, s.diagnosis_rate
    )
    .expect("writing to a String");
}

/// Writes the per-round CSV, event log and energy plot of each run.
fn write_series(out: &OutDir, named: &[(String, u64)], runs: &[ScenarioRun], log: &mut String) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for ((name, seed), run) in named.iter().zip(runs) {
        let stem = format!("{name}_seed{seed}");
        written.push(out.write(&format!("{stem}.csv"), &series_csv(run))?);
        written.push(out.write(&format!("{stem}_events.csv"), &events_csv(run))?);
        written.push(out.write(&format!("{stem}.dat"), energy_plot(&stem, run).as_bytes())?);
        log_line(log, name, *seed, &Summary::of(run));
    }
    Ok(written)
}

/// `run`: a config file or a preset, once per seed.
pub fn cmd_run(m: &RunManifest) -> Result<Vec<PathBuf>> {
    match (m.preset, &m.config) {
        (Some(_), Some(_)) => bail!("give either --config or --preset, not both"),
        (None, None) => bail!("give --config or --preset"),
        (Some(p), None) => run_preset(p, m),
        (None, Some(_)) => {
            let (stem, base) = m.base_config()?;
            let seeds = m.seeds_or(base.seed);
            let configs: Vec<ScenarioConfig> = seeds
                .iter()
                .map(|&seed| ScenarioConfig { seed, ..base.clone() })
                .collect();
            let runs = run_all(&configs, m.jobs)?;
            let out = OutDir::create(&m.out_dir)?;
            let named: Vec<(String, u64)> = seeds.iter().map(|&s| (stem.clone(), s)).collect();
            let mut log = String::new();
            let mut written = write_series(&out, &named, &runs, &mut log)?;
            written.push(out.write("run.log", log.as_bytes())?);
            Ok(written)
        }
    }
}

fn run_preset(p: Preset, m: &RunManifest) -> Result<Vec<PathBuf>> {
    let seeds = m.seeds_or(1);
    let plans: Vec<(u64, Plan)> = seeds.iter().map(|&s| (s, p.plan(s, m.rounds))).collect();
    let mut log = String::new();
    let mut written = Vec::new();
    match &plans[0].1 {
        Plan::Series(_) => {
            let mut named = Vec::new();
            let mut configs = Vec::new();
            for (seed, plan) in &plans {
                let Plan::Series(scenarios) = plan else { unreachable!() };
                for s in scenarios {
                    named.push((s.name.clone(), *seed));
                    configs.push(s.config.clone());
                }
            }
            let runs = run_all(&configs, m.jobs)?;
            let out = OutDir::create(&m.out_dir)?;
            written.extend(write_series(&out, &named, &runs, &mut log)?);
            let mut table = String::from("scenario,node_count,fault_fraction,seed,lifetime\n");
            for ((name, seed), (cfg, run)) in named.iter().zip(configs.iter().zip(&runs)) {
                let l = run.lifetime.map(|l| l.to_string()).unwrap_or_default();
                writeln!(
                    table,
                    "{name},{},{},{seed},{l}",
                    cfg.node_count, cfg.faults.node_fault_fraction
                )?;
            }
            written.push(out.write(&format!("{}_lifetimes.csv", p.name()), table.as_bytes())?);
            written.push(out.write("run.log", log.as_bytes())?);
        }
        Plan::FaultGrid { measure, .. } => {
            let measure = *measure;
            let mut keys = Vec::new();
            let mut configs = Vec::new();
            for (seed, plan) in &plans {
                let Plan::FaultGrid { cells, .. } = plan else {
                    unreachable!()
                };
                for c in cells {
                    keys.push((c.node_count, c.fault_fraction, *seed));
                    configs.push(c.config.clone());
                }
            }
            let runs = run_all(&configs, m.jobs)?;
            let out = OutDir::create(&m.out_dir)?;
            let mut table = String::from("node_count,fault_fraction,seed,value\n");
            let mut curves: BTreeMap<usize, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
            for ((n, f, seed), run) in keys.iter().zip(&runs) {
                let s = Summary::of(run);
                log_line(&mut log, &format!("{}_n{n}_f{f}", p.name()), *seed, &s);
                let v = s.measure(measure);
                writeln!(table, "{n},{f},{seed},{}", v.map(|v| v.to_string()).unwrap_or_default())?;
                if let Some(v) = v {
                    // Keyed by per-mille so the map orders the x axis.
                    let x = (f * 1000.0).round() as u64;
                    curves.entry(*n).or_default().entry(x).or_default().push(v);
                }
            }
            written.push(out.write(&format!("{}.csv", p.name()), table.as_bytes())?);
            for (n, pts) in curves {
                let points: Vec<(f64, f64)> = pts
                    .into_iter()
                    .map(|(x, vs)| (x as f64 / 10.0, vs.iter().sum::<f64>() / vs.len() as f64))
                    .collect();
                let title = format!("N={n}: fault_percent {measure:?}");
                written.push(out.write(&format!("{}_n{n}.dat", p.name()), plot_data(&title, &points).as_bytes())?);
            }
            written.push(out.write("run.log", log.as_bytes())?);
        }
        Plan::PathFailure { .. } => {
            let mut jobs = Vec::new();
            for (seed, plan) in &plans {
                let Plan::PathFailure { base, fractions, modes } = plan else {
                    unreachable!()
                };
                for &f in fractions {
                    for &mode in modes {
                        jobs.push((*seed, (**base).clone(), f, mode));
                    }
                }
            }
            let points: Vec<(u64, SweepPoint)> = pool(m.jobs)?.install(|| {
                jobs.par_iter()
                    .map(|(seed, base, f, mode)| Ok((*seed, sweep_point(base, *f, *mode)?)))
                    .collect::<Result<_>>()
            })?;
            let out = OutDir::create(&m.out_dir)?;
            let mut table = String::from("seed,failed_fraction,mode,paths,throughput\n");
            let mut curves: BTreeMap<usize, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
            for (seed, pt) in &points {
                writeln!(
                    table,
                    "{seed},{},{},{},{}",
                    pt.failed_fraction,
                    pt.mode,
                    pt.mode.paths(),
                    pt.throughput
                )?;
                writeln!(
                    log,
                    "scenario={}_{} seed={seed} failed_fraction={} throughput={}",
                    p.name(),
                    pt.mode,
                    pt.failed_fraction,
                    pt.throughput
                )?;
                let x = (pt.failed_fraction * 1000.0).round() as u64;
                curves
                    .entry(pt.mode.paths())
                    .or_default()
                    .entry(x)
                    .or_default()
                    .push(pt.throughput);
            }
            written.push(out.write(&format!("{}.csv", p.name()), table.as_bytes())?);
            for (k, pts) in curves {
                let points: Vec<(f64, f64)> = pts
                    .into_iter()
                    .map(|(x, vs)| (x as f64 / 1000.0, vs.iter().sum::<f64>() / vs.len() as f64))
                    .collect();
                let title = format!("k={k}: failed_fraction throughput");
                written.push(out.write(&format!("{}_k{k}.dat", p.name()), plot_data(&title, &points).as_bytes())?);
            }
            written.push(out.write("run.log", log.as_bytes())?);
        }
    }
    Ok(written)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `sweep`: every grid cell once per seed, one summary row each.
pub fn cmd_sweep(m: &RunManifest, grid: &Grid) -> Result<PathBuf> {
    let (stem, base) = m.base_config()?;
    let cells = grid.cells(&base)?;
    let seeds = m.seeds_or(base.seed);
    let mut configs = Vec::with_capacity(cells.len() * seeds.len());
    for cell in &cells {
        for &seed in &seeds {
            configs.push(ScenarioConfig {
                seed,
                ..cell.config.clone()
            });
        }
    }
    let runs = run_all(&configs, m.jobs)?;
    let mut text = String::new();
    for k in grid.keys() {
        text.push_str(&csv_field(k));
        text.push(',');
    }
    text.push_str(SUMMARY_HEADER);
    text.push('\n');
    let mut log = String::new();
    let mut runs = runs.iter();
    for cell in &cells {
        for &seed in &seeds {
            let run = runs.next().expect("one run per cell and seed");
            let s = Summary::of(run);
            let label: Vec<String> = cell.assignments.iter().map(|(k, v)| format!("{k}={v}")).collect();
            log_line(&mut log, &format!("{stem}[{}]", label.join(";")), seed, &s);
            for (_, v) in &cell.assignments {
                let v = match v {
                    toml::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                text.push_str(&csv_field(&v));
                text.push(',');
            }
            text.push_str(&s.csv_row(seed));
            text.push('\n');
        }
    }
    let out = OutDir::create(&m.out_dir)?;
    let path = out.write(&format!("{stem}_sweep.csv"), text.as_bytes())?;
    out.write("run.log", log.as_bytes())?;
    Ok(path)
}
