use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ftmrs_cli::presets::Preset;
use ftmrs_cli::sweep::Grid;
use ftmrs_cli::{cmd_run, cmd_sweep, RunManifest, OUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "ftmrs", version, about = "Fault-tolerant multipath routing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file or a built-in preset.
    Run {
        #[command(flatten)]
        common: Common,
        /// Built-in experiment: table3, table3-desk, fig6, fig7, fig8, fig9, fig10.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
    },
    /// Run every cell of a parameter grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// TOML file mapping config keys to arrays of values.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
    out: PathBuf,
    /// Seed to run; repeat for several.
    #[arg(long)]
    seed: Vec<u64>,
    /// Comma-separated seed list, added to any --seed values.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Round limit overriding the config or preset default.
    #[arg(long)]
    rounds: Option<u64>,
    /// Parallel runs; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

impl Common {
    fn manifest(self) -> RunManifest {
        let mut seeds = self.seed;
        seeds.extend(self.seeds);
        RunManifest {
            config: self.config,
            out_dir: self.out,
            seeds,
            preset: None,
            rounds: self.rounds,
            jobs: self.jobs,
        }
    }
}

fn run(cli: Cli) -> Result<usize> {
    match cli.command {
        Command::Run { common, preset } => {
            let mut m = common.manifest();
            m.preset = preset.as_deref().map(Preset::parse).transpose()?;
            Ok(cmd_run(&m)?.len())
        }
        Command::Sweep { common, grid } => {
            let m = common.manifest();
            let grid = match grid {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    Grid::parse(&text).with_context(|| format!("in {}", path.display()))?
                }
                None => Grid::default(),
            };
            cmd_sweep(&m, &grid)?;
            Ok(1)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(n) => {
            eprintln!("wrote {n} file(s)");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
