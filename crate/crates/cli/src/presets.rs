//! Built-in experiment presets, one per reproduced table or figure.

use anyhow::{anyhow, Result};
use ftmrs_core::config::{RedundancyMode, ScenarioConfig};
use ftmrs_core::faults::Onset;

/// Network sizes of the full-scale lifetime table.
pub const TABLE3_SIZES: [usize; 4] = [1000, 1500, 2000, 2500];
/// Scaled-down sizes that run to network death in seconds.
pub const DESK_SIZES: [usize; 4] = [100, 150, 200, 250];
pub const FAULT_LEVELS: [f64; 2] = [0.0, 0.4];
pub const FAILED_FRACTIONS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
pub const GRID_FAULTS: [f64; 6] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Table3,
    Table3Desk,
    Fig6,
    Fig7,
    Fig8,
    Fig9,
    Fig10,
}

/// What a preset plots against its x axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    Delay,
    DeliveryRatio,
    Dissipated,
    DiagnosisRate,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    /// Independent runs, each written out as a full per-round series.
    Series(Vec<Scenario>),
    /// One final value per run, plotted as curves over the fault level.
    FaultGrid { measure: Measure, cells: Vec<GridCell> },
    /// Throughput against forced primary-path failures.
    PathFailure {
        base: Box<ScenarioConfig>,
        fractions: Vec<f64>,
        modes: Vec<RedundancyMode>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub node_count: usize,
    pub fault_fraction: f64,
    pub config: ScenarioConfig,
}

impl Preset {
    pub const ALL: [Preset; 7] = [
        Preset::Table3,
        Preset::Table3Desk,
        Preset::Fig6,
        Preset::Fig7,
        Preset::Fig8,
        Preset::Fig9,
        Preset::Fig10,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Table3 => "table3",
            Preset::Table3Desk => "table3-desk",
            Preset::Fig6 => "fig6",
            Preset::Fig7 => "fig7",
            Preset::Fig8 => "fig8",
            Preset::Fig9 => "fig9",
            Preset::Fig10 => "fig10",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name).ok_or_else(|| {
            let valid: Vec<&str> = Self::ALL.iter().map(|p| p.name()).collect();
            anyhow!("unknown preset {name:?}; valid presets: {}", valid.join(", "))
        })
    }

    /// Rounds simulated when the caller gives no limit.
    pub fn default_rounds(self) -> u64 {
        match self {
            Preset::Table3 => 200,
            Preset::Table3Desk => 100_000,
            Preset::Fig6 | Preset::Fig7 | Preset::Fig8 => 500,
            Preset::Fig9 | Preset::Fig10 => 100,
        }
    }

    pub fn plan(self, seed: u64, rounds: Option<u64>) -> Plan {
        let rounds = rounds.unwrap_or(self.default_rounds());
        let faulty = |n: usize, f: f64, onset: Onset| {
            let mut cfg = ScenarioConfig::new(n, rounds, seed);
            cfg.faults.node_fault_fraction = f;
            cfg.faults.onset = onset;
            cfg
        };
        let spread = Onset::Spread { start: 1, end: 1000 };
        let grid = |sizes: &[usize], faults: &[f64], onset: Onset| -> Vec<GridCell> {
            sizes
                .iter()
                .flat_map(|&n| {
                    faults.iter().map(move |&f| GridCell {
                        node_count: n,
                        fault_fraction: f,
                        config: faulty(n, f, onset),
                    })
                })
                .collect()
        };
        match self {
            Preset::Table3 | Preset::Table3Desk => {
                let sizes = if self == Preset::Table3 {
                    TABLE3_SIZES
                } else {
                    DESK_SIZES
                };
                let scenarios = FAULT_LEVELS
                    .iter()
                    .flat_map(|&f| {
                        sizes.iter().map(move |&n| Scenario {
                            name: format!("{}_n{n}_f{}", self.name(), (f * 100.0).round()),
                            config: faulty(n, f, spread),
                        })
                    })
                    .collect();
                Plan::Series(scenarios)
            }
            Preset::Fig6 | Preset::Fig7 | Preset::Fig8 => Plan::FaultGrid {
                measure: match self {
                    Preset::Fig6 => Measure::Delay,
                    Preset::Fig7 => Measure::DeliveryRatio,
                    _ => Measure::Dissipated,
                },
                cells: grid(
                    &DESK_SIZES,
                    &GRID_FAULTS,
                    Onset::Spread {
                        start: 1,
                        end: (rounds / 2).max(1),
                    },
                ),
            },
            Preset::Fig9 => Plan::PathFailure {
                base: Box::new(ScenarioConfig::new(100, rounds, seed)),
                fractions: FAILED_FRACTIONS.to_vec(),
                modes: (1..=3).map(|k| RedundancyMode::Failover { k }).collect(),
            },
            Preset::Fig10 => Plan::FaultGrid {
                measure: Measure::DiagnosisRate,
                cells: grid(&[250], &[0.08, 0.16, 0.24, 0.32, 0.4], Onset::At { round: 20 }),
            },
        }
    }
}
