//! Scenario configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faults::FaultCampaign;
use crate::model::{EnergyParams, Position};
use crate::routing::MAX_PATHS;

/// How many paths a flow uses and when.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RedundancyMode {
    /// Primary path first; after a failed attempt the packet is retried on
    /// the remaining backups at once. At most `k` paths per flow.
    Failover { k: u8 },
    /// Every packet goes out on up to `k` paths at once.
    AlwaysDuplicate { k: u8 },
}

impl RedundancyMode {
    pub const FTMRS: RedundancyMode = RedundancyMode::Failover { k: 3 };

    pub fn paths(self) -> usize {
        match self {
            RedundancyMode::Failover { k } | RedundancyMode::AlwaysDuplicate { k } => usize::from(k),
        }
    }
}

impl fmt::Display for RedundancyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            RedundancyMode::FTMRS => f.write_str("ftmrs"),
            RedundancyMode::Failover { k } => write!(f, "failover_{k}"),
            RedundancyMode::AlwaysDuplicate { k } => write!(f, "always_duplicate_{k}"),
        }
    }
}

impl FromStr for RedundancyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::InvalidConfig(format!(
                "unknown redundancy mode {s:?}; expected ftmrs, failover_K or always_duplicate_K with K in 1..=3"
            ))
        };
        let parse_k = |k: &str| -> Result<u8> {
            match k.parse::<u8>() {
                Ok(k) if (1..=MAX_PATHS as u8).contains(&k) => Ok(k),
                _ => Err(bad()),
            }
        };
        if s == "ftmrs" {
            Ok(RedundancyMode::FTMRS)
        } else if let Some(k) = s.strip_prefix("failover_") {
            Ok(RedundancyMode::Failover { k: parse_k(k)? })
        } else if let Some(k) = s.strip_prefix("always_duplicate_") {
            Ok(RedundancyMode::AlwaysDuplicate { k: parse_k(k)? })
        } else {
            Err(bad())
        }
    }
}

impl TryFrom<String> for RedundancyMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RedundancyMode> for String {
    fn from(m: RedundancyMode) -> String {
        m.to_string()
    }
}

/// Size of the aggregate a cluster head forwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// One packet of `packet_bits` regardless of member count.
    Fixed,
    /// `packet_bits` per reading carried.
    SumOfMembers,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionConfig {
    /// Allowed deviation of a reading from the cluster median.
    pub sensor_threshold: f64,
    /// Battery alarm level as a fraction of initial energy.
    pub battery_fraction: f64,
    /// Rounds of silence before a partner is probed.
    pub ack_timeout: u32,
    /// Extra neighbors probed to tell a dead partner from a deaf receiver.
    pub probe_fanout: usize,
    /// Detection window used for the diagnosis rate.
    pub window: u64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            sensor_threshold: 5.0,
            battery_fraction: 0.02,
            ack_timeout: 1,
            probe_fanout: 3,
            window: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensingConfig {
    pub noise_sigma: f64,
    /// Offset added by a broken sensor circuit.
    pub fault_offset: f64,
    /// Relays drop member data within this distance of their own reading.
    pub suppression_epsilon: f64,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 0.1,
            fault_offset: 30.0,
            suppression_epsilon: 0.0,
        }
    }
}

fn default_width() -> f64 {
    300.0
}
fn default_radio_range() -> f64 {
    340.0
}
fn default_initial_energy() -> f64 {
    0.5
}
fn default_packet_bits() -> u64 {
    800
}
fn default_slot_gap() -> u64 {
    1
}
fn default_recluster_period() -> u64 {
    100
}
fn default_cluster_count() -> usize {
    10
}
fn default_death_threshold() -> f64 {
    0.1
}
fn default_mode() -> RedundancyMode {
    RedundancyMode::FTMRS
}
fn default_aggregation() -> Aggregation {
    Aggregation::Fixed
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub node_count: usize,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default = "default_width")]
    pub height: f64,
    #[serde(default = "default_radio_range")]
    pub radio_range: f64,
    #[serde(default)]
    pub standby_fraction: f64,
    #[serde(default = "default_initial_energy")]
    pub initial_energy: f64,
    pub rounds_max: u64,
    #[serde(default)]
    pub energy: EnergyParams,
    #[serde(default = "default_packet_bits")]
    pub packet_bits: u64,
    #[serde(default = "default_aggregation")]
    pub aggregation: Aggregation,
    #[serde(default)]
    pub faults: FaultCampaign,
    #[serde(default = "default_slot_gap")]
    pub slot_gap: u64,
    #[serde(default = "default_recluster_period")]
    pub recluster_period: u64,
    #[serde(default = "default_cluster_count")]
    pub cluster_count: usize,
    #[serde(default = "default_mode")]
    pub redundancy_mode: RedundancyMode,
    /// Defaults to the middle of the top edge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bs_position: Option<Position>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queue_cap: Option<usize>,
    /// The network counts as dead once fewer than this fraction of the
    /// initially active nodes can still sense and transmit.
    #[serde(default = "default_death_threshold")]
    pub death_threshold: f64,
    #[serde(default)]
    pub detection: DetectionConfig,
    #[serde(default)]
    pub sensing: SensingConfig,
    pub seed: u64,
}

impl ScenarioConfig {
    /// A config with every optional key at its default.
    pub fn new(node_count: usize, rounds_max: u64, seed: u64) -> Self {
        Self {
            node_count,
            width: default_width(),
            height: default_width(),
            radio_range: default_radio_range(),
            standby_fraction: 0.0,
            initial_energy: default_initial_energy(),
            rounds_max,
            energy: EnergyParams::default(),
            packet_bits: default_packet_bits(),
            aggregation: default_aggregation(),
            faults: FaultCampaign::default(),
            slot_gap: default_slot_gap(),
            recluster_period: default_recluster_period(),
            cluster_count: default_cluster_count(),
            redundancy_mode: default_mode(),
            bs_position: None,
            queue_cap: None,
            death_threshold: default_death_threshold(),
            detection: DetectionConfig::default(),
            sensing: SensingConfig::default(),
            seed,
        }
    }

    pub fn bs(&self) -> Position {
        self.bs_position.unwrap_or(Position::new(self.width / 2.0, self.height))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.node_count == 0 {
            return bad("node_count must be at least 1");
        }
        for (name, v) in [
            ("width", self.width),
            ("height", self.height),
            ("radio_range", self.radio_range),
            ("initial_energy", self.initial_energy),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive and finite")));
            }
        }
        if !(0.0..1.0).contains(&self.standby_fraction) {
            return bad("standby_fraction must lie in [0, 1)");
        }
        if self.packet_bits == 0 {
            return bad("packet_bits must be positive");
        }
        if self.slot_gap == 0 {
            return bad("slot_gap must be at least 1");
        }
        if self.recluster_period == 0 {
            return bad("recluster_period must be at least 1");
        }
        if self.cluster_count == 0 {
            return bad("cluster_count must be at least 1");
        }
        if !(0.0..1.0).contains(&self.death_threshold) {
            return bad("death_threshold must lie in [0, 1)");
        }
        if self.queue_cap == Some(0) {
            return bad("queue_cap must be at least 1");
        }
        let d = &self.detection;
        if !(d.sensor_threshold > 0.0) || !(0.0..1.0).contains(&d.battery_fraction) || d.window == 0 {
            return bad("detection thresholds out of range");
        }
        let s = &self.sensing;
        if !(s.noise_sigma >= 0.0) || !(s.suppression_epsilon >= 0.0) || !s.fault_offset.is_finite() {
            return bad("sensing parameters out of range");
        }
        if let Some(p) = self.bs_position {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return bad("bs_position must be finite");
            }
        }
        self.energy.validate()?;
        self.faults.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
