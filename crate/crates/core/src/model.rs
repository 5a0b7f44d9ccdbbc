//! Domain types shared by every part of the simulator.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of a vertex in the network. Sensor nodes are numbered from zero
/// in deployment order; the base station, when present in a graph, takes the
/// id one past the last sensor node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i as u32)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Checked constructor for a position inside a `width` x `height` field.
    pub fn within(x: f64, y: f64, width: f64, height: f64) -> Result<Self> {
        if !(0.0..=width).contains(&x) || !(0.0..=height).contains(&y) {
            return Err(Error::InvalidInput(format!(
                "position ({x}, {y}) outside {width} x {height} field"
            )));
        }
        Ok(Self { x, y })
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// The five hardware circuits of a sensor node. `true` means the circuit works.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HardwareStatus {
    pub microcontroller_ok: bool,
    pub sensor_circuit_ok: bool,
    pub transmitter_ok: bool,
    pub receiver_ok: bool,
    pub battery_ok: bool,
}

impl Default for HardwareStatus {
    fn default() -> Self {
        Self::healthy()
    }
}

impl HardwareStatus {
    pub const fn healthy() -> Self {
        Self {
            microcontroller_ok: true,
            sensor_circuit_ok: true,
            transmitter_ok: true,
            receiver_ok: true,
            battery_ok: true,
        }
    }

    pub fn all_ok(&self) -> bool {
        *self == Self::healthy()
    }

    /// Builds a status from a 5-bit mask (bit set = circuit ok), in field order
    /// microcontroller, sensor, transmitter, receiver, battery.
    pub fn from_bits(bits: u8) -> Self {
        Self {
            microcontroller_ok: bits & 1 != 0,
            sensor_circuit_ok: bits & 2 != 0,
            transmitter_ok: bits & 4 != 0,
            receiver_ok: bits & 8 != 0,
            battery_ok: bits & 16 != 0,
        }
    }

    /// Whether the node can put a frame on the air.
    pub fn can_transmit(&self) -> bool {
        self.microcontroller_ok && self.transmitter_ok
    }

    /// Whether the node can take a frame off the air.
    pub fn can_receive(&self) -> bool {
        self.microcontroller_ok && self.receiver_ok
    }
}

/// Operational category of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeRole {
    /// Fully functional.
    Normal,
    /// Sensor circuit broken; relays traffic but produces no readings.
    Traffic,
    /// Receiver broken; transmits its own readings, never relays.
    End,
    /// Out of service. Absorbing.
    Dead,
    /// Deployed spare, inactive until a cluster head activates it.
    Standby,
}

impl NodeRole {
    pub fn is_operational(self) -> bool {
        matches!(self, NodeRole::Normal | NodeRole::Traffic | NodeRole::End)
    }

    /// Roles that produce sensed readings.
    pub fn senses(self) -> bool {
        matches!(self, NodeRole::Normal | NodeRole::End)
    }

    /// Roles allowed in the interior of a route.
    pub fn relays(self) -> bool {
        matches!(self, NodeRole::Normal | NodeRole::Traffic)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeRole::Normal => "normal",
            NodeRole::Traffic => "traffic",
            NodeRole::End => "end",
            NodeRole::Dead => "dead",
            NodeRole::Standby => "standby",
        }
    }
}

/// Maps a hardware status to its node category.
///
/// A failed microcontroller, transmitter or battery makes the node dead
/// whatever else works. Otherwise a failed receiver makes it an end node,
/// and a failed sensor alone makes it a traffic node.
pub fn classify_role(status: HardwareStatus) -> NodeRole {
    if !status.microcontroller_ok || !status.transmitter_ok || !status.battery_ok {
        NodeRole::Dead
    } else if !status.receiver_ok {
        NodeRole::End
    } else if !status.sensor_circuit_ok {
        NodeRole::Traffic
    } else {
        NodeRole::Normal
    }
}

/// Identifier of a cluster; equal to the id of its head at formation time.
pub type ClusterId = NodeId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub id: NodeId,
    pub pos: Position,
    /// Residual energy in joules.
    pub energy: f64,
    pub status: HardwareStatus,
    pub role: NodeRole,
    pub cluster: Option<ClusterId>,
    pub is_cluster_head: bool,
    pub sensed_value: f64,
}

impl NodeState {
    pub fn new(id: NodeId, pos: Position, energy: f64) -> Self {
        Self {
            id,
            pos,
            energy,
            status: HardwareStatus::healthy(),
            role: NodeRole::Normal,
            cluster: None,
            is_cluster_head: false,
            sensed_value: 0.0,
        }
    }

    pub fn is_dead(&self) -> bool {
        self.role == NodeRole::Dead
    }

    pub fn is_operational(&self) -> bool {
        self.role.is_operational()
    }

    /// Physically able to transmit right now.
    pub fn can_transmit(&self) -> bool {
        self.is_operational() && self.status.can_transmit() && self.energy > 0.0
    }

    /// Physically able to receive right now.
    pub fn can_receive(&self) -> bool {
        self.is_operational() && self.status.can_receive() && self.energy > 0.0
    }
}

/// Key that identifies a sensed reading end to end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PacketKey {
    pub src: NodeId,
    pub seq: u64,
}

/// A reading carried inside an aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Carried {
    pub key: PacketKey,
    pub created_round: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    pub seq: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub payload: f64,
    pub size_bits: u64,
    pub created_round: u64,
    pub delivered_round: Option<u64>,
    pub hop_trace: Vec<NodeId>,
    /// Sent on a backup path.
    pub is_duplicate: bool,
    /// Readings merged into this packet by a cluster head. Empty for member data.
    pub carried: Vec<Carried>,
}

impl Packet {
    pub fn new(seq: u64, src: NodeId, dst: NodeId, payload: f64, size_bits: u64, created_round: u64) -> Result<Self> {
        if size_bits == 0 {
            return Err(Error::InvalidInput("packet size must be positive".into()));
        }
        Ok(Self {
            seq,
            src,
            dst,
            payload,
            size_bits,
            created_round,
            delivered_round: None,
            hop_trace: vec![src],
            is_duplicate: false,
            carried: Vec::new(),
        })
    }

    pub fn key(&self) -> PacketKey {
        PacketKey {
            src: self.src,
            seq: self.seq,
        }
    }

    pub fn mark_delivered(&mut self, round: u64) -> Result<()> {
        if round < self.created_round {
            return Err(Error::InvalidInput(format!(
                "delivery round {round} precedes creation round {}",
                self.created_round
            )));
        }
        self.delivered_round = Some(round);
        Ok(())
    }
}

/// First-order radio model constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyParams {
    /// Transmitter electronics, J/bit.
    pub alpha1: f64,
    /// Transmit amplifier, J/bit/m^n.
    pub alpha2: f64,
    /// Receiver electronics, J/bit.
    pub alpha3: f64,
    /// Path-loss exponent n.
    pub path_loss_n: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            alpha1: 50e-9,
            alpha2: 10e-12,
            alpha3: 50e-9,
            path_loss_n: 2.0,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.alpha1, self.alpha2, self.alpha3, self.path_loss_n]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !positive {
            return Err(Error::InvalidInput(
                "energy parameters must be finite and strictly positive".into(),
            ));
        }
        if !(2.0..=4.0).contains(&self.path_loss_n) {
            return Err(Error::InvalidInput(format!(
                "path-loss exponent {} outside [2, 4]",
                self.path_loss_n
            )));
        }
        Ok(())
    }
}
