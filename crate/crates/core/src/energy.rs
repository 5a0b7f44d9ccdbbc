//! First-order radio energy model and per-node load accounting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EnergyParams, NodeId};

/// Energy to transmit `size` bits over `range` meters:
/// `(alpha1 + alpha2 * range^n) * size`.
pub fn transmit_energy(range: f64, size: f64, params: &EnergyParams) -> Result<f64> {
    if !(range >= 0.0) || !(size >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "transmit_energy needs non-negative range and size, got {range}, {size}"
        )));
    }
    let n = params.path_loss_n;
    let amp = if n.fract() == 0.0 {
        range.powi(n as i32)
    } else {
        range.powf(n)
    };
    Ok((params.alpha1 + params.alpha2 * amp) * size)
}

/// Energy to receive `size` bits: `alpha3 * size`.
pub fn receive_energy(size: f64, params: &EnergyParams) -> Result<f64> {
    if !(size >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "receive_energy needs non-negative size, got {size}"
        )));
    }
    Ok(params.alpha3 * size)
}

/// Cost of one link traversal: transmit plus receive.
pub fn single_hop_energy(range: f64, size: f64, params: &EnergyParams) -> Result<f64> {
    Ok(transmit_energy(range, size, params)? + receive_energy(size, params)?)
}

/// Energy of sending the same data over `n_paths` paths of per-path cost `e_tr`.
pub fn multipath_energy(n_paths: u32, e_tr: f64) -> Result<f64> {
    if n_paths == 0 {
        return Err(Error::InvalidInput("multipath_energy needs n_paths >= 1".into()));
    }
    Ok(f64::from(n_paths) * e_tr)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LoadRecord {
    pub node: NodeId,
    pub packets_received: u64,
    pub packets_transmitted: u64,
    pub round: u64,
}

/// Load of a node: packets received plus packets transmitted.
pub fn node_load(rec: &LoadRecord) -> u64 {
    rec.packets_received + rec.packets_transmitted
}

/// Where a joule went.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChargeKind {
    Transmit,
    Receive,
    /// Charge left in a battery when its node is declared dead. It can no
    /// longer be spent, so it leaves the network's energy pool.
    Stranded,
}

/// Running totals of every charge debited from node batteries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub transmit: f64,
    pub receive: f64,
    pub stranded: f64,
}

impl EnergyLedger {
    pub fn record(&mut self, kind: ChargeKind, joules: f64) {
        match kind {
            ChargeKind::Transmit => self.transmit += joules,
            ChargeKind::Receive => self.receive += joules,
            ChargeKind::Stranded => self.stranded += joules,
        }
    }

    /// Radio energy only (transmit plus receive).
    pub fn radio(&self) -> f64 {
        self.transmit + self.receive
    }

    pub fn total(&self) -> f64 {
        self.transmit + self.receive + self.stranded
    }
}
