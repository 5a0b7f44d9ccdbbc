//! Round-based simulator of fault-tolerant multipath routing in clustered
//! wireless sensor networks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod energy;
pub mod engine;
pub mod error;
pub mod faults;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod routing;
pub mod topology;
pub mod traffic;

pub use error::{Error, Result};
pub use model::{EnergyParams, HardwareStatus, NodeId, NodeRole, NodeState, Packet, Position};
