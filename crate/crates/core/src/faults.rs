//! Fault injection, detection and recovery.
//!
//! Detection follows a per-round probe loop. Every data frame asks the next
//! hop for an acknowledgement. A garbled frame is answered with a negative
//! acknowledgement, which points at the link. When a partner stays silent the
//! node probes its other neighbors: if nobody answers, its own receiver is
//! broken; otherwise the silent partner is declared dead and the news is
//! spread to the neighborhood. Cluster heads additionally compare member
//! readings against the cluster median, and every node checks its own battery.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NodeId, NodeRole, NodeState};
use crate::rng::unit_hash;
use crate::topology::{Cluster, NetworkGraph};

/// One of the five hardware circuits a node fault can hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FaultClass {
    Microcontroller,
    Sensor,
    Transmitter,
    Receiver,
    Battery,
}

impl FaultClass {
    pub const ALL: [FaultClass; 5] = [
        FaultClass::Microcontroller,
        FaultClass::Sensor,
        FaultClass::Transmitter,
        FaultClass::Receiver,
        FaultClass::Battery,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FaultClass::Microcontroller => "microcontroller",
            FaultClass::Sensor => "sensor",
            FaultClass::Transmitter => "transmitter",
            FaultClass::Receiver => "receiver",
            FaultClass::Battery => "battery",
        }
    }

    /// Whether `verdict` correctly attributes a fault of this class.
    pub fn attributed_by(self, verdict: Verdict) -> bool {
        match self {
            FaultClass::Microcontroller | FaultClass::Transmitter => verdict == Verdict::DeadNode,
            FaultClass::Receiver => verdict == Verdict::ReceiverFault,
            FaultClass::Sensor => verdict == Verdict::SensorFault,
            FaultClass::Battery => matches!(verdict, Verdict::BatteryFault | Verdict::DeadNode),
        }
    }

    fn apply(self, node: &mut NodeState) {
        let s = &mut node.status;
        match self {
            FaultClass::Microcontroller => s.microcontroller_ok = false,
            FaultClass::Sensor => s.sensor_circuit_ok = false,
            FaultClass::Transmitter => s.transmitter_ok = false,
            FaultClass::Receiver => s.receiver_ok = false,
            FaultClass::Battery => s.battery_ok = false,
        }
    }
}

/// Relative weights of the five fault classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultMix {
    pub microcontroller: f64,
    pub sensor: f64,
    pub transmitter: f64,
    pub receiver: f64,
    pub battery: f64,
}

impl Default for FaultMix {
    fn default() -> Self {
        Self {
            microcontroller: 0.2,
            sensor: 0.2,
            transmitter: 0.2,
            receiver: 0.2,
            battery: 0.2,
        }
    }
}

impl FaultMix {
    fn weights(&self) -> [f64; 5] {
        [
            self.microcontroller,
            self.sensor,
            self.transmitter,
            self.receiver,
            self.battery,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.weights();
        if w.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::InvalidConfig("fault mix weights must lie in [0, 1]".into()));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("fault mix sums to {sum}, expected 1")));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut impl Rng) -> FaultClass {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (w, class) in self.weights().iter().zip(FaultClass::ALL) {
            acc += w;
            if u < acc {
                return class;
            }
        }
        *FaultClass::ALL
            .iter()
            .zip(self.weights())
            .rev()
            .find(|(_, w)| *w > 0.0)
            .map(|(c, _)| c)
            .unwrap_or(&FaultClass::Battery)
    }
}

/// When node faults appear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Onset {
    /// All faults strike in one round.
    At { round: u64 },
    /// Faults strike one after another, evenly spaced over `start..=end`.
    Spread { start: u64, end: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultCampaign {
    #[serde(default)]
    pub node_fault_fraction: f64,
    #[serde(default)]
    pub fault_mix: FaultMix,
    /// Per link, per round.
    #[serde(default)]
    pub transmission_fault_prob: f64,
    #[serde(default = "default_onset")]
    pub onset: Onset,
    /// Mixed with the scenario seed.
    #[serde(default)]
    pub seed: u64,
}

fn default_onset() -> Onset {
    Onset::At { round: 1 }
}

impl Default for FaultCampaign {
    fn default() -> Self {
        Self {
            node_fault_fraction: 0.0,
            fault_mix: FaultMix::default(),
            transmission_fault_prob: 0.0,
            onset: default_onset(),
            seed: 0,
        }
    }
}

impl FaultCampaign {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.node_fault_fraction) {
            return Err(Error::InvalidConfig("node_fault_fraction outside [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.transmission_fault_prob) {
            return Err(Error::InvalidConfig("transmission_fault_prob outside [0, 1]".into()));
        }
        if let Onset::Spread { start, end } = self.onset {
            if end < start {
                return Err(Error::InvalidConfig("spread onset ends before it starts".into()));
            }
        }
        self.fault_mix.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedFault {
    pub node: NodeId,
    pub class: FaultClass,
    pub round: u64,
}

/// The node faults a campaign will inject, fixed up front from its seed.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultPlan {
    pub faults: Vec<PlannedFault>,
    seed: u64,
    transmission_fault_prob: f64,
}

impl FaultPlan {
    /// Picks `floor(fraction * nodes.len())` distinct victims among the
    /// non-standby nodes and draws each one's fault class from the mix.
    pub fn new(campaign: &FaultCampaign, nodes: &[NodeState]) -> Result<Self> {
        campaign.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(campaign.seed);
        let wanted = (nodes.len() as f64 * campaign.node_fault_fraction).floor() as usize;
        let mut eligible: Vec<NodeId> = nodes
            .iter()
            .filter(|n| n.role != NodeRole::Standby)
            .map(|n| n.id)
            .collect();
        eligible.shuffle(&mut rng);
        eligible.truncate(wanted);
        let count = eligible.len() as u64;
        let faults = eligible
            .into_iter()
            .enumerate()
            .map(|(i, node)| {
                let round = match campaign.onset {
                    Onset::At { round } => round,
                    Onset::Spread { start, end } => start + (i as u64 * (end - start + 1)) / count.max(1),
                };
                PlannedFault {
                    node,
                    class: campaign.fault_mix.sample(&mut rng),
                    round,
                }
            })
            .collect();
        Ok(Self {
            faults,
            seed: campaign.seed,
            transmission_fault_prob: campaign.transmission_fault_prob,
        })
    }

    pub fn none() -> Self {
        Self {
            faults: Vec::new(),
            seed: 0,
            transmission_fault_prob: 0.0,
        }
    }

    pub fn link_faults(&self, round: u64) -> LinkFaults {
        LinkFaults {
            seed: self.seed,
            round,
            prob: self.transmission_fault_prob,
        }
    }
}

/// A node fault as it actually landed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectedFault {
    pub node: NodeId,
    pub class: FaultClass,
    pub round: u64,
    /// False when the node was already out of service.
    pub detectable: bool,
}

/// Transmission faults of one round. Each link is independently faulty with
/// probability `prob`, decided by hashing (seed, round, link).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkFaults {
    seed: u64,
    round: u64,
    prob: f64,
}

impl LinkFaults {
    pub fn is_faulty(&self, a: NodeId, b: NodeId) -> bool {
        if self.prob <= 0.0 {
            return false;
        }
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let key = (u64::from(lo.0) << 32) | u64::from(hi.0);
        unit_hash(&[self.seed, self.round, key]) < self.prob
    }
}

pub struct Injection {
    pub faulted: Vec<InjectedFault>,
    pub links: LinkFaults,
}

/// Applies the faults planned for `round` to the nodes' hardware status.
pub fn inject(plan: &FaultPlan, nodes: &mut [NodeState], round: u64) -> Injection {
    let faulted = plan
        .faults
        .iter()
        .filter(|f| f.round == round)
        .map(|f| {
            let node = &mut nodes[f.node.index()];
            let detectable = node.is_operational();
            f.class.apply(node);
            InjectedFault {
                node: f.node,
                class: f.class,
                round,
                detectable,
            }
        })
        .collect();
    Injection {
        faulted,
        links: plan.link_faults(round),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    TransmissionFault,
    DeadNode,
    ReceiverFault,
    SensorFault,
    BatteryFault,
    Healthy,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::TransmissionFault => "transmission_fault",
            Verdict::DeadNode => "dead_node",
            Verdict::ReceiverFault => "receiver_fault",
            Verdict::SensorFault => "sensor_fault",
            Verdict::BatteryFault => "battery_fault",
            Verdict::Healthy => "healthy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub suspect: NodeId,
    pub verdict: Verdict,
    pub round: u64,
    pub reporter: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AckOutcome {
    Acked,
    /// The partner answered that the frame arrived garbled.
    Corrupted,
    Silent,
}

/// What a node learned about one communication partner this round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartnerReport {
    pub partner: NodeId,
    pub outcome: AckOutcome,
    /// Consecutive rounds without a reply, this one included.
    pub silent_rounds: u32,
    /// Whether the partner answered a direct probe after going silent.
    pub probe_replied: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Observation {
    pub partners: Vec<PartnerReport>,
    /// Probes sent to neighbors other than the silent partners.
    pub probes_sent: u32,
    pub probes_answered: u32,
    pub neighbor_readings: Vec<(NodeId, f64)>,
    pub own_battery: f64,
    pub has_neighbors: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub sensor_threshold: f64,
    /// Joules.
    pub battery_threshold: f64,
    pub ack_timeout: u32,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Runs the fault checks of `node` for one round.
pub fn detect(node: NodeId, round: u64, obs: &Observation, thresholds: &Thresholds) -> Vec<Diagnosis> {
    let mut out = Vec::new();
    let diag = |suspect, verdict| Diagnosis {
        suspect,
        verdict,
        round,
        reporter: node,
    };

    if obs.has_neighbors {
        for p in obs.partners.iter().filter(|p| p.outcome == AckOutcome::Corrupted) {
            out.push(diag(p.partner, Verdict::TransmissionFault));
        }

        let silent: Vec<&PartnerReport> = obs
            .partners
            .iter()
            .filter(|p| p.outcome == AckOutcome::Silent && p.silent_rounds >= thresholds.ack_timeout)
            .collect();
        if !silent.is_empty() {
            let anyone_answered = obs
                .partners
                .iter()
                .any(|p| p.outcome != AckOutcome::Silent || p.probe_replied)
                || obs.probes_answered > 0;
            let cross_checked = obs.probes_sent > 0 || silent.len() > 1;
            if !anyone_answered && cross_checked {
                out.push(diag(node, Verdict::ReceiverFault));
            } else {
                for p in silent.iter().filter(|p| !p.probe_replied) {
                    out.push(diag(p.partner, Verdict::DeadNode));
                }
            }
        }

        if obs.neighbor_readings.len() >= 3 {
            let mut values: Vec<f64> = obs.neighbor_readings.iter().map(|(_, v)| *v).collect();
            let m = median(&mut values);
            for (id, v) in &obs.neighbor_readings {
                if (v - m).abs() > thresholds.sensor_threshold {
                    out.push(diag(*id, Verdict::SensorFault));
                }
            }
        }
    }

    if obs.own_battery < thresholds.battery_threshold {
        out.push(diag(node, Verdict::BatteryFault));
    }
    if out.is_empty() {
        out.push(diag(node, Verdict::Healthy));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RecoveryAction {
    /// The node takes a degraded role.
    Reassign {
        node: NodeId,
        role: NodeRole,
    },
    /// The node is declared dead and leaves the graph.
    Remove {
        node: NodeId,
    },
    ActivateStandby {
        standby: NodeId,
        replaces: NodeId,
        head: NodeId,
    },
    NoStandby {
        node: NodeId,
    },
    /// Path sets running through this node must be rebuilt.
    RebuildPaths {
        node: NodeId,
    },
    /// A cluster head was lost or degraded.
    Recluster {
        head: NodeId,
    },
    MarkLinkFaulty {
        from: NodeId,
        to: NodeId,
    },
}

impl RecoveryAction {
    pub fn as_str(&self) -> &'static str {
        match self {
            RecoveryAction::Reassign {
                role: NodeRole::Traffic,
                ..
            } => "reassign_traffic",
            RecoveryAction::Reassign {
                role: NodeRole::End, ..
            } => "reassign_end",
            RecoveryAction::Reassign { .. } => "reassign",
            RecoveryAction::Remove { .. } => "remove",
            RecoveryAction::ActivateStandby { .. } => "activate_standby",
            RecoveryAction::NoStandby { .. } => "no_standby",
            RecoveryAction::RebuildPaths { .. } => "rebuild_paths",
            RecoveryAction::Recluster { .. } => "recluster",
            RecoveryAction::MarkLinkFaulty { .. } => "mark_link_faulty",
        }
    }
}

/// Plans the response to a diagnosis. `cluster` is the suspect's cluster,
/// if any; standbys are drawn from its spare list.
pub fn recover(
    diag: &Diagnosis,
    cluster: Option<&Cluster>,
    graph: &NetworkGraph,
    nodes: &[NodeState],
) -> Result<Vec<RecoveryAction>> {
    let suspect = diag.suspect;
    let node = nodes
        .get(suspect.index())
        .ok_or_else(|| Error::InvalidInput(format!("unknown node {suspect}")))?;
    let is_head = cluster.map(|c| c.head == suspect).unwrap_or(false);
    let mut actions = Vec::new();
    match diag.verdict {
        Verdict::Healthy => {
            return Err(Error::InvalidInput("recover called with a healthy verdict".into()));
        }
        Verdict::TransmissionFault => {
            actions.push(RecoveryAction::MarkLinkFaulty {
                from: diag.reporter,
                to: suspect,
            });
        }
        _ if node.is_dead() => {}
        Verdict::SensorFault => {
            if node.role == NodeRole::Normal {
                actions.push(RecoveryAction::Reassign {
                    node: suspect,
                    role: NodeRole::Traffic,
                });
            }
        }
        Verdict::ReceiverFault => {
            if matches!(node.role, NodeRole::Normal | NodeRole::Traffic) {
                actions.push(RecoveryAction::Reassign {
                    node: suspect,
                    role: NodeRole::End,
                });
                actions.push(RecoveryAction::RebuildPaths { node: suspect });
                if is_head {
                    actions.push(RecoveryAction::Recluster { head: suspect });
                }
            }
        }
        Verdict::DeadNode | Verdict::BatteryFault => {
            actions.push(RecoveryAction::Remove { node: suspect });
            actions.push(RecoveryAction::RebuildPaths { node: suspect });
            match cluster.and_then(|c| pick_standby(c, suspect, graph, nodes).map(|s| (c.head, s))) {
                Some((head, standby)) => actions.push(RecoveryAction::ActivateStandby {
                    standby,
                    replaces: suspect,
                    head,
                }),
                None => actions.push(RecoveryAction::NoStandby { node: suspect }),
            }
            if is_head {
                actions.push(RecoveryAction::Recluster { head: suspect });
            }
        }
    }
    Ok(actions)
}

/// Nearest inactive standby of the cluster that can hear at least one of the
/// dead node's neighbors (or the dead node itself when it had none).
fn pick_standby(cluster: &Cluster, dead: NodeId, graph: &NetworkGraph, nodes: &[NodeState]) -> Option<NodeId> {
    let range = graph.radio_range();
    let dead_pos = nodes[dead.index()].pos;
    let anchors: Vec<_> = if graph.contains(dead) && !graph.neighbors(dead).is_empty() {
        graph
            .neighbors(dead)
            .iter()
            .filter(|(v, _)| Some(*v) != graph.sink())
            .map(|(v, _)| nodes[v.index()].pos)
            .collect()
    } else {
        vec![dead_pos]
    };
    cluster
        .standbys
        .iter()
        .filter(|s| nodes[s.index()].role == NodeRole::Standby)
        .filter(|s| anchors.iter().any(|a| a.distance(&nodes[s.index()].pos) <= range))
        .min_by(|a, b| {
            let da = nodes[a.index()].pos.distance(&dead_pos);
            let db = nodes[b.index()].pos.distance(&dead_pos);
            da.total_cmp(&db).then(a.cmp(b))
        })
        .copied()
}

/// Fraction of injected node faults whose node and class were correctly
/// diagnosed within `window` rounds of injection. 1.0 when nothing was
/// injected.
pub fn diagnosis_rate(injected: &[InjectedFault], detected: &[Diagnosis], window: u64) -> Result<f64> {
    if window == 0 {
        return Err(Error::InvalidInput(
            "diagnosis window must be at least one round".into(),
        ));
    }
    if injected.is_empty() {
        return Ok(1.0);
    }
    let verdicts: HashSet<(NodeId, Verdict, u64)> = detected.iter().map(|d| (d.suspect, d.verdict, d.round)).collect();
    let hits = injected
        .iter()
        .filter(|f| {
            verdicts.iter().any(|(node, verdict, round)| {
                *node == f.node && f.class.attributed_by(*verdict) && *round >= f.round && *round < f.round + window
            })
        })
        .count();
    Ok(hits as f64 / injected.len() as f64)
}
