//! Round-based simulation.
//!
//! Each round runs the same phases in a fixed order:
//!
//! 0. maintenance: (re)build the graph, clusters and routes when due;
//! 1. inject the faults planned for this round;
//! 2. sense: every powered node samples the field, sensing members queue a
//!    packet for their cluster head;
//! 3. members transmit to their heads;
//! 4. heads aggregate what arrived and transmit to the base station;
//! 5. every powered node runs its fault checks;
//! 6. recovery actions are applied;
//! 7. the round report is assembled.
//!
//! Delay is measured in rounds from creation to arrival at the base station.

mod phases;

use std::collections::{HashMap, HashSet};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{RedundancyMode, ScenarioConfig};
use crate::energy::{ChargeKind, EnergyLedger};
use crate::error::Result;
use crate::faults::{Diagnosis, FaultCampaign, FaultClass, FaultPlan, InjectedFault, Verdict};
use crate::model::{NodeId, NodeRole, NodeState, PacketKey};
use crate::rng::{hash_words, stream, unit_hash};
use crate::routing::{LinkCost, PathSet, PathStatus};
use crate::topology::{deploy, ClusterLayout, NetworkGraph};
use crate::traffic::TxQueue;

const STREAM_DEPLOY: u64 = 1;
const STREAM_FAULTS: u64 = 2;
const STREAM_SENSE: u64 = 3;
const STREAM_FORCED: u64 = 4;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u64,
    pub global_energy: f64,
    /// Everything charged so far, radio and write-offs alike.
    pub charged: f64,
    pub packets_created: u64,
    /// Distinct packets that reached the base station this round.
    pub packets_delivered: u64,
    /// Packets both created and delivered this round.
    pub delivered_same_round: u64,
    pub packets_dropped: u64,
    /// Member packets dropped by a relay as redundant.
    pub packets_suppressed: u64,
    /// Sum of delays over `packets_delivered`.
    pub delay_sum: u64,
    pub mean_delay: Option<f64>,
    pub diagnoses: u64,
    pub deaths: u64,
    pub activations: u64,
    pub alive_count: u64,
    pub frames_sent: u64,
    pub faults_injected: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub round: u64,
    pub node: NodeId,
    pub class: Option<FaultClass>,
    pub verdict: Option<Verdict>,
    pub action: String,
}

pub struct Simulation {
    cfg: ScenarioConfig,
    nodes: Vec<NodeState>,
    initial_energy: f64,
    active_at_start: usize,
    ledger: EnergyLedger,
    plan: FaultPlan,
    cost: LinkCost,
    sense_rng: ChaCha8Rng,
    round: u64,
    finished: bool,
    lifetime: Option<u64>,

    graph: Option<NetworkGraph>,
    layout: ClusterLayout,
    needs_recluster: bool,
    cluster_graphs: HashMap<NodeId, NetworkGraph>,
    member_flows: Vec<Option<PathSet>>,
    agg_flows: Vec<Option<PathSet>>,
    queues: Vec<TxQueue>,
    agg_queues: Vec<TxQueue>,
    seq: Vec<u64>,
    agg_seq: Vec<u64>,
    forced_fraction: f64,

    delivered: HashSet<PacketKey>,
    silence: HashMap<(NodeId, NodeId), u32>,
    injected_class: HashMap<NodeId, FaultClass>,
    injected: Vec<InjectedFault>,
    diagnoses: Vec<Diagnosis>,
    events: Vec<EventRecord>,
    topology_changed: bool,
    scratch: phases::Scratch,
    cur: RoundReport,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let nodes = deploy(
            cfg.node_count,
            cfg.width,
            cfg.height,
            cfg.standby_fraction,
            cfg.initial_energy,
            hash_words(&[cfg.seed, STREAM_DEPLOY]),
        )?;
        Self::with_nodes(cfg, nodes)
    }

    /// Starts from a hand-placed deployment instead of a random one.
    pub fn with_nodes(cfg: ScenarioConfig, nodes: Vec<NodeState>) -> Result<Self> {
        cfg.validate()?;
        if nodes.len() != cfg.node_count || nodes.iter().enumerate().any(|(i, n)| n.id.index() != i) {
            return Err(crate::Error::InvalidInput(format!(
                "expected {} nodes with ids 0..{}",
                cfg.node_count, cfg.node_count
            )));
        }
        let campaign = FaultCampaign {
            seed: hash_words(&[cfg.seed, STREAM_FAULTS, cfg.faults.seed]),
            ..cfg.faults.clone()
        };
        let plan = FaultPlan::new(&campaign, &nodes)?;
        let initial_energy = nodes.iter().map(|n| n.energy).sum();
        let n = nodes.len();
        let active_at_start = nodes.iter().filter(|n| n.is_operational()).count();
        Ok(Self {
            cost: LinkCost::new(cfg.packet_bits, cfg.energy),
            sense_rng: stream(cfg.seed, STREAM_SENSE),
            nodes,
            initial_energy,
            active_at_start,
            ledger: EnergyLedger::default(),
            plan,
            round: 0,
            finished: cfg.rounds_max == 0,
            lifetime: None,
            graph: None,
            layout: ClusterLayout::default(),
            needs_recluster: true,
            cluster_graphs: HashMap::new(),
            member_flows: vec![None; n],
            agg_flows: vec![None; n],
            queues: (0..n).map(|_| TxQueue::new(cfg.queue_cap)).collect(),
            agg_queues: (0..n).map(|_| TxQueue::new(cfg.queue_cap)).collect(),
            seq: vec![0; n],
            agg_seq: vec![0; n],
            forced_fraction: 0.0,
            delivered: HashSet::new(),
            silence: HashMap::new(),
            injected_class: HashMap::new(),
            injected: Vec::new(),
            diagnoses: Vec::new(),
            events: Vec::new(),
            topology_changed: true,
            scratch: phases::Scratch::default(),
            cur: RoundReport::default(),
            cfg,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Round in which the network could no longer deliver any reading.
    pub fn lifetime(&self) -> Option<u64> {
        self.lifetime
    }

    pub fn ledger(&self) -> &EnergyLedger {
        &self.ledger
    }

    pub fn initial_energy(&self) -> f64 {
        self.initial_energy
    }

    pub fn global_energy(&self) -> f64 {
        self.nodes.iter().map(|n| n.energy).sum()
    }

    pub fn layout(&self) -> &ClusterLayout {
        &self.layout
    }

    pub fn graph(&self) -> Option<&NetworkGraph> {
        self.graph.as_ref()
    }

    pub fn injected(&self) -> &[InjectedFault] {
        &self.injected
    }

    pub fn diagnoses(&self) -> &[Diagnosis] {
        &self.diagnoses
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn delivered(&self) -> &HashSet<PacketKey> {
        &self.delivered
    }

    pub fn fault_plan(&self) -> &FaultPlan {
        &self.plan
    }

    /// Mutable node access for fixtures, effective from the next round.
    pub fn nodes_mut(&mut self) -> &mut [NodeState] {
        self.needs_recluster = true;
        &mut self.nodes
    }

    /// Pins the primary path of a fraction of flows to Faulty for the whole
    /// run. Flow membership is a hash of the source id, so the affected set
    /// grows monotonically with `fraction`.
    pub fn force_primary_faults(&mut self, fraction: f64) {
        self.forced_fraction = fraction.clamp(0.0, 1.0);
    }

    fn is_forced(&self, src: NodeId) -> bool {
        self.forced_fraction > 0.0
            && unit_hash(&[self.cfg.seed, STREAM_FORCED, u64::from(src.0)]) < self.forced_fraction
    }

    pub fn redundancy(&self) -> RedundancyMode {
        self.cfg.redundancy_mode
    }

    /// Snapshot before any round has run.
    pub fn initial_report(&self) -> RoundReport {
        RoundReport {
            round: 0,
            global_energy: self.global_energy(),
            alive_count: self.alive_count(),
            ..Default::default()
        }
    }

    fn alive_count(&self) -> u64 {
        self.nodes.iter().filter(|n| !n.is_dead()).count() as u64
    }

    /// Advances one round. After the run has finished this returns an idle
    /// report for the next round index.
    pub fn run_round(&mut self) -> RoundReport {
        self.round += 1;
        let round = self.round;
        self.cur = RoundReport {
            round,
            ..Default::default()
        };
        if !self.finished {
            self.maintain();
            let links = self.inject_phase();
            self.member_phase(&links);
            self.aggregate_phase(&links);
            let found = self.detect_phase();
            self.recover_phase(found);
            self.check_network_alive();
            if round >= self.cfg.rounds_max {
                self.finished = true;
            }
        }
        let mut report = std::mem::take(&mut self.cur);
        report.global_energy = self.global_energy();
        report.charged = self.ledger.total();
        report.alive_count = self.alive_count();
        if report.packets_delivered > 0 {
            report.mean_delay = Some(report.delay_sum as f64 / report.packets_delivered as f64);
        }
        report
    }

    /// Charges `joules` to `node`. A node that cannot cover the charge is
    /// drained to zero and dies; the return value says whether it survived.
    fn charge(&mut self, node: NodeId, kind: ChargeKind, joules: f64) -> bool {
        let n = &mut self.nodes[node.index()];
        if n.energy >= joules {
            n.energy -= joules;
            self.ledger.record(kind, joules);
            true
        } else {
            let rest = n.energy;
            n.energy = 0.0;
            self.ledger.record(kind, rest);
            self.kill(node, None, "depleted");
            false
        }
    }

    /// Takes a node out of service and writes off its remaining energy.
    fn kill(&mut self, node: NodeId, verdict: Option<Verdict>, action: &str) {
        let i = node.index();
        if self.nodes[i].is_dead() {
            return;
        }
        let rest = self.nodes[i].energy;
        if rest > 0.0 {
            self.ledger.record(ChargeKind::Stranded, rest);
            self.nodes[i].energy = 0.0;
        }
        self.nodes[i].role = NodeRole::Dead;
        self.cur.packets_dropped += (self.queues[i].close() + self.agg_queues[i].close()) as u64;
        self.cur.deaths += 1;
        if let Some(g) = self.graph.as_mut() {
            g.remove_node(node);
        }
        if self.nodes[i].is_cluster_head {
            self.needs_recluster = true;
        }
        self.invalidate_flows_through(node);
        self.member_flows[i] = None;
        self.agg_flows[i] = None;
        self.topology_changed = true;
        self.log(node, verdict, action);
    }

    fn invalidate_flows_through(&mut self, node: NodeId) {
        self.cluster_graphs.clear();
        for flows in [&mut self.member_flows, &mut self.agg_flows] {
            for f in flows.iter_mut() {
                if f.as_ref().is_some_and(|ps| ps.touches(node)) {
                    *f = None;
                }
            }
        }
    }

    fn log(&mut self, node: NodeId, verdict: Option<Verdict>, action: &str) {
        self.events.push(EventRecord {
            round: self.round,
            node,
            class: self.injected_class.get(&node).copied(),
            verdict,
            action: action.to_string(),
        });
    }

    /// Declares the network dead once too few powered sensing nodes remain or
    /// none of them can reach the base station, and writes off whatever
    /// energy is left.
    fn check_network_alive(&mut self) {
        let sources: Vec<NodeId> = self
            .nodes
            .iter()
            .filter(|n| n.role.senses() && phases::can_tx(n))
            .map(|n| n.id)
            .collect();
        let floor = self.cfg.death_threshold * self.active_at_start as f64;
        let alive = !sources.is_empty()
            && sources.len() as f64 >= floor
            && (!self.topology_changed || self.any_reaches_sink(&sources));
        self.topology_changed = false;
        if alive {
            return;
        }
        for i in 0..self.nodes.len() {
            let rest = self.nodes[i].energy;
            if rest > 0.0 {
                self.ledger.record(ChargeKind::Stranded, rest);
                self.nodes[i].energy = 0.0;
            }
            if !self.nodes[i].is_dead() {
                self.nodes[i].role = NodeRole::Dead;
                self.queues[i].close();
                self.agg_queues[i].close();
            }
        }
        self.graph = None;
        self.lifetime = Some(self.round);
        self.finished = true;
    }

    fn any_reaches_sink(&self, sources: &[NodeId]) -> bool {
        let Some(g) = self.graph.as_ref() else {
            return true;
        };
        let Some(sink) = g.sink() else {
            return true;
        };
        let mut seen = vec![false; g.vertex_count()];
        seen[sink.index()] = true;
        let mut stack = vec![sink];
        while let Some(u) = stack.pop() {
            for &(v, _) in g.neighbors(u) {
                if !seen[v.index()] {
                    seen[v.index()] = true;
                    if g.can_relay(v) {
                        stack.push(v);
                    }
                }
            }
        }
        sources.iter().any(|s| seen[s.index()])
    }

    fn flow_built(&self, mut ps: PathSet) -> PathSet {
        if self.is_forced(ps.primary.src()) {
            ps.primary.status = PathStatus::Faulty;
        }
        ps
    }
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub config: ScenarioConfig,
    /// Round 0 snapshot.
    pub initial: RoundReport,
    /// One report per simulated round, starting at round 1.
    pub reports: Vec<RoundReport>,
    pub events: Vec<EventRecord>,
    pub injected: Vec<InjectedFault>,
    pub diagnoses: Vec<Diagnosis>,
    pub lifetime: Option<u64>,
    pub ledger: EnergyLedger,
    pub initial_energy: f64,
    pub node_count: usize,
}

impl ScenarioRun {
    /// Cumulative delivered / (created - suppressed) over the whole run.
    pub fn throughput(&self) -> f64 {
        let created: u64 = self
            .reports
            .iter()
            .map(|r| r.packets_created - r.packets_suppressed)
            .sum();
        let delivered: u64 = self.reports.iter().map(|r| r.packets_delivered).sum();
        crate::metrics::packet_delivery_ratio(created, delivered).unwrap_or(0.0)
    }
}

/// Runs until `rounds_max` or until the network is dead.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    run_with(cfg, |_| {})
}

/// As [`run_scenario`], with a hook to adjust the simulation before round 1.
pub fn run_with(cfg: &ScenarioConfig, setup: impl FnOnce(&mut Simulation)) -> Result<ScenarioRun> {
    let mut sim = Simulation::new(cfg.clone())?;
    setup(&mut sim);
    let initial = sim.initial_report();
    let mut reports = Vec::new();
    while !sim.is_finished() {
        reports.push(sim.run_round());
    }
    Ok(ScenarioRun {
        config: cfg.clone(),
        initial,
        reports,
        lifetime: sim.lifetime,
        initial_energy: sim.initial_energy,
        node_count: sim.nodes.len(),
        ledger: sim.ledger,
        events: sim.events,
        injected: sim.injected,
        diagnoses: sim.diagnoses,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub failed_fraction: f64,
    pub mode: RedundancyMode,
    pub throughput: f64,
}

/// Throughput for every (fraction, mode) pair with that fraction of primary
/// paths pinned Faulty from the start.
pub fn run_path_failure_sweep(
    cfg: &ScenarioConfig,
    fractions: &[f64],
    modes: &[RedundancyMode],
) -> Result<Vec<SweepPoint>> {
    if let Some(f) = fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(crate::Error::InvalidInput(format!(
            "failed fraction {f} outside [0, 1]"
        )));
    }
    let mut out = Vec::with_capacity(fractions.len() * modes.len());
    for &f in fractions {
        for &mode in modes {
            out.push(sweep_point(cfg, f, mode)?);
        }
    }
    Ok(out)
}

pub fn sweep_point(cfg: &ScenarioConfig, fraction: f64, mode: RedundancyMode) -> Result<SweepPoint> {
    let cfg = ScenarioConfig {
        redundancy_mode: mode,
        ..cfg.clone()
    };
    let run = run_with(&cfg, |s| s.force_primary_faults(fraction))?;
    Ok(SweepPoint {
        failed_fraction: fraction,
        mode,
        throughput: run.throughput(),
    })
}
