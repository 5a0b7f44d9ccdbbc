use std::collections::{BTreeMap, HashMap, HashSet};
use std::f64::consts::PI;

use rand_distr::{Distribution, Normal};

use super::Simulation;
use crate::config::{Aggregation, RedundancyMode};
use crate::energy::{receive_energy, transmit_energy, ChargeKind};
use crate::faults::{
    detect, inject, recover, AckOutcome, Diagnosis, LinkFaults, Observation, PartnerReport, RecoveryAction, Thresholds,
    Verdict,
};
use crate::model::{Carried, NodeId, NodeRole, NodeState, Packet, PacketKey};
use crate::routing::{build_path_set, should_forward, PathSet, PathStatus};
use crate::topology::{
    assign_standbys, build_graph, derive_load_budget, elect_heads, form_clusters, ClusterLayout, LoadBudget,
};
use crate::traffic::{Enqueued, TxQueue};

pub(super) fn powered(n: &NodeState) -> bool {
    n.is_operational() && n.status.microcontroller_ok && n.status.battery_ok && n.energy > 0.0
}

pub(super) fn can_tx(n: &NodeState) -> bool {
    powered(n) && n.status.transmitter_ok
}

pub(super) fn can_rx(n: &NodeState) -> bool {
    powered(n) && n.status.receiver_ok
}

/// Whether a node answers a probe.
fn replies(n: &NodeState) -> bool {
    can_rx(n) && can_tx(n)
}

/// The monitored quantity at a point of the field.
pub fn field_value(x: f64, y: f64) -> f64 {
    20.0 + 2.0 * (x / 100.0).sin() * (y / 100.0).cos()
}

struct Arrival {
    carried: Carried,
    member: NodeId,
    reading: f64,
}

/// Per-round bookkeeping shared between phases.
#[derive(Default)]
pub(super) struct Scratch {
    hops: Vec<(NodeId, NodeId, AckOutcome)>,
    /// (head, source) pairs for which the head received a frame.
    heard: HashSet<(NodeId, NodeId)>,
    arrivals: BTreeMap<NodeId, Vec<Arrival>>,
    seen_at_head: HashSet<(NodeId, PacketKey)>,
    readings: BTreeMap<NodeId, Vec<(NodeId, f64)>>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Cargo {
    Member,
    Aggregate,
}

enum Leg {
    Arrived { acked: bool },
    Failed,
    Suppressed,
}

fn verdict_rank(v: Verdict) -> u8 {
    match v {
        Verdict::DeadNode | Verdict::BatteryFault => 0,
        Verdict::ReceiverFault => 1,
        Verdict::SensorFault => 2,
        Verdict::TransmissionFault => 3,
        Verdict::Healthy => 4,
    }
}

impl Simulation {
    fn sink(&self) -> NodeId {
        NodeId::from(self.nodes.len())
    }

    pub(super) fn maintain(&mut self) {
        let r = self.round;
        let periodic = r > 1 && (r - 1).is_multiple_of(self.cfg.recluster_period);
        if self.graph.is_none() || self.needs_recluster || periodic {
            self.recluster();
        }
        self.scratch = Scratch::default();
    }

    fn recluster(&mut self) {
        let graph = build_graph(&self.nodes, self.cfg.radio_range)
            .expect("radio range validated")
            .with_sink(self.cfg.bs());
        let k = self.cfg.cluster_count;
        let separation = (self.cfg.width * self.cfg.height / (PI * k as f64)).sqrt();
        let heads = elect_heads(&graph, &self.nodes, k, separation)
            .expect("cluster count validated")
            .heads;
        let layout = if heads.is_empty() {
            ClusterLayout::default()
        } else {
            let mean_energy = heads.iter().map(|h| self.nodes[h.index()].energy).sum::<f64>() / heads.len() as f64;
            let others: Vec<f64> = graph
                .node_ids()
                .filter(|id| !heads.contains(id))
                .map(|id| {
                    heads
                        .iter()
                        .map(|h| self.nodes[h.index()].pos.distance(&self.nodes[id.index()].pos))
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            let link = if others.is_empty() {
                0.0
            } else {
                others.iter().sum::<f64>() / others.len() as f64
            };
            let budget = derive_load_budget(
                mean_energy,
                self.cfg.recluster_period,
                link,
                self.cfg.packet_bits,
                &self.cfg.energy,
            )
            .unwrap_or(LoadBudget::Unbounded);
            let mut layout = form_clusters(&graph, &heads, budget).expect("heads present");
            assign_standbys(&mut layout, &self.nodes);
            layout
        };
        for n in self.nodes.iter_mut() {
            n.cluster = None;
            n.is_cluster_head = false;
        }
        for c in &layout.clusters {
            self.nodes[c.head.index()].is_cluster_head = true;
            self.nodes[c.head.index()].cluster = Some(c.head);
            for m in &c.members {
                self.nodes[m.index()].cluster = Some(c.head);
            }
        }
        self.layout = layout;
        self.graph = Some(graph);
        self.cluster_graphs.clear();
        self.member_flows.iter_mut().for_each(|f| *f = None);
        self.agg_flows.iter_mut().for_each(|f| *f = None);
        self.queues.iter_mut().for_each(TxQueue::reset_slots);
        self.agg_queues.iter_mut().for_each(TxQueue::reset_slots);
        self.silence.clear();
        self.needs_recluster = false;
        self.topology_changed = true;
    }

    pub(super) fn inject_phase(&mut self) -> LinkFaults {
        let injection = inject(&self.plan, &mut self.nodes, self.round);
        for f in injection.faulted {
            self.injected_class.insert(f.node, f.class);
            self.cur.faults_injected += 1;
            self.log(f.node, None, "inject");
            if f.detectable {
                self.injected.push(f);
            }
        }
        injection.links
    }

    fn sense(&mut self) {
        let noise = Normal::new(0.0, self.cfg.sensing.noise_sigma).expect("sigma validated");
        let round = self.round;
        let sink = self.sink();
        for i in 0..self.nodes.len() {
            if !powered(&self.nodes[i]) {
                continue;
            }
            let n = &self.nodes[i];
            let mut value = field_value(n.pos.x, n.pos.y) + noise.sample(&mut self.sense_rng);
            if !n.status.sensor_circuit_ok {
                value += self.cfg.sensing.fault_offset;
            }
            self.nodes[i].sensed_value = value;
            let n = &self.nodes[i];
            if !n.role.senses() {
                continue;
            }
            let src = n.id;
            let seq = self.seq[i];
            self.seq[i] += 1;
            self.cur.packets_created += 1;
            if n.is_cluster_head {
                let key = PacketKey { src, seq };
                self.scratch.seen_at_head.insert((src, key));
                self.scratch.arrivals.entry(src).or_default().push(Arrival {
                    carried: Carried {
                        key,
                        created_round: round,
                    },
                    member: src,
                    reading: value,
                });
                continue;
            }
            let dst = n.cluster.unwrap_or(sink);
            let packet = Packet::new(seq, src, dst, value, self.cfg.packet_bits, round).expect("positive size");
            if self.queues[i].enqueue(packet, round) != Enqueued::Queued {
                self.cur.packets_dropped += 1;
            }
        }
    }

    pub(super) fn member_phase(&mut self, links: &LinkFaults) {
        self.sense();
        let sink = self.sink();
        for i in 0..self.nodes.len() {
            if self.queues[i].is_empty() || !can_tx(&self.nodes[i]) {
                continue;
            }
            let n = &self.nodes[i];
            let dst = match n.cluster {
                Some(h) if !n.is_cluster_head => h,
                _ => sink,
            };
            let Some(mut ps) = self.member_flow(n.id, dst) else {
                self.queues[i].stalls += 1;
                continue;
            };
            self.transmit_queue(NodeId::from(i), &mut ps, Cargo::Member, links);
            if self.flow_intact(&ps) {
                self.member_flows[i] = Some(ps);
            }
        }
    }

    pub(super) fn aggregate_phase(&mut self, links: &LinkFaults) {
        let round = self.round;
        let sink = self.sink();
        let arrivals = std::mem::take(&mut self.scratch.arrivals);
        for (head, list) in arrivals {
            let h = head.index();
            if !powered(&self.nodes[h]) {
                self.cur.packets_dropped += list.len() as u64;
                continue;
            }
            let mut readings: Vec<(NodeId, f64)> = Vec::with_capacity(list.len());
            for a in &list {
                if !readings.iter().any(|(m, _)| *m == a.member) {
                    readings.push((a.member, a.reading));
                }
            }
            let size = match self.cfg.aggregation {
                Aggregation::Fixed => self.cfg.packet_bits,
                Aggregation::SumOfMembers => self.cfg.packet_bits * list.len() as u64,
            };
            let mean = list.iter().map(|a| a.reading).sum::<f64>() / list.len() as f64;
            let seq = self.agg_seq[h];
            self.agg_seq[h] += 1;
            let mut packet = Packet::new(seq, head, sink, mean, size, round).expect("positive size");
            packet.carried = list.into_iter().map(|a| a.carried).collect();
            let carried = packet.carried.len() as u64;
            self.scratch.readings.insert(head, readings);
            if self.agg_queues[h].enqueue(packet, round) != Enqueued::Queued {
                self.cur.packets_dropped += carried;
            }
        }
        for i in 0..self.nodes.len() {
            if self.agg_queues[i].is_empty() || !can_tx(&self.nodes[i]) {
                continue;
            }
            let Some(mut ps) = self.agg_flow(NodeId::from(i)) else {
                self.agg_queues[i].stalls += 1;
                continue;
            };
            self.transmit_queue(NodeId::from(i), &mut ps, Cargo::Aggregate, links);
            if self.flow_intact(&ps) {
                self.agg_flows[i] = Some(ps);
            }
        }
    }

    fn flow_intact(&self, ps: &PathSet) -> bool {
        let sink = self.sink();
        ps.paths()
            .all(|p| p.hops.iter().all(|h| *h == sink || !self.nodes[h.index()].is_dead()))
    }

    fn member_flow(&mut self, src: NodeId, dst: NodeId) -> Option<PathSet> {
        let i = src.index();
        if let Some(ps) = self.member_flows[i].take() {
            if ps.primary.dst() == dst && !ps.all_faulty() {
                return Some(ps);
            }
        }
        let k = self.cfg.redundancy_mode.paths();
        let graph = self.graph.as_ref()?;
        let mut built = None;
        if dst != self.sink() {
            if !self.cluster_graphs.contains_key(&dst) {
                let mut keep = self
                    .layout
                    .cluster_of(dst)
                    .map(|c| c.members.clone())
                    .unwrap_or_default();
                keep.push(dst);
                self.cluster_graphs.insert(dst, graph.induced(&keep));
            }
            built = build_path_set(&self.cluster_graphs[&dst], src, dst, k, &self.cost).ok();
        }
        if built.is_none() {
            built = build_path_set(graph, src, dst, k, &self.cost).ok();
        }
        self.queues[i].reset_slots();
        built.map(|ps| self.flow_built(ps))
    }

    fn agg_flow(&mut self, src: NodeId) -> Option<PathSet> {
        let i = src.index();
        if let Some(ps) = self.agg_flows[i].take() {
            if !ps.all_faulty() {
                return Some(ps);
            }
        }
        let k = self.cfg.redundancy_mode.paths();
        let graph = self.graph.as_ref()?;
        let built = build_path_set(graph, src, self.sink(), k, &self.cost).ok();
        self.agg_queues[i].reset_slots();
        built.map(|ps| self.flow_built(ps))
    }

    fn queue(&mut self, src: NodeId, cargo: Cargo) -> &mut TxQueue {
        match cargo {
            Cargo::Member => &mut self.queues[src.index()],
            Cargo::Aggregate => &mut self.agg_queues[src.index()],
        }
    }

    /// Sends as much of `src`'s queue as the path slots allow this round.
    fn transmit_queue(&mut self, src: NodeId, ps: &mut PathSet, cargo: Cargo, links: &LinkFaults) {
        let round = self.round;
        let gap = self.cfg.slot_gap;
        let blind = self.nodes[src.index()].role == NodeRole::End;
        let always = matches!(self.cfg.redundancy_mode, RedundancyMode::AlwaysDuplicate { .. });
        ps.clear_busy();
        loop {
            if self.nodes[src.index()].is_dead() {
                return;
            }
            let q = self.queue(src, cargo);
            if q.is_empty() {
                return;
            }
            let Some(first) = q.free_path(ps, round, gap) else {
                q.stalls += 1;
                return;
            };
            let entry = q.pop_front().expect("non-empty queue");
            q.occupy(ps, first, round);
            let mut copies = vec![first];
            if blind || always || entry.retry {
                while let Some(j) = q.free_path(ps, round, gap) {
                    q.occupy(ps, j, round);
                    copies.push(j);
                }
            }

            let (mut arrived, mut acked, mut suppressed) = (false, false, false);
            for j in copies {
                let hops = ps.get(j).expect("scheduled path").hops.clone();
                match self.send_along(&hops, &entry.packet, cargo, links) {
                    Leg::Arrived { acked: a } => {
                        arrived = true;
                        acked |= a;
                    }
                    Leg::Suppressed => suppressed = true,
                    Leg::Failed => {
                        if let Some(p) = ps.get_mut(j) {
                            p.status = PathStatus::Faulty;
                        }
                    }
                }
            }
            if acked {
                continue;
            }
            if suppressed && !arrived {
                self.cur.packets_suppressed += 1;
                continue;
            }
            if blind {
                if !arrived {
                    self.cur.packets_dropped += entry.packet.carried.len().max(1) as u64;
                }
                continue;
            }
            self.queue(src, cargo).requeue_front(entry);
        }
    }

    fn record_hop(&mut self, u: NodeId, v: NodeId, outcome: AckOutcome) {
        if self.nodes[u.index()].role != NodeRole::End {
            self.scratch.hops.push((u, v, outcome));
        }
    }

    /// Walks a packet along `hops`, charging every transmission and
    /// reception.
    fn send_along(&mut self, hops: &[NodeId], packet: &Packet, cargo: Cargo, links: &LinkFaults) -> Leg {
        let bits = packet.size_bits as f64;
        let sink = self.sink();
        let e_rx = receive_energy(bits, &self.cfg.energy).expect("non-negative size");
        for w in 0..hops.len() - 1 {
            let (u, v) = (hops[w], hops[w + 1]);
            if !can_tx(&self.nodes[u.index()]) {
                return Leg::Failed;
            }
            let hears = can_rx(&self.nodes[u.index()]);
            let to = if v == sink {
                self.cfg.bs()
            } else {
                self.nodes[v.index()].pos
            };
            let d = self.nodes[u.index()].pos.distance(&to);
            let e_tx = transmit_energy(d, bits, &self.cfg.energy).expect("non-negative range");
            self.cur.frames_sent += 1;
            if !self.charge(u, ChargeKind::Transmit, e_tx) {
                return Leg::Failed;
            }
            let garbled = links.is_faulty(u, v);
            // Acknowledgements only help a sender that can hear them.
            let heard_back = |answers: bool, o: AckOutcome| if answers && hears { o } else { AckOutcome::Silent };
            if v == sink {
                if garbled {
                    self.record_hop(u, v, heard_back(true, AckOutcome::Corrupted));
                    return Leg::Failed;
                }
                self.record_hop(u, v, heard_back(true, AckOutcome::Acked));
                self.deliver(packet);
                return Leg::Arrived { acked: hears };
            }
            if !can_rx(&self.nodes[v.index()]) || !self.charge(v, ChargeKind::Receive, e_rx) {
                self.record_hop(u, v, AckOutcome::Silent);
                return Leg::Failed;
            }
            let is_dst = w + 2 == hops.len();
            if is_dst && cargo == Cargo::Member {
                self.scratch.heard.insert((v, packet.src));
            }
            let answers = can_tx(&self.nodes[v.index()]);
            if garbled {
                self.record_hop(u, v, heard_back(answers, AckOutcome::Corrupted));
                return Leg::Failed;
            }
            self.record_hop(u, v, heard_back(answers, AckOutcome::Acked));
            if is_dst {
                if cargo == Cargo::Member {
                    self.arrive_at_head(v, packet);
                }
                return Leg::Arrived {
                    acked: answers && hears,
                };
            }
            if !answers {
                return Leg::Failed;
            }
            if cargo == Cargo::Member
                && !should_forward(
                    packet.payload,
                    self.nodes[v.index()].sensed_value,
                    self.cfg.sensing.suppression_epsilon,
                )
            {
                return Leg::Suppressed;
            }
        }
        Leg::Failed
    }

    fn arrive_at_head(&mut self, head: NodeId, packet: &Packet) {
        let key = packet.key();
        if self.scratch.seen_at_head.insert((head, key)) {
            self.scratch.arrivals.entry(head).or_default().push(Arrival {
                carried: Carried {
                    key,
                    created_round: packet.created_round,
                },
                member: packet.src,
                reading: packet.payload,
            });
        }
    }

    fn deliver(&mut self, packet: &Packet) {
        let round = self.round;
        let own = [Carried {
            key: packet.key(),
            created_round: packet.created_round,
        }];
        let carried: &[Carried] = if packet.carried.is_empty() {
            &own
        } else {
            &packet.carried
        };
        for c in carried {
            if self.delivered.insert(c.key) {
                self.cur.packets_delivered += 1;
                self.cur.delay_sum += round - c.created_round;
                if c.created_round == round {
                    self.cur.delivered_same_round += 1;
                }
            }
        }
    }

    pub(super) fn detect_phase(&mut self) -> Vec<Diagnosis> {
        let Some(graph) = self.graph.as_ref() else {
            return Vec::new();
        };
        let round = self.round;
        let sink = self.sink();
        let d = &self.cfg.detection;
        let thresholds = Thresholds {
            sensor_threshold: d.sensor_threshold,
            battery_threshold: d.battery_fraction * self.cfg.initial_energy,
            ack_timeout: d.ack_timeout,
        };

        let mut outcomes: BTreeMap<NodeId, BTreeMap<NodeId, AckOutcome>> = BTreeMap::new();
        for &(u, v, o) in &self.scratch.hops {
            let slot = outcomes.entry(u).or_default().entry(v).or_insert(o);
            *slot = match (*slot, o) {
                (AckOutcome::Acked, _) | (_, AckOutcome::Acked) => AckOutcome::Acked,
                (AckOutcome::Corrupted, _) | (_, AckOutcome::Corrupted) => AckOutcome::Corrupted,
                _ => AckOutcome::Silent,
            };
        }
        for c in &self.layout.clusters {
            let head = &self.nodes[c.head.index()];
            if !powered(head) || head.role == NodeRole::End {
                continue;
            }
            for m in &c.members {
                let n = &self.nodes[m.index()];
                if n.role.senses() && !self.scratch.heard.contains(&(c.head, *m)) {
                    outcomes
                        .entry(c.head)
                        .or_default()
                        .entry(*m)
                        .or_insert(AckOutcome::Silent);
                }
            }
        }

        let mut silence = HashMap::new();
        for (u, partners) in &outcomes {
            for (p, o) in partners {
                if *o == AckOutcome::Silent {
                    let streak = self.silence.get(&(*u, *p)).copied().unwrap_or(0) + 1;
                    silence.insert((*u, *p), streak);
                }
            }
        }

        let empty = BTreeMap::new();
        let mut found = Vec::new();
        for n in self.nodes.iter().filter(|n| powered(n) && graph.contains(n.id)) {
            let u = n.id;
            let hears = can_rx(n);
            let speaks = can_tx(n);
            let partners: Vec<PartnerReport> = outcomes
                .get(&u)
                .unwrap_or(&empty)
                .iter()
                .map(|(p, o)| PartnerReport {
                    partner: *p,
                    outcome: *o,
                    silent_rounds: silence.get(&(u, *p)).copied().unwrap_or(0),
                    probe_replied: *o == AckOutcome::Silent && hears && speaks && replies(&self.nodes[p.index()]),
                })
                .collect();
            let probing = partners
                .iter()
                .any(|p| p.outcome == AckOutcome::Silent && p.silent_rounds >= thresholds.ack_timeout);
            let (mut probes_sent, mut probes_answered) = (0, 0);
            if probing && speaks {
                let mut others: Vec<(NodeId, f64)> = graph
                    .neighbors(u)
                    .iter()
                    .copied()
                    .filter(|(w, _)| *w != sink && !partners.iter().any(|p| p.partner == *w))
                    .collect();
                others.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                for (w, _) in others.into_iter().take(d.probe_fanout) {
                    probes_sent += 1;
                    if hears && replies(&self.nodes[w.index()]) {
                        probes_answered += 1;
                    }
                }
            }
            let obs = Observation {
                partners,
                probes_sent,
                probes_answered,
                neighbor_readings: self.scratch.readings.get(&u).cloned().unwrap_or_default(),
                own_battery: n.energy,
                has_neighbors: !graph.neighbors(u).is_empty(),
            };
            found.extend(
                detect(u, round, &obs, &thresholds)
                    .into_iter()
                    .filter(|d| d.verdict != Verdict::Healthy),
            );
        }
        self.silence = silence;
        found
    }

    pub(super) fn recover_phase(&mut self, mut found: Vec<Diagnosis>) {
        self.cur.diagnoses = found.len() as u64;
        self.diagnoses.extend(found.iter().copied());
        found.sort_by_key(|d| (verdict_rank(d.verdict), d.suspect, d.reporter));
        let mut handled = HashSet::new();
        for d in found {
            let reporter = if d.verdict == Verdict::TransmissionFault {
                Some(d.reporter)
            } else {
                None
            };
            if !handled.insert((d.suspect, d.verdict, reporter)) {
                continue;
            }
            let Some(graph) = self.graph.as_ref() else {
                return;
            };
            let cluster = self.layout.cluster_of(d.suspect).cloned();
            let Ok(actions) = recover(&d, cluster.as_ref(), graph, &self.nodes) else {
                continue;
            };
            for a in actions {
                self.apply(&a, &d);
            }
        }
    }

    fn apply(&mut self, action: &RecoveryAction, d: &Diagnosis) {
        let verdict = Some(d.verdict);
        match *action {
            RecoveryAction::Reassign { node, role } => {
                if self.nodes[node.index()].is_dead() {
                    return;
                }
                self.nodes[node.index()].role = role;
                if let Some(g) = self.graph.as_mut() {
                    g.set_relay(node, role.relays());
                }
                self.cluster_graphs.clear();
                self.topology_changed = true;
                self.log(node, verdict, action.as_str());
            }
            RecoveryAction::Remove { node } => self.kill(node, verdict, action.as_str()),
            RecoveryAction::ActivateStandby { standby, head, .. } => {
                let s = standby.index();
                if self.nodes[s].role != NodeRole::Standby {
                    return;
                }
                self.nodes[s].role = NodeRole::Normal;
                self.nodes[s].cluster = Some(head);
                if let Some(g) = self.graph.as_mut() {
                    g.insert_node(standby, true);
                }
                if let Some(c) = self.layout.clusters.iter_mut().find(|c| c.head == head) {
                    c.standbys.retain(|x| *x != standby);
                    c.members.push(standby);
                }
                self.cluster_graphs.remove(&head);
                self.cur.activations += 1;
                self.topology_changed = true;
                self.log(standby, verdict, action.as_str());
            }
            RecoveryAction::NoStandby { node } => self.log(node, verdict, action.as_str()),
            RecoveryAction::RebuildPaths { node } => self.invalidate_flows_through(node),
            RecoveryAction::Recluster { head } => {
                self.needs_recluster = true;
                self.log(head, verdict, action.as_str());
            }
            RecoveryAction::MarkLinkFaulty { to, .. } => self.log(to, verdict, action.as_str()),
        }
    }
}
