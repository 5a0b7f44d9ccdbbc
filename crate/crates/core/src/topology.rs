//! Deployment, radio connectivity, head election and cluster formation.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::single_hop_energy;
use crate::error::{Error, Result};
use crate::model::{EnergyParams, NodeId, NodeRole, NodeState, Position};

/// Places `node_count` nodes uniformly at random over a `width` x `height`
/// field. The first `floor(node_count * standby_fraction)` nodes of a seeded
/// shuffle are marked standby.
pub fn deploy(
    node_count: usize,
    width: f64,
    height: f64,
    standby_fraction: f64,
    initial_energy: f64,
    seed: u64,
) -> Result<Vec<NodeState>> {
    if node_count == 0 {
        return Err(Error::InvalidInput("node_count must be at least 1".into()));
    }
    if !(width > 0.0 && height > 0.0) {
        return Err(Error::InvalidInput(format!(
            "deployment area must be positive, got {width} x {height}"
        )));
    }
    if !(0.0..1.0).contains(&standby_fraction) {
        return Err(Error::InvalidInput(format!(
            "standby_fraction {standby_fraction} outside [0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes: Vec<NodeState> = (0..node_count)
        .map(|i| {
            let pos = Position::new(rng.random_range(0.0..=width), rng.random_range(0.0..=height));
            NodeState::new(NodeId::from(i), pos, initial_energy)
        })
        .collect();
    let standby_count = (node_count as f64 * standby_fraction).floor() as usize;
    let mut order: Vec<usize> = (0..node_count).collect();
    order.shuffle(&mut rng);
    for &i in order.iter().take(standby_count) {
        nodes[i].role = NodeRole::Standby;
    }
    Ok(nodes)
}

/// Radio connectivity between operational nodes, plus an optional sink vertex.
///
/// An edge joins two present vertices iff their distance is at most the radio
/// range (closed threshold). Dead and standby nodes are absent.
#[derive(Debug, Clone)]
pub struct NetworkGraph {
    positions: Vec<Position>,
    present: Vec<bool>,
    relay_ok: Vec<bool>,
    adjacency: Vec<Vec<(NodeId, f64)>>,
    radio_range: f64,
    sink: Option<NodeId>,
}

pub fn build_graph(nodes: &[NodeState], radio_range: f64) -> Result<NetworkGraph> {
    if !(radio_range > 0.0) {
        return Err(Error::InvalidInput(format!(
            "radio_range must be positive, got {radio_range}"
        )));
    }
    let n = nodes.len();
    let mut graph = NetworkGraph {
        positions: nodes.iter().map(|s| s.pos).collect(),
        present: nodes.iter().map(|s| s.role.is_operational()).collect(),
        relay_ok: nodes.iter().map(|s| s.role.relays()).collect(),
        adjacency: vec![Vec::new(); n],
        radio_range,
        sink: None,
    };
    for u in 0..n {
        if !graph.present[u] {
            continue;
        }
        for v in (u + 1)..n {
            if !graph.present[v] {
                continue;
            }
            let d = graph.positions[u].distance(&graph.positions[v]);
            if d <= radio_range {
                graph.adjacency[u].push((NodeId::from(v), d));
                graph.adjacency[v].push((NodeId::from(u), d));
            }
        }
    }
    Ok(graph)
}

impl NetworkGraph {
    /// Adds the base station as an extra vertex. It can terminate routes but
    /// never relays.
    pub fn with_sink(mut self, pos: Position) -> Self {
        let id = NodeId::from(self.positions.len());
        self.positions.push(pos);
        self.present.push(true);
        self.relay_ok.push(false);
        self.adjacency.push(Vec::new());
        self.sink = Some(id);
        for u in 0..id.index() {
            if self.present[u] {
                let d = self.positions[u].distance(&pos);
                if d <= self.radio_range {
                    self.adjacency[u].push((id, d));
                    self.adjacency[id.index()].push((NodeId::from(u), d));
                }
            }
        }
        self
    }

    /// Builds a graph directly from positions and an explicit edge list.
    /// Edge lengths are the euclidean distances. Used for fixtures.
    pub fn from_edges(positions: Vec<Position>, edges: &[(u32, u32)]) -> Self {
        let n = positions.len();
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in edges {
            let d = positions[u as usize].distance(&positions[v as usize]);
            adjacency[u as usize].push((NodeId(v), d));
            adjacency[v as usize].push((NodeId(u), d));
        }
        for list in &mut adjacency {
            list.sort_by_key(|(id, _)| *id);
            list.dedup_by_key(|(id, _)| *id);
        }
        Self {
            positions,
            present: vec![true; n],
            relay_ok: vec![true; n],
            adjacency,
            radio_range: f64::INFINITY,
            sink: None,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn sink(&self) -> Option<NodeId> {
        self.sink
    }

    pub fn radio_range(&self) -> f64 {
        self.radio_range
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.present.get(id.index()).copied().unwrap_or(false)
    }

    pub fn can_relay(&self, id: NodeId) -> bool {
        self.contains(id) && self.relay_ok[id.index()]
    }

    pub fn position(&self, id: NodeId) -> Position {
        self.positions[id.index()]
    }

    pub fn neighbors(&self, id: NodeId) -> &[(NodeId, f64)] {
        &self.adjacency[id.index()]
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        self.positions[a.index()].distance(&self.positions[b.index()])
    }

    pub fn are_adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency[a.index()].iter().any(|(v, _)| *v == b)
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Present sensor vertices (the sink excluded), ascending.
    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        let sink = self.sink;
        (0..self.positions.len())
            .map(NodeId::from)
            .filter(move |id| self.present[id.index()] && Some(*id) != sink)
    }

    /// Drops a vertex and all its edges.
    pub fn remove_node(&mut self, id: NodeId) {
        if !self.contains(id) {
            return;
        }
        self.present[id.index()] = false;
        let neighbors = std::mem::take(&mut self.adjacency[id.index()]);
        for (v, _) in neighbors {
            self.adjacency[v.index()].retain(|(w, _)| *w != id);
        }
    }

    /// Brings a vertex (e.g. an activated standby) into the graph at its
    /// stored position.
    pub fn insert_node(&mut self, id: NodeId, relays: bool) {
        if self.contains(id) {
            self.relay_ok[id.index()] = relays;
            return;
        }
        self.present[id.index()] = true;
        self.relay_ok[id.index()] = relays;
        let pos = self.positions[id.index()];
        for v in 0..self.positions.len() {
            if v == id.index() || !self.present[v] {
                continue;
            }
            let d = pos.distance(&self.positions[v]);
            if d <= self.radio_range {
                let vid = NodeId::from(v);
                let at = self.adjacency[id.index()].partition_point(|(w, _)| *w < vid);
                self.adjacency[id.index()].insert(at, (vid, d));
                let at = self.adjacency[v].partition_point(|(w, _)| *w < id);
                self.adjacency[v].insert(at, (id, d));
            }
        }
    }

    pub fn set_relay(&mut self, id: NodeId, relays: bool) {
        if let Some(r) = self.relay_ok.get_mut(id.index()) {
            *r = relays;
        }
    }

    /// Hop counts from `src` to every vertex (`None` when unreachable).
    pub fn hop_distances(&self, src: NodeId) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.positions.len()];
        if !self.contains(src) {
            return dist;
        }
        dist[src.index()] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u.index()].unwrap_or(0);
            for &(v, _) in self.neighbors(u) {
                if dist[v.index()].is_none() {
                    dist[v.index()] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Copy restricted to the given vertex set.
    pub fn induced(&self, keep: &[NodeId]) -> NetworkGraph {
        let mut mask = vec![false; self.positions.len()];
        for id in keep {
            if self.contains(*id) {
                mask[id.index()] = true;
            }
        }
        let adjacency = self
            .adjacency
            .iter()
            .enumerate()
            .map(|(u, list)| {
                if mask[u] {
                    list.iter().copied().filter(|(v, _)| mask[v.index()]).collect()
                } else {
                    Vec::new()
                }
            })
            .collect();
        NetworkGraph {
            positions: self.positions.clone(),
            present: mask,
            relay_ok: self.relay_ok.clone(),
            adjacency,
            radio_range: self.radio_range,
            sink: self.sink.filter(|s| keep.contains(s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadElection {
    pub heads: Vec<NodeId>,
    /// Separation radius finally used.
    pub separation: f64,
    /// Number of times the radius was halved to fit the target count.
    pub relaxations: u32,
}

/// Greedy head election: candidates in energy-descending, id-ascending order,
/// each accepted when it lies at least `separation_radius` from every head
/// already accepted. The radius is halved until the target count fits.
///
/// Only present nodes in the `Normal` role are candidates.
pub fn elect_heads(
    graph: &NetworkGraph,
    nodes: &[NodeState],
    target_cluster_count: usize,
    separation_radius: f64,
) -> Result<HeadElection> {
    let mut candidates: Vec<&NodeState> = nodes
        .iter()
        .filter(|n| graph.contains(n.id) && n.role == NodeRole::Normal)
        .collect();
    if target_cluster_count == 0 {
        return Err(Error::InvalidInput("target_cluster_count must be at least 1".into()));
    }
    if candidates.is_empty() {
        return Ok(HeadElection {
            heads: Vec::new(),
            separation: separation_radius,
            relaxations: 0,
        });
    }
    candidates.sort_by(|a, b| b.energy.total_cmp(&a.energy).then(a.id.cmp(&b.id)));
    let target = target_cluster_count.min(candidates.len());

    let mut radius = separation_radius.max(0.0);
    let mut relaxations = 0;
    loop {
        let mut heads: Vec<&NodeState> = Vec::with_capacity(target);
        for c in &candidates {
            if heads.iter().all(|h| h.pos.distance(&c.pos) >= radius) {
                heads.push(c);
                if heads.len() == target {
                    break;
                }
            }
        }
        if heads.len() == target || radius == 0.0 {
            return Ok(HeadElection {
                heads: heads.iter().map(|h| h.id).collect(),
                separation: radius,
                relaxations,
            });
        }
        radius = if radius < 1e-6 { 0.0 } else { radius / 2.0 };
        relaxations += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LoadBudget {
    Unbounded,
    /// Maximum per-round head load in packets: received member packets plus
    /// the one forwarded aggregate.
    Packets(u32),
}

impl LoadBudget {
    fn admits(&self, members: usize) -> bool {
        match self {
            LoadBudget::Unbounded => true,
            LoadBudget::Packets(b) => members as u64 + 2 <= u64::from(*b),
        }
    }
}

/// Budget a head can sustain until the next re-clustering:
/// `floor(head_energy / (rounds_target * single_hop_energy(link_range, bits)))`.
pub fn derive_load_budget(
    head_energy: f64,
    rounds_target: u64,
    link_range: f64,
    packet_bits: u64,
    params: &EnergyParams,
) -> Result<LoadBudget> {
    let per_packet = single_hop_energy(link_range, packet_bits as f64, params)?;
    if rounds_target == 0 || per_packet <= 0.0 {
        return Ok(LoadBudget::Unbounded);
    }
    let b = (head_energy / (rounds_target as f64 * per_packet)).floor();
    Ok(LoadBudget::Packets(b.clamp(0.0, f64::from(u32::MAX)) as u32))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub head: NodeId,
    pub members: Vec<NodeId>,
    pub standbys: Vec<NodeId>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClusterLayout {
    pub clusters: Vec<Cluster>,
    /// Alive nodes with no reachable head.
    pub unclustered: Vec<NodeId>,
    /// Nodes that joined a head already at its budget.
    pub over_budget: Vec<NodeId>,
}

impl ClusterLayout {
    pub fn cluster_of(&self, id: NodeId) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.head == id || c.members.contains(&id))
    }
}

/// Assigns every present non-head node to a head.
///
/// Nodes are placed in order of their hop distance to the nearest head so that
/// a node always has a neighbor already inside the cluster it joins. Each node
/// prefers heads by (hops, euclidean distance, head id) and takes the first one
/// whose projected load stays within `budget`. If none does, it joins the most
/// preferred reachable head and is flagged over budget.
pub fn form_clusters(graph: &NetworkGraph, heads: &[NodeId], budget: LoadBudget) -> Result<ClusterLayout> {
    if heads.is_empty() {
        return Err(Error::InvalidInput("form_clusters needs at least one head".into()));
    }
    let hop_tables: Vec<Vec<Option<u32>>> = heads.iter().map(|h| graph.hop_distances(*h)).collect();
    let mut assignment: Vec<Option<usize>> = vec![None; graph.vertex_count()];
    for (k, h) in heads.iter().enumerate() {
        assignment[h.index()] = Some(k);
    }
    let mut clusters: Vec<Cluster> = heads
        .iter()
        .map(|h| Cluster {
            head: *h,
            members: Vec::new(),
            standbys: Vec::new(),
        })
        .collect();

    let mut layout = ClusterLayout::default();
    let mut pending: Vec<(u32, f64, NodeId)> = Vec::new();
    for id in graph.node_ids() {
        if heads.contains(&id) {
            continue;
        }
        let best = heads
            .iter()
            .enumerate()
            .filter_map(|(k, h)| hop_tables[k][id.index()].map(|hops| (hops, graph.distance(id, *h))))
            .min_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        match best {
            Some((hops, d)) => pending.push((hops, d, id)),
            None => layout.unclustered.push(id),
        }
    }
    pending.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));

    for &(_, _, id) in &pending {
        let mut prefs: Vec<(u32, f64, NodeId, usize)> = heads
            .iter()
            .enumerate()
            .filter_map(|(k, h)| hop_tables[k][id.index()].map(|hops| (hops, graph.distance(id, *h), *h, k)))
            .collect();
        prefs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
        let attached = |k: usize| {
            graph
                .neighbors(id)
                .iter()
                .any(|(v, _)| assignment[v.index()] == Some(k))
        };
        let feasible = prefs
            .iter()
            .find(|p| budget.admits(clusters[p.3].members.len()) && attached(p.3));
        let chosen = match feasible {
            Some(p) => Some(p.3),
            None => {
                let fallback = prefs.iter().find(|p| attached(p.3)).map(|p| p.3);
                if fallback.is_some() {
                    layout.over_budget.push(id);
                }
                fallback
            }
        };
        match chosen {
            Some(k) => {
                assignment[id.index()] = Some(k);
                clusters[k].members.push(id);
            }
            None => layout.unclustered.push(id),
        }
    }
    for c in &mut clusters {
        c.members.sort();
    }
    layout.unclustered.sort();
    layout.clusters = clusters;
    Ok(layout)
}

/// Gives each standby node to the cluster whose head is nearest.
pub fn assign_standbys(layout: &mut ClusterLayout, nodes: &[NodeState]) {
    for c in &mut layout.clusters {
        c.standbys.clear();
    }
    if layout.clusters.is_empty() {
        return;
    }
    for n in nodes.iter().filter(|n| n.role == NodeRole::Standby) {
        let k = layout
            .clusters
            .iter()
            .enumerate()
            .min_by(|a, b| {
                let da = nodes[a.1.head.index()].pos.distance(&n.pos);
                let db = nodes[b.1.head.index()].pos.distance(&n.pos);
                da.total_cmp(&db).then(a.1.head.cmp(&b.1.head))
            })
            .map(|(k, _)| k)
            .unwrap_or(0);
        layout.clusters[k].standbys.push(n.id);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, spacing: f64) -> Vec<NodeState> {
        (0..n)
            .map(|i| NodeState::new(NodeId::from(i), Position::new(i as f64 * spacing, 0.0), 0.5))
            .collect()
    }

    #[test]
    fn deploy_is_deterministic_and_bounded() {
        let a = deploy(1000, 300.0, 300.0, 0.0, 0.5, 7).unwrap();
        let b = deploy(1000, 300.0, 300.0, 0.0, 0.5, 7).unwrap();
        let pa: Vec<_> = a.iter().map(|n| n.pos).collect();
        let pb: Vec<_> = b.iter().map(|n| n.pos).collect();
        assert_eq!(pa, pb);
        let c = deploy(1000, 300.0, 300.0, 0.1, 0.5, 7).unwrap();
        assert!(c
            .iter()
            .all(|n| (0.0..=300.0).contains(&n.pos.x) && (0.0..=300.0).contains(&n.pos.y)));
        assert_eq!(c.iter().filter(|n| n.role == NodeRole::Standby).count(), 100);
    }

    #[test]
    fn deploy_standby_floor() {
        for seed in 0..5 {
            let n = deploy(4, 300.0, 300.0, 0.5, 0.5, seed).unwrap();
            assert_eq!(n.iter().filter(|n| n.role == NodeRole::Standby).count(), 2);
        }
    }

    #[test]
    fn deploy_rejects_bad_input() {
        assert!(deploy(0, 300.0, 300.0, 0.0, 0.5, 1).is_err());
        assert!(deploy(10, 0.0, 300.0, 0.0, 0.5, 1).is_err());
        assert!(deploy(10, 300.0, 300.0, 1.0, 0.5, 1).is_err());
    }

    #[test]
    fn closed_range_threshold() {
        let nodes = line(2, 50.0);
        let g = build_graph(&nodes, 50.0).unwrap();
        assert!(g.are_adjacent(NodeId(0), NodeId(1)));
        let g = build_graph(&nodes, 49.999).unwrap();
        assert!(!g.are_adjacent(NodeId(0), NodeId(1)));
    }

    #[test]
    fn single_node_has_no_edges() {
        let g = build_graph(&line(1, 1.0), 10.0).unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn line_spacing_gives_path_graph() {
        let g = build_graph(&line(5, 20.0), 20.0).unwrap();
        assert_eq!(g.edge_count(), 4);
        for i in 0..4u32 {
            assert!(g.are_adjacent(NodeId(i), NodeId(i + 1)));
        }
        assert!(!g.are_adjacent(NodeId(0), NodeId(2)));
    }

    #[test]
    fn dead_and_standby_excluded() {
        let mut nodes = line(3, 10.0);
        nodes[1].role = NodeRole::Dead;
        nodes[2].role = NodeRole::Standby;
        let g = build_graph(&nodes, 100.0).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert!(!g.contains(NodeId(1)));
    }

    #[test]
    fn remove_and_insert_keep_symmetry() {
        let nodes = line(4, 10.0);
        let mut g = build_graph(&nodes, 15.0).unwrap();
        g.remove_node(NodeId(1));
        assert!(!g.are_adjacent(NodeId(0), NodeId(1)));
        assert!(g.neighbors(NodeId(0)).is_empty());
        g.insert_node(NodeId(1), true);
        assert!(g.are_adjacent(NodeId(0), NodeId(1)));
        assert!(g.are_adjacent(NodeId(2), NodeId(1)));
        for u in g.node_ids() {
            for (v, d) in g.neighbors(u) {
                assert!(g.neighbors(*v).iter().any(|(w, dd)| *w == u && dd == d));
            }
        }
    }

    #[test]
    fn equal_energy_heads_take_lowest_ids() {
        let nodes = line(10, 10.0);
        let g = build_graph(&nodes, 100.0).unwrap();
        let e = elect_heads(&g, &nodes, 2, 35.0).unwrap();
        assert_eq!(e.heads, vec![NodeId(0), NodeId(4)]);
        assert_eq!(e.relaxations, 0);
    }

    #[test]
    fn richest_node_is_head() {
        let mut nodes = line(10, 10.0);
        nodes[6].energy = 0.6;
        let g = build_graph(&nodes, 100.0).unwrap();
        let e = elect_heads(&g, &nodes, 1, 0.0).unwrap();
        assert_eq!(e.heads, vec![NodeId(6)]);
    }

    #[test]
    fn infeasible_separation_is_relaxed() {
        let nodes = line(4, 1.0);
        let g = build_graph(&nodes, 100.0).unwrap();
        let e = elect_heads(&g, &nodes, 3, 10.0).unwrap();
        assert_eq!(e.heads.len(), 3);
        assert!(e.relaxations > 0);
        assert!(e.separation <= 1.0);
    }

    #[test]
    fn election_deterministic() {
        let nodes = deploy(100, 300.0, 300.0, 0.0, 0.5, 7).unwrap();
        let g = build_graph(&nodes, 80.0).unwrap();
        let a = elect_heads(&g, &nodes, 5, 60.0).unwrap();
        let b = elect_heads(&g, &nodes, 5, 60.0).unwrap();
        assert_eq!(a, b);
        let la = form_clusters(&g, &a.heads, LoadBudget::Unbounded).unwrap();
        let lb = form_clusters(&g, &b.heads, LoadBudget::Unbounded).unwrap();
        assert_eq!(la, lb);
    }

    #[test]
    fn unbounded_budget_is_nearest_head() {
        let nodes = line(7, 10.0);
        let g = build_graph(&nodes, 10.0).unwrap();
        let layout = form_clusters(&g, &[NodeId(0), NodeId(6)], LoadBudget::Unbounded).unwrap();
        let c0 = layout.cluster_of(NodeId(0)).unwrap();
        assert_eq!(c0.members, vec![NodeId(1), NodeId(2), NodeId(3)]);
        let c6 = layout.cluster_of(NodeId(6)).unwrap();
        assert_eq!(c6.members, vec![NodeId(4), NodeId(5)]);
    }

    #[test]
    fn budget_splits_equidistant_members() {
        // Two heads, ten members all one hop from both heads.
        let mut positions = vec![Position::new(0.0, 0.0), Position::new(100.0, 0.0)];
        let mut edges = Vec::new();
        for i in 0..10u32 {
            positions.push(Position::new(50.0, i as f64));
            edges.push((0, i + 2));
            edges.push((1, i + 2));
        }
        let g = NetworkGraph::from_edges(positions, &edges);
        let layout = form_clusters(&g, &[NodeId(0), NodeId(1)], LoadBudget::Packets(6)).unwrap();
        let sizes: Vec<usize> = layout.clusters.iter().map(|c| c.members.len()).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 10);
        assert!(sizes.iter().all(|s| *s <= 5), "{sizes:?}");
        assert!(layout.over_budget.is_empty());

        let unbounded = form_clusters(&g, &[NodeId(0), NodeId(1)], LoadBudget::Unbounded).unwrap();
        assert_eq!(unbounded.clusters[0].members.len(), 10);
    }

    #[test]
    fn overflow_flagged_when_no_head_has_room() {
        let nodes = line(4, 10.0);
        let g = build_graph(&nodes, 100.0).unwrap();
        let layout = form_clusters(&g, &[NodeId(0)], LoadBudget::Packets(2)).unwrap();
        assert_eq!(layout.clusters[0].members.len(), 3);
        assert_eq!(layout.over_budget.len(), 2);
    }

    #[test]
    fn unreachable_node_is_unclustered() {
        let mut nodes = line(3, 10.0);
        nodes[2].pos = Position::new(500.0, 0.0);
        let g = build_graph(&nodes, 15.0).unwrap();
        let layout = form_clusters(&g, &[NodeId(0)], LoadBudget::Unbounded).unwrap();
        assert_eq!(layout.unclustered, vec![NodeId(2)]);
        assert!(form_clusters(&g, &[], LoadBudget::Unbounded).is_err());
    }

    #[test]
    fn members_connect_through_their_cluster() {
        let nodes = deploy(150, 300.0, 300.0, 0.0, 0.5, 3).unwrap();
        let g = build_graph(&nodes, 60.0).unwrap();
        let heads = elect_heads(&g, &nodes, 6, 80.0).unwrap().heads;
        let layout = form_clusters(&g, &heads, LoadBudget::Packets(30)).unwrap();
        for c in &layout.clusters {
            let mut keep = c.members.clone();
            keep.push(c.head);
            let sub = g.induced(&keep);
            let hops = sub.hop_distances(c.head);
            for m in &c.members {
                assert!(hops[m.index()].is_some(), "member {m} cut off from head {}", c.head);
            }
        }
        let assigned: usize = layout.clusters.iter().map(|c| c.members.len() + 1).sum();
        assert_eq!(assigned + layout.unclustered.len(), g.node_ids().count());
    }

    #[test]
    fn budget_derivation() {
        let p = EnergyParams::default();
        // 0.5 J over 100 rounds at 8e-5 J per packet.
        assert_eq!(
            derive_load_budget(0.5, 100, 0.0, 800, &p).unwrap(),
            LoadBudget::Packets(62)
        );
        assert_eq!(derive_load_budget(0.5, 0, 0.0, 800, &p).unwrap(), LoadBudget::Unbounded);
    }
}
