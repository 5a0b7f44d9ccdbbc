//! Energy-shortest routes, node-disjoint backup paths and failover selection.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};

use crate::energy::single_hop_energy;
use crate::error::{Error, Result};
use crate::model::{EnergyParams, NodeId};
use crate::topology::NetworkGraph;

/// Most paths a path set can hold: one primary and two backups.
pub const MAX_PATHS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PathStatus {
    Usable,
    /// Carrying a transmission this round.
    Busy,
    Faulty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub hops: Vec<NodeId>,
    /// Sum of per-link transmit+receive energy, joules.
    pub cost: f64,
    pub status: PathStatus,
}

impl Path {
    pub fn src(&self) -> NodeId {
        self.hops[0]
    }

    pub fn dst(&self) -> NodeId {
        *self.hops.last().expect("path has at least two hops")
    }

    pub fn interior(&self) -> &[NodeId] {
        &self.hops[1..self.hops.len() - 1]
    }

    pub fn hop_count(&self) -> usize {
        self.hops.len() - 1
    }
}

/// Per-link cost of a route: transmit plus receive energy for one packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkCost {
    pub packet_bits: f64,
    pub params: EnergyParams,
}

impl LinkCost {
    pub fn new(packet_bits: u64, params: EnergyParams) -> Self {
        Self {
            packet_bits: packet_bits as f64,
            params,
        }
    }

    pub fn of(&self, range: f64) -> f64 {
        single_hop_energy(range, self.packet_bits, &self.params).unwrap_or(f64::INFINITY)
    }
}

/// Sum of link costs along `hops`, accumulated from the source outwards.
pub fn path_cost(graph: &NetworkGraph, hops: &[NodeId], cost: &LinkCost) -> f64 {
    hops.windows(2)
        .fold(0.0, |acc, w| acc + cost.of(graph.distance(w[0], w[1])))
}

#[derive(Debug, Clone)]
struct Label {
    cost: f64,
    hops: Vec<NodeId>,
}

impl Label {
    fn rank(&self, other: &Label) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.hops.len().cmp(&other.hops.len()))
            .then_with(|| self.hops.cmp(&other.hops))
    }
}

impl PartialEq for Label {
    fn eq(&self, other: &Self) -> bool {
        self.rank(other) == Ordering::Equal
    }
}
impl Eq for Label {}
impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Label {
    // Reversed so the max-heap pops the cheapest label.
    fn cmp(&self, other: &Self) -> Ordering {
        other.rank(self)
    }
}

/// Minimum-energy route from `src` to `dst`.
///
/// Ties on energy go to fewer hops, then to the lexicographically smallest
/// hop sequence. Interior vertices must be relay-capable.
pub fn shortest_path(graph: &NetworkGraph, src: NodeId, dst: NodeId, cost: &LinkCost) -> Result<Path> {
    shortest_path_avoiding(graph, src, dst, cost, &[], &[])
}

fn shortest_path_avoiding(
    graph: &NetworkGraph,
    src: NodeId,
    dst: NodeId,
    cost: &LinkCost,
    banned_nodes: &[bool],
    banned_edges: &[(NodeId, NodeId)],
) -> Result<Path> {
    if src == dst {
        return Err(Error::InvalidInput(format!("route from {src} to itself")));
    }
    if !graph.contains(src) || !graph.contains(dst) {
        return Err(Error::NoRoute { src, dst });
    }
    let n = graph.vertex_count();
    let mut best: Vec<Option<Label>> = vec![None; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    let start = Label {
        cost: 0.0,
        hops: vec![src],
    };
    best[src.index()] = Some(start.clone());
    heap.push(start);

    while let Some(label) = heap.pop() {
        let u = *label.hops.last().expect("non-empty label");
        if settled[u.index()] {
            continue;
        }
        settled[u.index()] = true;
        if u == dst {
            return Ok(Path {
                hops: label.hops,
                cost: label.cost,
                status: PathStatus::Usable,
            });
        }
        if u != src && !graph.can_relay(u) {
            continue;
        }
        for &(v, d) in graph.neighbors(u) {
            if settled[v.index()] || (v != dst && banned_nodes.get(v.index()).copied().unwrap_or(false)) {
                continue;
            }
            if !banned_edges.is_empty() && banned_edges.contains(&edge_key(u, v)) {
                continue;
            }
            let c = label.cost + cost.of(d);
            if best[v.index()].as_ref().is_some_and(|b| c > b.cost) {
                continue;
            }
            let mut hops = Vec::with_capacity(label.hops.len() + 1);
            hops.extend_from_slice(&label.hops);
            hops.push(v);
            let next = Label { cost: c, hops };
            let better = match &best[v.index()] {
                Some(b) => next.rank(b) == Ordering::Less,
                None => true,
            };
            if better {
                best[v.index()] = Some(next.clone());
                heap.push(next);
            }
        }
    }
    Err(Error::NoRoute { src, dst })
}

fn edge_key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// A primary route plus up to two node-disjoint backups, cheapest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub primary: Path,
    pub backup1: Option<Path>,
    pub backup2: Option<Path>,
}

impl PathSet {
    pub fn from_paths(mut paths: Vec<Path>) -> Result<Self> {
        if paths.is_empty() || paths.len() > MAX_PATHS {
            return Err(Error::InvalidInput(format!(
                "a path set holds 1..={MAX_PATHS} paths, got {}",
                paths.len()
            )));
        }
        let mut rest = paths.split_off(1).into_iter();
        Ok(Self {
            primary: paths.pop().expect("one path"),
            backup1: rest.next(),
            backup2: rest.next(),
        })
    }

    pub fn len(&self) -> usize {
        1 + self.backup1.is_some() as usize + self.backup2.is_some() as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, i: usize) -> Option<&Path> {
        match i {
            0 => Some(&self.primary),
            1 => self.backup1.as_ref(),
            2 => self.backup2.as_ref(),
            _ => None,
        }
    }

    pub fn get_mut(&mut self, i: usize) -> Option<&mut Path> {
        match i {
            0 => Some(&mut self.primary),
            1 => self.backup1.as_mut(),
            2 => self.backup2.as_mut(),
            _ => None,
        }
    }

    /// Paths in failover order.
    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        std::iter::once(&self.primary)
            .chain(self.backup1.as_ref())
            .chain(self.backup2.as_ref())
    }

    /// Keeps only the first `k` paths.
    pub fn truncate(&mut self, k: usize) {
        if k < 3 {
            self.backup2 = None;
        }
        if k < 2 {
            self.backup1 = None;
        }
    }

    /// Whether `id` lies on any path of the set, endpoints included.
    pub fn touches(&self, id: NodeId) -> bool {
        self.paths().any(|p| p.hops.contains(&id))
    }

    pub fn all_faulty(&self) -> bool {
        self.paths().all(|p| p.status == PathStatus::Faulty)
    }

    /// Returns every Busy path to Usable; called at the start of a round.
    pub fn clear_busy(&mut self) {
        for i in 0..MAX_PATHS {
            if let Some(p) = self.get_mut(i) {
                if p.status == PathStatus::Busy {
                    p.status = PathStatus::Usable;
                }
            }
        }
    }

    /// Checks structure against `graph`: simple paths over existing edges,
    /// shared endpoints, pairwise disjoint interiors and ascending cost.
    pub fn validate(&self, graph: &NetworkGraph) -> Result<()> {
        let src = self.primary.src();
        let dst = self.primary.dst();
        let mut seen_interior: HashSet<NodeId> = HashSet::new();
        let mut prev_cost = f64::NEG_INFINITY;
        let mut direct_edges = 0;
        for p in self.paths() {
            if p.hops.len() < 2 || p.src() != src || p.dst() != dst {
                return Err(Error::InvalidInput(format!("path {:?} has wrong endpoints", p.hops)));
            }
            let unique: HashSet<_> = p.hops.iter().collect();
            if unique.len() != p.hops.len() {
                return Err(Error::InvalidInput(format!("path {:?} repeats a node", p.hops)));
            }
            if p.hops.windows(2).any(|w| !graph.are_adjacent(w[0], w[1])) {
                return Err(Error::InvalidInput(format!("path {:?} uses a missing edge", p.hops)));
            }
            if p.interior().is_empty() {
                direct_edges += 1;
            }
            for id in p.interior() {
                if !seen_interior.insert(*id) {
                    return Err(Error::InvalidInput(format!("interior node {id} shared between paths")));
                }
            }
            if p.cost < 0.0 || p.cost < prev_cost {
                return Err(Error::InvalidInput("path costs not ascending".into()));
            }
            prev_cost = p.cost;
        }
        if direct_edges > 1 {
            return Err(Error::InvalidInput("direct edge used twice".into()));
        }
        Ok(())
    }
}

/// Up to `k` internally node-disjoint routes found by repeated shortest-path
/// search, removing each route's interior (or its direct edge) before the
/// next search. Greedy removal can return fewer paths than a max-flow search
/// would on some topologies.
pub fn build_path_set(graph: &NetworkGraph, src: NodeId, dst: NodeId, k: usize, cost: &LinkCost) -> Result<PathSet> {
    let k = k.clamp(1, MAX_PATHS);
    let mut banned_nodes = vec![false; graph.vertex_count()];
    let mut banned_edges = Vec::new();
    let mut paths = Vec::with_capacity(k);
    while paths.len() < k {
        match shortest_path_avoiding(graph, src, dst, cost, &banned_nodes, &banned_edges) {
            Ok(p) => {
                if p.interior().is_empty() {
                    banned_edges.push(edge_key(src, dst));
                }
                for id in p.interior() {
                    banned_nodes[id.index()] = true;
                }
                paths.push(p);
            }
            Err(Error::NoRoute { .. }) if !paths.is_empty() => break,
            Err(e) => return Err(e),
        }
    }
    paths.sort_by(|a, b| a.cost.total_cmp(&b.cost));
    PathSet::from_paths(paths)
}

/// First path in failover order whose status is Usable.
pub fn select_path(ps: &PathSet) -> Result<(usize, &Path)> {
    ps.paths()
        .enumerate()
        .find(|(_, p)| p.status == PathStatus::Usable)
        .ok_or(Error::AllPathsDown)
}

/// A relay forwards received data only if it differs from its own reading by
/// more than `epsilon`.
pub fn should_forward(received_reading: f64, own_reading: f64, epsilon: f64) -> bool {
    (received_reading - own_reading).abs() > epsilon
}
