use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::NetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeRole {
    Edge,
    Central,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    pub role: NodeRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    pub base_latency_ms: f64,
    pub bandwidth_mbps: f64,
    #[serde(default = "yes")]
    pub up: bool,
}

fn yes() -> bool {
    true
}

impl LinkSpec {
    pub fn new(a: &str, b: &str, base_latency_ms: f64, bandwidth_mbps: f64) -> Self {
        LinkSpec { a: a.into(), b: b.into(), base_latency_ms, bandwidth_mbps, up: true }
    }

    pub fn latency_us(&self) -> u64 {
        (self.base_latency_ms * 1000.0).round().max(0.0) as u64
    }

    pub fn bandwidth_bps(&self) -> f64 {
        self.bandwidth_mbps * 1e6
    }

    pub fn connects(&self, x: &str, y: &str) -> bool {
        (self.a == x && self.b == y) || (self.a == y && self.b == x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub name: String,
    /// Lower rank is served first.
    pub priority: u32,
    pub guaranteed_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
    pub slices: Vec<SliceSpec>,
}

pub const MISSION_CRITICAL: &str = "mission-critical";
pub const TELEMETRY: &str = "telemetry";
pub const BEST_EFFORT: &str = "best-effort";

impl Default for Topology {
    fn default() -> Self {
        Topology::default_5g(3)
    }
}

impl Topology {
    /// `edges` edge nodes fully meshed at 5 ms, each linked to `central` at
    /// 10 ms, all links 100 Mb/s.
    pub fn default_5g(edges: usize) -> Self {
        let mut nodes = vec![NodeSpec { id: "central".into(), role: NodeRole::Central }];
        let names: Vec<String> = (1..=edges).map(|i| format!("edge-{i}")).collect();
        nodes.extend(names.iter().map(|n| NodeSpec { id: n.clone(), role: NodeRole::Edge }));
        let mut links: Vec<LinkSpec> = names.iter().map(|n| LinkSpec::new("central", n, 10.0, 100.0)).collect();
        for i in 0..names.len() {
            for j in i + 1..names.len() {
                links.push(LinkSpec::new(&names[i], &names[j], 5.0, 100.0));
            }
        }
        Topology {
            nodes,
            links,
            slices: vec![
                SliceSpec { name: MISSION_CRITICAL.into(), priority: 0, guaranteed_fraction: 0.3 },
                SliceSpec { name: TELEMETRY.into(), priority: 1, guaranteed_fraction: 0.2 },
                SliceSpec { name: BEST_EFFORT.into(), priority: 2, guaranteed_fraction: 0.0 },
            ],
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        for (i, n) in self.nodes.iter().enumerate() {
            if self.nodes[..i].iter().any(|m| m.id == n.id) {
                return Err(NetError::InvalidTopology(format!("duplicate node id {}", n.id)));
            }
        }
        for l in &self.links {
            for end in [&l.a, &l.b] {
                if self.node_index(end).is_none() {
                    return Err(NetError::InvalidTopology(format!("link endpoint {end} is not a node")));
                }
            }
            if l.a == l.b {
                return Err(NetError::InvalidTopology(format!("self loop on {}", l.a)));
            }
            if !(l.base_latency_ms >= 0.0 && l.bandwidth_mbps > 0.0) {
                return Err(NetError::InvalidTopology(format!("link {}-{} has invalid latency/bandwidth", l.a, l.b)));
            }
        }
        let total: f64 = self.slices.iter().map(|s| s.guaranteed_fraction).sum();
        if self.slices.iter().any(|s| !(0.0..=1.0).contains(&s.guaranteed_fraction)) || total > 1.0 + 1e-12 {
            return Err(NetError::InvalidTopology("slice guarantees must lie in [0,1] and sum to at most 1".into()));
        }
        Ok(())
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn link_index(&self, a: &str, b: &str) -> Option<usize> {
        self.links.iter().position(|l| l.connects(a, b))
    }

    pub fn slice_index(&self, name: &str) -> Option<usize> {
        self.slices.iter().position(|s| s.name == name)
    }

    pub fn central_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().enumerate().filter(|(_, n)| n.role == NodeRole::Central).map(|(i, _)| i)
    }

    pub fn edge_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().enumerate().filter(|(_, n)| n.role == NodeRole::Edge).map(|(i, _)| i)
    }

    /// Other endpoint of link `l` seen from node `from`.
    pub(crate) fn other_end(&self, l: usize, from: usize) -> usize {
        let link = &self.links[l];
        let a = self.node_index(&link.a).unwrap();
        if a == from {
            self.node_index(&link.b).unwrap()
        } else {
            a
        }
    }
}

/// A computed path. `nodes` includes both endpoints; `links` is empty when
/// source and destination coincide.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub nodes: Vec<String>,
    pub links: Vec<usize>,
    pub latency_us: u64,
}

impl Route {
    pub fn latency_ms(&self) -> f64 {
        self.latency_us as f64 / 1000.0
    }
}

#[derive(PartialEq, Eq)]
struct Label {
    latency: u64,
    path: Vec<String>,
    links: Vec<usize>,
    node: usize,
}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed for a min-heap
        other.latency.cmp(&self.latency).then_with(|| other.path.cmp(&self.path))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimum-latency route over links `usable` reports as up. Among equal
/// latency paths the lexicographically smallest node-id sequence wins.
pub fn route_with<F: Fn(usize) -> bool>(topo: &Topology, src: &str, dst: &str, usable: F) -> Result<Route, NetError> {
    let s = topo.node_index(src).ok_or_else(|| NetError::UnknownNode(src.into()))?;
    let d = topo.node_index(dst).ok_or_else(|| NetError::UnknownNode(dst.into()))?;
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); topo.nodes.len()];
    for (i, l) in topo.links.iter().enumerate() {
        if l.up && usable(i) {
            adjacency[topo.node_index(&l.a).unwrap()].push(i);
            adjacency[topo.node_index(&l.b).unwrap()].push(i);
        }
    }
    let mut settled = vec![false; topo.nodes.len()];
    let mut heap = BinaryHeap::new();
    heap.push(Label { latency: 0, path: vec![src.to_string()], links: vec![], node: s });
    while let Some(label) = heap.pop() {
        if settled[label.node] {
            continue;
        }
        settled[label.node] = true;
        if label.node == d {
            return Ok(Route { nodes: label.path, links: label.links, latency_us: label.latency });
        }
        for &l in &adjacency[label.node] {
            let next = topo.other_end(l, label.node);
            if settled[next] {
                continue;
            }
            let mut path = label.path.clone();
            path.push(topo.nodes[next].id.clone());
            let mut links = label.links.clone();
            links.push(l);
            heap.push(Label { latency: label.latency + topo.links[l].latency_us(), path, links, node: next });
        }
    }
    Err(NetError::Unroutable { src: src.into(), dst: dst.into() })
}

/// Route over the links currently marked up in the topology itself.
pub fn route(topo: &Topology, src: &str, dst: &str) -> Result<Route, NetError> {
    route_with(topo, src, dst, |_| true)
}
