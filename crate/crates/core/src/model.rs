//! Core domain types: simulated time, topology, flows and packets.

use std::collections::VecDeque;
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

use crate::hash::mix64;

pub type NodeId = u32;
pub type LinkId = u32;
pub type DcId = u32;

/// Simulated time in integer nanoseconds since the start of a run.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_ns(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_us(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_ms(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn as_ns(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-9
    }

    /// Whole milliseconds, rounded up.
    pub fn ceil_ms(self) -> u64 {
        self.0.div_ceil(1_000_000)
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        *self = *self + rhs;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// Time needed to put `bytes` on a wire running at `rate_bps`, rounded up to whole ns.
pub fn serialization_time(bytes: u64, rate_bps: u64) -> SimTime {
    debug_assert!(rate_bps > 0);
    let ns = (bytes as u128 * 8 * 1_000_000_000).div_ceil(rate_bps as u128);
    SimTime(ns as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Host,
    Leaf,
    Spine,
    Dci,
}

impl NodeRole {
    pub fn is_switch(self) -> bool {
        !matches!(self, NodeRole::Host)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub role: NodeRole,
    pub dc: DcId,
}

/// A directed link. The egress buffer lives at `src`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Link {
    pub id: LinkId,
    pub src: NodeId,
    pub dst: NodeId,
    pub capacity_bps: u64,
    pub propagation_delay: SimTime,
    pub buffer_bytes: u64,
}

/// Hosts, switches and directed links, grouped into datacenters.
///
/// Node and link ids are dense: `nodes[i].id == i` and `links[i].id == i`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Topology {
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    pub dc_names: Vec<String>,
}

impl Topology {
    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id as usize]
    }

    pub fn dc_of(&self, id: NodeId) -> DcId {
        self.nodes[id as usize].dc
    }

    pub fn dc_count(&self) -> usize {
        self.dc_names.len()
    }

    /// Outgoing links of `node` in ascending link-id order. The position in this list is the
    /// node's port index.
    pub fn ports_of(&self, node: NodeId) -> Vec<LinkId> {
        self.links
            .iter()
            .filter(|l| l.src == node)
            .map(|l| l.id)
            .collect()
    }

    /// Per-node outgoing adjacency, indexed by node id.
    pub fn adjacency(&self) -> Vec<Vec<LinkId>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for l in &self.links {
            if let Some(v) = adj.get_mut(l.src as usize) {
                v.push(l.id);
            }
        }
        adj
    }

    pub fn hosts_in(&self, dc: DcId) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.dc == dc && n.role == NodeRole::Host)
            .map(|n| n.id)
            .collect()
    }

    pub fn dcis_in(&self, dc: DcId) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.dc == dc && n.role == NodeRole::Dci)
            .map(|n| n.id)
            .collect()
    }

    pub fn is_inter_dc(&self, link: &Link) -> bool {
        self.dc_of(link.src) != self.dc_of(link.dst)
    }

    /// Largest capacity among links that cross a datacenter boundary.
    pub fn max_inter_dc_capacity(&self) -> Option<u64> {
        self.links
            .iter()
            .filter(|l| self.is_inter_dc(l))
            .map(|l| l.capacity_bps)
            .max()
    }

    pub fn find_link(&self, src: NodeId, dst: NodeId) -> Option<LinkId> {
        self.links
            .iter()
            .find(|l| l.src == src && l.dst == dst)
            .map(|l| l.id)
    }
}

/// Incremental construction helper used by presets and tests.
#[derive(Debug, Default)]
pub struct TopologyBuilder {
    topo: Topology,
}

impl TopologyBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dc(&mut self, name: impl Into<String>) -> DcId {
        self.topo.dc_names.push(name.into());
        (self.topo.dc_names.len() - 1) as DcId
    }

    pub fn node(&mut self, role: NodeRole, dc: DcId) -> NodeId {
        let id = self.topo.nodes.len() as NodeId;
        self.topo.nodes.push(Node { id, role, dc });
        id
    }

    pub fn link(
        &mut self,
        src: NodeId,
        dst: NodeId,
        capacity_bps: u64,
        propagation_delay: SimTime,
        buffer_bytes: u64,
    ) -> LinkId {
        let id = self.topo.links.len() as LinkId;
        self.topo.links.push(Link {
            id,
            src,
            dst,
            capacity_bps,
            propagation_delay,
            buffer_bytes,
        });
        id
    }

    /// Adds `a -> b` and `b -> a` with identical parameters; returns `(a->b, b->a)`.
    pub fn duplex(
        &mut self,
        a: NodeId,
        b: NodeId,
        capacity_bps: u64,
        propagation_delay: SimTime,
        buffer_bytes: u64,
    ) -> (LinkId, LinkId) {
        (
            self.link(a, b, capacity_bps, propagation_delay, buffer_bytes),
            self.link(b, a, capacity_bps, propagation_delay, buffer_bytes),
        )
    }

    pub fn build(self) -> Topology {
        self.topo
    }
}

/// A broken topology invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NodeIdOutOfOrder { index: usize, id: NodeId },
    UnknownDc { node: NodeId, dc: DcId },
    LinkIdOutOfOrder { index: usize, id: LinkId },
    DanglingEndpoint { link: LinkId, node: NodeId },
    SelfLoop { link: LinkId },
    ZeroCapacity { link: LinkId },
    ZeroBuffer { link: LinkId },
    HostsDisconnected { from: NodeId, to: NodeId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NodeIdOutOfOrder { index, id } => {
                write!(f, "node at position {index} has id {id}")
            }
            Violation::UnknownDc { node, dc } => write!(f, "node {node} references unknown dc {dc}"),
            Violation::LinkIdOutOfOrder { index, id } => {
                write!(f, "link at position {index} has id {id}")
            }
            Violation::DanglingEndpoint { link, node } => {
                write!(f, "link {link} references missing node {node}")
            }
            Violation::SelfLoop { link } => write!(f, "link {link} is a self loop"),
            Violation::ZeroCapacity { link } => write!(f, "link {link} has zero capacity"),
            Violation::ZeroBuffer { link } => write!(f, "link {link} has zero buffer"),
            Violation::HostsDisconnected { from, to } => {
                write!(f, "host {to} is not reachable from host {from}")
            }
        }
    }
}

/// Checks every topology invariant and returns one entry per offending element.
pub fn validate_topology(topology: &Topology) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = topology.nodes.len();
    for (index, node) in topology.nodes.iter().enumerate() {
        if node.id as usize != index {
            out.push(Violation::NodeIdOutOfOrder { index, id: node.id });
        }
        if node.dc as usize >= topology.dc_names.len() {
            out.push(Violation::UnknownDc {
                node: node.id,
                dc: node.dc,
            });
        }
    }
    let mut endpoints_ok = true;
    for (index, link) in topology.links.iter().enumerate() {
        if link.id as usize != index {
            out.push(Violation::LinkIdOutOfOrder { index, id: link.id });
        }
        for end in [link.src, link.dst] {
            if end as usize >= n {
                endpoints_ok = false;
                out.push(Violation::DanglingEndpoint {
                    link: link.id,
                    node: end,
                });
            }
        }
        if link.src == link.dst {
            out.push(Violation::SelfLoop { link: link.id });
        }
        if link.capacity_bps == 0 {
            out.push(Violation::ZeroCapacity { link: link.id });
        }
        if link.buffer_bytes == 0 {
            out.push(Violation::ZeroBuffer { link: link.id });
        }
    }
    if endpoints_ok {
        out.extend(host_connectivity(topology));
    }
    out
}

// Mutual reachability of all hosts, checked through the first host in both directions.
fn host_connectivity(topology: &Topology) -> Vec<Violation> {
    let hosts: Vec<NodeId> = topology
        .nodes
        .iter()
        .filter(|x| x.role == NodeRole::Host)
        .map(|x| x.id)
        .collect();
    let Some(&root) = hosts.first() else {
        return Vec::new();
    };
    let n = topology.nodes.len();
    let reach = |forward: bool| {
        let mut adj = vec![Vec::new(); n];
        for l in &topology.links {
            let (a, b) = if forward { (l.src, l.dst) } else { (l.dst, l.src) };
            adj[a as usize].push(b);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([root]);
        seen[root as usize] = true;
        while let Some(u) = queue.pop_front() {
            // hosts are endpoints, never transit
            if u != root && topology.nodes[u as usize].role == NodeRole::Host {
                continue;
            }
            for &v in &adj[u as usize] {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    };
    let fwd = reach(true);
    let bwd = reach(false);
    let mut out = Vec::new();
    for &h in &hosts[1..] {
        if !fwd[h as usize] {
            out.push(Violation::HostsDisconnected { from: root, to: h });
        } else if !bwd[h as usize] {
            out.push(Violation::HostsDisconnected { from: h, to: root });
        }
    }
    out
}

/// Transport-level identity of a flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FiveTuple {
    pub src_host: NodeId,
    pub dst_host: NodeId,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: u8,
}

impl FiveTuple {
    /// 64-bit flow key used by flow caches and hash-based selection.
    pub fn key(&self) -> u64 {
        let a = ((self.src_host as u64) << 32) | self.dst_host as u64;
        let b = ((self.src_port as u64) << 24) | ((self.dst_port as u64) << 8) | self.protocol as u64;
        mix64(mix64(a) ^ b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flow {
    pub id: u64,
    pub five_tuple: FiveTuple,
    pub size: u64,
    pub arrival: SimTime,
}

impl Flow {
    pub fn src(&self) -> NodeId {
        self.five_tuple.src_host
    }

    pub fn dst(&self) -> NodeId {
        self.five_tuple.dst_host
    }

    pub fn key(&self) -> u64 {
        self.five_tuple.key()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PacketFlags {
    pub data: bool,
    pub ack: bool,
    pub ecn_marked: bool,
    pub cnp: bool,
}

/// A data-plane packet. `flow` indexes the run's flow table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub flow: u32,
    pub seq: u32,
    pub payload: u32,
    pub flags: PacketFlags,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_dc() -> Topology {
        let mut b = TopologyBuilder::new();
        let d0 = b.dc("a");
        let d1 = b.dc("b");
        let h0 = b.node(NodeRole::Host, d0);
        let s0 = b.node(NodeRole::Dci, d0);
        let s1 = b.node(NodeRole::Dci, d1);
        let h1 = b.node(NodeRole::Host, d1);
        b.duplex(h0, s0, 10_000_000_000, SimTime::from_us(1), 1 << 20);
        b.duplex(s0, s1, 10_000_000_000, SimTime::from_ms(5), 1 << 20);
        b.duplex(s1, h1, 10_000_000_000, SimTime::from_us(1), 1 << 20);
        b.build()
    }

    #[test]
    fn valid_topology_has_no_violations() {
        assert!(validate_topology(&two_dc()).is_empty());
    }

    #[test]
    fn zero_capacity_is_reported() {
        let mut t = two_dc();
        t.links[2].capacity_bps = 0;
        assert_eq!(validate_topology(&t), vec![Violation::ZeroCapacity { link: 2 }]);
    }

    #[test]
    fn dangling_endpoint_is_reported() {
        let mut t = two_dc();
        t.links.push(Link {
            id: 6,
            src: 1,
            dst: 42,
            capacity_bps: 1,
            propagation_delay: SimTime::ZERO,
            buffer_bytes: 1,
        });
        let v = validate_topology(&t);
        assert_eq!(v, vec![Violation::DanglingEndpoint { link: 6, node: 42 }]);
        assert!(v[0].to_string().contains("42"));
    }

    #[test]
    fn one_way_cut_is_reported() {
        let mut t = two_dc();
        // drop s1 -> s0
        t.links.remove(3);
        for (i, l) in t.links.iter_mut().enumerate() {
            l.id = i as LinkId;
        }
        let v = validate_topology(&t);
        assert_eq!(v, vec![Violation::HostsDisconnected { from: 3, to: 0 }]);
    }

    #[test]
    fn serialization_rounds_up() {
        assert_eq!(serialization_time(1000, 8_000_000_000), SimTime(1000));
        assert_eq!(serialization_time(1, 3_000_000_000), SimTime(3));
    }

    #[test]
    fn ceil_ms() {
        assert_eq!(SimTime::from_us(5_000).ceil_ms(), 5);
        assert_eq!(SimTime::from_us(5_001).ceil_ms(), 6);
        assert_eq!(SimTime::ZERO.ceil_ms(), 0);
    }
}
