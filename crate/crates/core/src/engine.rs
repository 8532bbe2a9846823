//! Packet-level discrete-event simulator.
//!
//! Store-and-forward FIFO ports, explicit leaf/spine fabrics with hash-ECMP inside each DC,
//! DCI switches running the configured inter-DC policy, a rate-based transport with ECN/CNP,
//! and link failure injection. Runs are single-threaded and bit-reproducible: events with
//! equal time fire in insertion order.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control_plane::{provision_switch, ControlPlaneError, ProvisionConfig};
use crate::data_plane::{CostedCandidate, DecisionKind, PortView, SwitchConfig, SwitchState, SwitchStats};
use crate::hash::hash_index;
use crate::model::{
    serialization_time, validate_topology, DcId, Flow, LinkId, NodeId, NodeRole, Packet, PacketFlags, SimTime,
    Topology, Violation,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid topology: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidTopology(Vec<Violation>),
    #[error(transparent)]
    Provision(#[from] ControlPlaneError),
    #[error("unknown link {0}")]
    UnknownLink(LinkId),
    #[error("flow {flow}: endpoint {node} is not a host")]
    NotAHost { flow: u64, node: NodeId },
    #[error("link failure at {at} recovers at {recover}, which is not later")]
    BadFailureWindow { at: SimTime, recover: SimTime },
    #[error("invalid config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkFailure {
    pub link: LinkId,
    pub at: SimTime,
    pub recover: Option<SimTime>,
}

/// Rate-based stand-in for DCQCN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransportConfig {
    pub rate_interval: SimTime,
    pub additive_step_permille: u32,
    pub min_rate_permille: u32,
    /// ECN marks when the backlog exceeds `buffer >> ecn_shift`.
    pub ecn_shift: u32,
    pub cnp_bytes: u32,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            rate_interval: SimTime::from_us(50),
            additive_step_permille: 50,
            min_rate_permille: 10,
            ecn_shift: 3,
            cnp_bytes: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Payload bytes per data packet.
    pub mtu: u32,
    pub switch: SwitchConfig,
    pub provision: ProvisionConfig,
    pub transport: TransportConfig,
    pub idle_timeout: SimTime,
    pub failures: Vec<LinkFailure>,
    /// Events after this are not processed; unfinished flows are flagged.
    pub horizon: Option<SimTime>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            mtu: 1000,
            switch: SwitchConfig::default(),
            provision: ProvisionConfig::default(),
            transport: TransportConfig::default(),
            idle_timeout: SimTime::from_ms(100),
            failures: Vec::new(),
            horizon: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransportState {
    pub current_rate: u64,
    pub line_rate: u64,
    pub min_rate: u64,
    pub bytes_remaining: u64,
    pub next_send: SimTime,
    pub cnp_seen_this_interval: bool,
}

impl TransportState {
    pub fn new(line_rate: u64, size: u64, start: SimTime, cfg: &TransportConfig) -> Self {
        TransportState {
            current_rate: line_rate,
            line_rate,
            min_rate: (line_rate * cfg.min_rate_permille as u64 / 1000).max(1),
            bytes_remaining: size,
            next_send: start,
            cnp_seen_this_interval: false,
        }
    }
}

/// Halve the rate, floored at the minimum rate.
pub fn transport_on_cnp(s: &TransportState) -> TransportState {
    TransportState {
        current_rate: (s.current_rate / 2).max(s.min_rate),
        cnp_seen_this_interval: true,
        ..*s
    }
}

/// End of a rate-update interval: additive increase if no CNP arrived during it.
pub fn transport_on_interval(s: &TransportState, step: u64) -> TransportState {
    let current_rate = if s.cnp_seen_this_interval {
        s.current_rate
    } else {
        (s.current_rate + step).min(s.line_rate)
    };
    TransportState {
        current_rate,
        cnp_seen_this_interval: false,
        ..*s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowStatus {
    Finished,
    /// Still in progress at the horizon.
    Unfinished,
    /// Lost a packet to a buffer overflow.
    Dropped,
    /// No live route.
    Failed,
}

impl FlowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowStatus::Finished => "finished",
            FlowStatus::Unfinished => "unfinished",
            FlowStatus::Dropped => "dropped",
            FlowStatus::Failed => "failed",
        }
    }
}

/// Consecutive packets of one flow leaving a DCI switch on one port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EgressUse {
    pub switch: NodeId,
    pub port: u32,
    pub link: LinkId,
    pub first_seq: u32,
    pub packets: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub id: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub size: u64,
    pub arrival: SimTime,
    pub completion: Option<SimTime>,
    pub status: FlowStatus,
    pub bytes_received: u64,
    pub inter_dc_egress: Vec<EgressUse>,
    pub failovers: u32,
}

impl FlowRecord {
    pub fn fct(&self) -> Option<SimTime> {
        self.completion.map(|c| c - self.arrival)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub link: LinkId,
    pub bytes: u64,
    pub busy_ns: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub events: u64,
    pub data_packets: u64,
    pub drops: u64,
    pub routing_errors: u64,
    pub failovers: u64,
    pub cache_evictions: u64,
    pub gc_evictions: u64,
    pub new_flow_decisions: u64,
    pub cache_hits: u64,
    pub ecn_marks: u64,
    pub cnps: u64,
    pub stickiness_violations: u64,
    pub reorder_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time: SimTime,
    pub switch: NodeId,
    pub flow_id: u64,
    pub kind: DecisionKind,
    pub candidates: Vec<CostedCandidate>,
    pub retained: usize,
    pub chosen_port: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimResult {
    pub flows: Vec<FlowRecord>,
    pub links: Vec<LinkRecord>,
    pub counters: Counters,
    pub switch_stats: Vec<(NodeId, SwitchStats)>,
    pub trace: Vec<TraceRecord>,
    pub lossless_violated: bool,
    pub end_time: SimTime,
}

impl SimResult {
    pub fn flows_csv(&self) -> String {
        let mut s = String::from("flow_id,src,dst,size_bytes,arrival_ns,completion_ns,status\n");
        for f in &self.flows {
            let c = f.completion.map(|c| c.as_ns().to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                f.id,
                f.src,
                f.dst,
                f.size,
                f.arrival.as_ns(),
                c,
                f.status.as_str()
            );
        }
        s
    }

    pub fn links_csv(&self) -> String {
        let mut s = String::from("link_id,bytes,busy_ns\n");
        for l in &self.links {
            let _ = writeln!(s, "{},{},{}", l.link, l.bytes, l.busy_ns);
        }
        s
    }

    pub fn trace_csv(&self) -> String {
        let mut s = String::from("time_ns,switch,flow_id,decision_kind,retained,chosen_port,candidates\n");
        for t in &self.trace {
            let cands: Vec<String> = t
                .candidates
                .iter()
                .map(|c| format!("{}:{}:{}:{}", c.egress_port, c.c_path.get(), c.c_cong.get(), c.fused))
                .collect();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                t.time.as_ns(),
                t.switch,
                t.flow_id,
                t.kind.as_str(),
                t.retained,
                t.chosen_port,
                cands.join(";")
            );
        }
        s
    }

    pub fn finished(&self) -> impl Iterator<Item = &FlowRecord> {
        self.flows.iter().filter(|f| f.status == FlowStatus::Finished)
    }
}

// --- internals ---------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct RouteRef {
    switch: u16,
    dst_dc: u16,
    candidate: u16,
    hop: u16,
}

#[derive(Debug, Clone, Copy)]
struct Pkt {
    pkt: Packet,
    route: Option<RouteRef>,
    /// Propagation delay accumulated so far; the CNP return delay.
    prop: SimTime,
}

#[derive(Debug, Clone, Copy)]
enum Ev {
    Send(u32),
    RateTimer(u32),
    Cnp(u32),
    Arrive(NodeId, Pkt),
    TxDone(LinkId),
    Monitor,
    Gc,
    LinkFail(LinkId),
    LinkRecover(LinkId),
}

struct Scheduled {
    time: SimTime,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Scheduled {
    fn eq(&self, o: &Self) -> bool {
        (self.time, self.seq) == (o.time, o.seq)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Scheduled {
    // min-heap on (time, seq)
    fn cmp(&self, o: &Self) -> Ordering {
        (o.time, o.seq).cmp(&(self.time, self.seq))
    }
}

struct PortQueue {
    queue: VecDeque<Pkt>,
    /// Includes the packet being serialized.
    backlog_bytes: u64,
    capacity_bytes: u64,
    /// Host NIC queues model sender-side backpressure and never drop.
    bounded: bool,
    busy: bool,
    alive: bool,
    bytes: u64,
    busy_ns: u64,
}

struct Ports<'a>(&'a [PortQueue]);

impl PortView for Ports<'_> {
    fn queue_bytes(&self, link: LinkId) -> u64 {
        self.0[link as usize].backlog_bytes
    }
    fn link_alive(&self, link: LinkId) -> bool {
        self.0[link as usize].alive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Active,
    Done,
}

struct FlowState {
    tp: TransportState,
    key: u64,
    src: NodeId,
    dst: NodeId,
    dst_dc: DcId,
    next_seq: u32,
    recv_bytes: u64,
    expected_seq: u32,
    last_cnp: Option<SimTime>,
    timer_armed: bool,
    phase: Phase,
    status: FlowStatus,
    completion: Option<SimTime>,
    egress: Vec<EgressUse>,
    failovers: u32,
}

/// Hop distances toward one target, restricted to the target's DC.
struct DistTable(Vec<u32>);

const UNREACHABLE: u32 = u32::MAX;

pub struct Simulator {
    topo: Arc<Topology>,
    cfg: SimConfig,
    flows: Vec<Flow>,
    states: Vec<FlowState>,
    ports: Vec<PortQueue>,
    switches: Vec<SwitchState>,
    switch_of_node: Vec<Option<u16>>,
    /// Per node, outgoing links in id order.
    out_links: Vec<Vec<LinkId>>,
    to_host: HashMap<NodeId, DistTable>,
    to_exit: Vec<DistTable>,
    heap: BinaryHeap<Scheduled>,
    seq: u64,
    now: SimTime,
    active: usize,
    counters: Counters,
    sticky: HashMap<(u32, NodeId), LinkId>,
    trace: Vec<TraceRecord>,
    lossless_violated: bool,
}

impl Simulator {
    pub fn new(topology: Arc<Topology>, mut flows: Vec<Flow>, mut config: SimConfig) -> Result<Self, EngineError> {
        let violations = validate_topology(&topology);
        if !violations.is_empty() {
            return Err(EngineError::InvalidTopology(violations));
        }
        if config.mtu == 0 {
            return Err(EngineError::Config("mtu must be positive".into()));
        }
        if config.idle_timeout == SimTime::ZERO {
            return Err(EngineError::Config("idle timeout must be positive".into()));
        }
        if config.provision.sample_interval == SimTime::ZERO || config.transport.rate_interval == SimTime::ZERO {
            return Err(EngineError::Config("sampling and rate intervals must be positive".into()));
        }
        config.switch.congestion.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        if config.switch.congestion.high_water_level >= config.provision.n_queue_levels {
            return Err(EngineError::Config("high-water level beyond the queue levels".into()));
        }
        config.switch.sample_interval = config.provision.sample_interval;
        for f in &config.failures {
            if f.link as usize >= topology.links.len() {
                return Err(EngineError::UnknownLink(f.link));
            }
            if let Some(r) = f.recover {
                if r <= f.at {
                    return Err(EngineError::BadFailureWindow { at: f.at, recover: r });
                }
            }
        }
        for f in &flows {
            for node in [f.src(), f.dst()] {
                if node as usize >= topology.nodes.len() || topology.node(node).role != NodeRole::Host {
                    return Err(EngineError::NotAHost { flow: f.id, node });
                }
            }
        }
        flows.sort_by_key(|f| (f.arrival, f.id));

        let out_links = topology.adjacency();
        let mut switches = Vec::new();
        let mut switch_of_node = vec![None; topology.nodes.len()];
        for n in &topology.nodes {
            if n.role == NodeRole::Dci {
                let tables = provision_switch(&topology, n.id, &config.provision)?;
                switch_of_node[n.id as usize] = Some(switches.len() as u16);
                switches.push(SwitchState::new(Arc::new(tables), config.switch));
            }
        }

        let ports = topology
            .links
            .iter()
            .map(|l| PortQueue {
                queue: VecDeque::new(),
                backlog_bytes: 0,
                capacity_bytes: l.buffer_bytes,
                bounded: topology.node(l.src).role != NodeRole::Host,
                busy: false,
                alive: true,
                bytes: 0,
                busy_ns: 0,
            })
            .collect();

        let mut to_host = HashMap::new();
        for f in &flows {
            to_host
                .entry(f.dst())
                .or_insert_with(|| intra_dc_distances(&topology, &[f.dst()]));
        }
        let to_exit = (0..topology.dc_count() as DcId)
            .map(|d| intra_dc_distances(&topology, &topology.dcis_in(d)))
            .collect();

        let states = flows
            .iter()
            .map(|f| {
                let line = out_links[f.src() as usize]
                    .iter()
                    .map(|&l| topology.link(l).capacity_bps)
                    .max()
                    .unwrap_or(1);
                FlowState {
                    tp: TransportState::new(line, f.size, f.arrival, &config.transport),
                    key: f.key(),
                    src: f.src(),
                    dst: f.dst(),
                    dst_dc: topology.dc_of(f.dst()),
                    next_seq: 0,
                    recv_bytes: 0,
                    expected_seq: 0,
                    last_cnp: None,
                    timer_armed: false,
                    phase: Phase::Active,
                    status: FlowStatus::Unfinished,
                    completion: None,
                    egress: Vec::new(),
                    failovers: 0,
                }
            })
            .collect();

        let active = flows.len();
        Ok(Simulator {
            topo: topology,
            cfg: config,
            flows,
            states,
            ports,
            switches,
            switch_of_node,
            out_links,
            to_host,
            to_exit,
            heap: BinaryHeap::new(),
            seq: 0,
            now: SimTime::ZERO,
            active,
            counters: Counters::default(),
            sticky: HashMap::new(),
            trace: Vec::new(),
            lossless_violated: false,
        })
    }

    fn schedule(&mut self, time: SimTime, ev: Ev) {
        self.heap.push(Scheduled { time, seq: self.seq, ev });
        self.seq += 1;
    }

    pub fn run(mut self) -> SimResult {
        for i in 0..self.flows.len() {
            let t = self.flows[i].arrival;
            self.schedule(t, Ev::Send(i as u32));
        }
        for f in self.cfg.failures.clone() {
            self.schedule(f.at, Ev::LinkFail(f.link));
            if let Some(r) = f.recover {
                self.schedule(r, Ev::LinkRecover(f.link));
            }
        }
        if self.active > 0 {
            self.schedule(SimTime::ZERO, Ev::Monitor);
            let gc = SimTime((self.cfg.idle_timeout.as_ns() / 2).max(1));
            self.schedule(gc, Ev::Gc);
        }

        while let Some(Scheduled { time, ev, .. }) = self.heap.pop() {
            if self.cfg.horizon.is_some_and(|h| time > h) {
                break;
            }
            self.now = time;
            self.counters.events += 1;
            match ev {
                Ev::Send(f) => self.on_send(f),
                Ev::RateTimer(f) => self.on_rate_timer(f),
                Ev::Cnp(f) => self.on_cnp(f),
                Ev::Arrive(node, p) => self.on_arrive(node, p),
                Ev::TxDone(l) => self.on_tx_done(l),
                Ev::Monitor => self.on_monitor(),
                Ev::Gc => self.on_gc(),
                Ev::LinkFail(l) => self.set_link_alive(l, false),
                Ev::LinkRecover(l) => self.set_link_alive(l, true),
            }
        }
        self.finish()
    }

    fn on_send(&mut self, f: u32) {
        let st = &mut self.states[f as usize];
        if st.phase != Phase::Active || st.tp.bytes_remaining == 0 {
            return;
        }
        let payload = st.tp.bytes_remaining.min(self.cfg.mtu as u64);
        st.tp.bytes_remaining -= payload;
        let seq = st.next_seq;
        st.next_seq += 1;
        let gap = serialization_time(payload, st.tp.current_rate);
        st.tp.next_send = self.now + gap;
        let (src, more, arm) = (st.src, st.tp.bytes_remaining > 0, !st.timer_armed);
        if more {
            let t = st.tp.next_send;
            self.schedule(t, Ev::Send(f));
            if arm {
                self.states[f as usize].timer_armed = true;
                let t = self.now + self.cfg.transport.rate_interval;
                self.schedule(t, Ev::RateTimer(f));
            }
        }
        self.counters.data_packets += 1;
        let p = Pkt {
            pkt: Packet {
                flow: f,
                seq,
                payload: payload as u32,
                flags: PacketFlags {
                    data: true,
                    ..Default::default()
                },
            },
            route: None,
            prop: SimTime::ZERO,
        };
        self.forward(src, p);
    }

    fn on_rate_timer(&mut self, f: u32) {
        let step = {
            let st = &self.states[f as usize];
            st.tp.line_rate * self.cfg.transport.additive_step_permille as u64 / 1000
        };
        let st = &mut self.states[f as usize];
        if st.phase != Phase::Active || st.tp.bytes_remaining == 0 {
            st.timer_armed = false;
            return;
        }
        st.tp = transport_on_interval(&st.tp, step);
        let t = self.now + self.cfg.transport.rate_interval;
        self.schedule(t, Ev::RateTimer(f));
    }

    fn on_cnp(&mut self, f: u32) {
        let st = &mut self.states[f as usize];
        if st.phase == Phase::Active {
            st.tp = transport_on_cnp(&st.tp);
        }
    }

    fn on_arrive(&mut self, node: NodeId, p: Pkt) {
        let f = p.pkt.flow as usize;
        if node == self.states[f].dst {
            self.receive(p);
        } else {
            self.forward(node, p);
        }
    }

    fn receive(&mut self, p: Pkt) {
        let f = p.pkt.flow as usize;
        let interval = self.cfg.transport.rate_interval;
        let now = self.now;
        let st = &mut self.states[f];
        if p.pkt.seq != st.expected_seq {
            self.counters.reorder_violations += 1;
        }
        st.expected_seq = st.expected_seq.max(p.pkt.seq + 1);
        st.recv_bytes += p.pkt.payload as u64;
        let mut cnp = false;
        if p.pkt.flags.ecn_marked && st.phase == Phase::Active && st.last_cnp.is_none_or(|t| now - t >= interval) {
            st.last_cnp = Some(now);
            cnp = true;
        }
        if st.recv_bytes == self.flows[f].size && st.phase == Phase::Active {
            st.completion = Some(now);
            st.status = FlowStatus::Finished;
            st.phase = Phase::Done;
            self.active -= 1;
        }
        if cnp {
            self.counters.cnps += 1;
            self.schedule(now + p.prop, Ev::Cnp(f as u32));
        }
    }

    fn fail_flow(&mut self, f: usize, status: FlowStatus) {
        let st = &mut self.states[f];
        if st.phase == Phase::Active {
            st.phase = Phase::Done;
            st.status = status;
            self.active -= 1;
        }
    }

    fn forward(&mut self, node: NodeId, mut p: Pkt) {
        let f = p.pkt.flow as usize;
        let (key, dst, dst_dc) = {
            let st = &self.states[f];
            (st.key, st.dst, st.dst_dc)
        };
        let here = self.topo.dc_of(node);
        let link = if here != dst_dc && self.topo.node(node).role == NodeRole::Dci {
            match self.inter_dc_next(node, &mut p, key, dst_dc) {
                Some(l) => l,
                None => {
                    self.counters.routing_errors += 1;
                    self.fail_flow(f, FlowStatus::Failed);
                    return;
                }
            }
        } else {
            let table = if here == dst_dc {
                &self.to_host[&dst]
            } else {
                &self.to_exit[here as usize]
            };
            let d = table.0[node as usize];
            let next: Vec<LinkId> = self.out_links[node as usize]
                .iter()
                .copied()
                .filter(|&l| {
                    let link = self.topo.link(l);
                    self.ports[l as usize].alive
                        && d != UNREACHABLE
                        && d > 0
                        && table.0[link.dst as usize] == d - 1
                })
                .collect();
            if next.is_empty() {
                self.counters.routing_errors += 1;
                self.fail_flow(f, FlowStatus::Failed);
                return;
            }
            next[hash_index(key, node as u64, next.len() as u64) as usize]
        };
        if self.topo.node(node).role.is_switch() {
            match self.sticky.insert((p.pkt.flow, node), link) {
                Some(prev) if prev != link && self.switch_of_node[node as usize].is_none() => {
                    self.counters.stickiness_violations += 1;
                }
                _ => {}
            }
        }
        self.enqueue(link, p);
    }

    /// Next inter-DC hop: follow the pinned route, or ask this DCI's policy.
    fn inter_dc_next(&mut self, node: NodeId, p: &mut Pkt, key: u64, dst_dc: DcId) -> Option<LinkId> {
        if let Some(r) = p.route.as_mut() {
            let hops = &self.switches[r.switch as usize].tables().candidates_to(r.dst_dc as DcId)[r.candidate as usize]
                .hop_links;
            let h = r.hop as usize;
            if h < hops.len() && self.topo.link(hops[h]).src == node {
                let l = hops[h];
                r.hop += 1;
                return self.ports[l as usize].alive.then_some(l);
            }
        }
        let si = self.switch_of_node[node as usize]? as usize;
        let sw = &mut self.switches[si];
        let decision = sw.handle_packet(key, dst_dc, self.now, &Ports(&self.ports)).ok()?;
        let cand = &sw.tables().candidates_to(dst_dc)[decision.candidate];
        let link = cand.egress_link();
        let f = p.pkt.flow as usize;
        match decision.kind {
            DecisionKind::CacheHit => self.counters.cache_hits += 1,
            DecisionKind::NewFlow => self.counters.new_flow_decisions += 1,
            DecisionKind::FailoverReroute => {
                self.counters.failovers += 1;
                self.states[f].failovers += 1;
            }
        }
        if let Some(t) = decision.trace {
            self.trace.push(TraceRecord {
                time: self.now,
                switch: node,
                flow_id: self.flows[f].id,
                kind: decision.kind,
                candidates: t.candidates,
                retained: t.retained,
                chosen_port: decision.egress_port,
            });
        }
        let st = &mut self.states[f];
        match st.egress.iter_mut().rev().find(|e| e.switch == node) {
            Some(e) if e.port == decision.egress_port => e.packets += 1,
            prev => {
                if prev.is_some() && decision.kind != DecisionKind::FailoverReroute {
                    self.counters.stickiness_violations += 1;
                }
                st.egress.push(EgressUse {
                    switch: node,
                    port: decision.egress_port,
                    link,
                    first_seq: p.pkt.seq,
                    packets: 1,
                });
            }
        }
        p.route = Some(RouteRef {
            switch: si as u16,
            dst_dc: dst_dc as u16,
            candidate: decision.candidate as u16,
            hop: 1,
        });
        Some(link)
    }

    fn enqueue(&mut self, link: LinkId, mut p: Pkt) {
        let size = p.pkt.payload as u64;
        let ecn_shift = self.cfg.transport.ecn_shift;
        let port = &mut self.ports[link as usize];
        if port.bounded {
            if port.backlog_bytes + size > port.capacity_bytes {
                self.counters.drops += 1;
                self.lossless_violated = true;
                self.fail_flow(p.pkt.flow as usize, FlowStatus::Dropped);
                return;
            }
            if port.backlog_bytes > port.capacity_bytes >> ecn_shift {
                p.pkt.flags.ecn_marked = true;
                self.counters.ecn_marks += 1;
            }
        }
        port.backlog_bytes += size;
        port.queue.push_back(p);
        if !port.busy {
            self.start_tx(link);
        }
    }

    fn start_tx(&mut self, link: LinkId) {
        let cap = self.topo.link(link).capacity_bps;
        let port = &mut self.ports[link as usize];
        let Some(head) = port.queue.front() else {
            return;
        };
        port.busy = true;
        let t = self.now + serialization_time(head.pkt.payload as u64, cap);
        self.schedule(t, Ev::TxDone(link));
    }

    fn on_tx_done(&mut self, link: LinkId) {
        let l = self.topo.link(link).clone();
        let port = &mut self.ports[link as usize];
        let mut p = port.queue.pop_front().expect("tx completes a queued packet");
        let size = p.pkt.payload as u64;
        port.backlog_bytes -= size;
        port.bytes += size;
        port.busy_ns += serialization_time(size, l.capacity_bps).as_ns();
        port.busy = false;
        p.prop += l.propagation_delay;
        let t = self.now + l.propagation_delay;
        self.schedule(t, Ev::Arrive(l.dst, p));
        self.start_tx(link);
    }

    fn on_monitor(&mut self) {
        for sw in &mut self.switches {
            // monotone clock: sampling cannot regress
            let _ = sw.sample_all(self.now, &Ports(&self.ports));
        }
        if self.active > 0 {
            let t = self.now + self.cfg.provision.sample_interval;
            self.schedule(t, Ev::Monitor);
        }
    }

    fn on_gc(&mut self) {
        for sw in &mut self.switches {
            self.counters.gc_evictions += sw.gc_flow_cache(self.now, self.cfg.idle_timeout) as u64;
        }
        if self.active > 0 {
            let t = self.now + SimTime((self.cfg.idle_timeout.as_ns() / 2).max(1));
            self.schedule(t, Ev::Gc);
        }
    }

    fn set_link_alive(&mut self, link: LinkId, alive: bool) {
        self.ports[link as usize].alive = alive;
        let src = self.topo.link(link).src;
        if let Some(si) = self.switch_of_node[src as usize] {
            let sw = &mut self.switches[si as usize];
            if let Some(port) = sw.port_of_link(link) {
                sw.set_port_alive(port, alive);
            }
        }
    }

    fn finish(self) -> SimResult {
        let mut counters = self.counters;
        let mut switch_stats = Vec::new();
        for sw in &self.switches {
            counters.cache_evictions += sw.stats().evictions;
            switch_stats.push((sw.id(), *sw.stats()));
        }
        let flows = self
            .flows
            .iter()
            .zip(self.states)
            .map(|(f, st)| FlowRecord {
                id: f.id,
                src: f.src(),
                dst: f.dst(),
                size: f.size,
                arrival: f.arrival,
                completion: st.completion,
                status: st.status,
                bytes_received: st.recv_bytes,
                inter_dc_egress: st.egress,
                failovers: st.failovers,
            })
            .collect();
        let links = self
            .ports
            .iter()
            .enumerate()
            .map(|(i, p)| LinkRecord {
                link: i as LinkId,
                bytes: p.bytes,
                busy_ns: p.busy_ns,
            })
            .collect();
        SimResult {
            flows,
            links,
            counters,
            switch_stats,
            trace: self.trace,
            lossless_violated: self.lossless_violated,
            end_time: self.now,
        }
    }
}

/// Multi-source BFS toward `targets` over links inside their DC. Hosts other than the
/// targets are never transit nodes.
fn intra_dc_distances(topo: &Topology, targets: &[NodeId]) -> DistTable {
    let mut dist = vec![UNREACHABLE; topo.nodes.len()];
    let Some(&first) = targets.first() else {
        return DistTable(dist);
    };
    let dc = topo.dc_of(first);
    let mut incoming: Vec<Vec<NodeId>> = vec![Vec::new(); topo.nodes.len()];
    for l in &topo.links {
        if topo.dc_of(l.src) == dc && topo.dc_of(l.dst) == dc {
            incoming[l.dst as usize].push(l.src);
        }
    }
    let mut q = VecDeque::new();
    for &t in targets {
        dist[t as usize] = 0;
        q.push_back(t);
    }
    while let Some(v) = q.pop_front() {
        if topo.node(v).role == NodeRole::Host && !targets.contains(&v) {
            continue;
        }
        for &u in &incoming[v as usize] {
            if dist[u as usize] == UNREACHABLE {
                dist[u as usize] = dist[v as usize] + 1;
                q.push_back(u);
            }
        }
    }
    DistTable(dist)
}

/// Convenience wrapper: build and run.
pub fn simulate(topology: Arc<Topology>, flows: Vec<Flow>, config: SimConfig) -> Result<SimResult, EngineError> {
    Ok(Simulator::new(topology, flows, config)?.run())
}
