//! Control-plane path scoring and the bootstrap tables installed on each DCI switch.
//!
//! Everything here runs once per provisioning. The data plane only reads the resulting
//! [`SwitchTables`].

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DcId, LinkId, NodeId, NodeRole, SimTime, Topology};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ControlPlaneError {
    #[error("one-way delay must be non-negative, got {0} ms")]
    NegativeDelay(i64),
    #[error("delay scoring needs max_delay_ms == 2^shift (got max {max_delay_ms} ms, shift {shift})")]
    DelayScale { max_delay_ms: u32, shift: u32 },
    #[error("at least two classes are required, got {0}")]
    TooFewClasses(usize),
    #[error("capacity reference must be positive")]
    ZeroCapacity,
    #[error("weights {sum} exceed 2^{shift}")]
    WeightOverflow { sum: u32, shift: u32 },
    #[error("node {0} is not a DCI switch")]
    NotADci(NodeId),
    #[error("switch {0} has no inter-DC ports")]
    NoInterDcPorts(NodeId),
}

/// An 8-bit cost, saturated into `[0, 255]` on construction.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Score8(u8);

impl Score8 {
    pub const MIN: Score8 = Score8(0);
    pub const MAX: Score8 = Score8(255);

    pub const fn new(v: u8) -> Self {
        Score8(v)
    }

    pub fn saturating(v: u64) -> Self {
        Score8(v.min(255) as u8)
    }

    pub const fn get(self) -> u32 {
        self.0 as u32
    }
}

impl From<u8> for Score8 {
    fn from(v: u8) -> Self {
        Score8(v)
    }
}

/// Saturation point of the delay score. `max_delay_ms` must equal `1 << shift` so that the
/// division is a shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayScoring {
    pub max_delay_ms: u32,
    pub shift: u32,
}

impl Default for DelayScoring {
    fn default() -> Self {
        DelayScoring {
            max_delay_ms: 32,
            shift: 5,
        }
    }
}

impl DelayScoring {
    pub fn new(shift: u32) -> Result<Self, ControlPlaneError> {
        let s = DelayScoring {
            max_delay_ms: 1u32.checked_shl(shift).unwrap_or(0),
            shift,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ControlPlaneError> {
        if self.shift >= 24 || self.max_delay_ms != 1 << self.shift {
            return Err(ControlPlaneError::DelayScale {
                max_delay_ms: self.max_delay_ms,
                shift: self.shift,
            });
        }
        Ok(())
    }
}

/// Saturating shift-based delay score: 255 at or beyond the maximum, otherwise
/// `(delay * 255) >> shift`.
pub fn calc_delay_score(one_way_delay_ms: i64, scoring: &DelayScoring) -> Result<Score8, ControlPlaneError> {
    if one_way_delay_ms < 0 {
        return Err(ControlPlaneError::NegativeDelay(one_way_delay_ms));
    }
    let d = one_way_delay_ms as u64;
    if d >= scoring.max_delay_ms as u64 {
        return Ok(Score8::MAX);
    }
    Ok(Score8::saturating((d * 255) >> scoring.shift))
}

/// Smallest shift that keeps `sum * 255 >> shift` within 8 bits.
pub fn shift_for(sum: u32) -> u32 {
    if sum <= 1 {
        0
    } else {
        32 - (sum - 1).leading_zeros()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathQualityWeights {
    pub w_dl: u32,
    pub w_lc: u32,
    pub s_path: u32,
}

impl PathQualityWeights {
    pub fn new(w_dl: u32, w_lc: u32, s_path: u32) -> Result<Self, ControlPlaneError> {
        let w = PathQualityWeights { w_dl, w_lc, s_path };
        w.validate()?;
        Ok(w)
    }

    /// Weights with `s_path = ceil(log2(w_dl + w_lc))`.
    pub fn with_default_shift(w_dl: u32, w_lc: u32) -> Result<Self, ControlPlaneError> {
        Self::new(w_dl, w_lc, shift_for(w_dl + w_lc))
    }

    pub fn validate(&self) -> Result<(), ControlPlaneError> {
        let sum = self.w_dl + self.w_lc;
        if self.s_path >= 31 || sum > 1 << self.s_path {
            return Err(ControlPlaneError::WeightOverflow {
                sum,
                shift: self.s_path,
            });
        }
        Ok(())
    }
}

impl Default for PathQualityWeights {
    fn default() -> Self {
        PathQualityWeights {
            w_dl: 3,
            w_lc: 1,
            s_path: 2,
        }
    }
}

/// Linear level-to-score map: `round(i * 255 / (n - 1))`.
pub fn linear_level_scores(n: usize) -> Vec<Score8> {
    let d = (n as u64 - 1).max(1);
    (0..n as u64)
        .map(|i| Score8::saturating((2 * i * 255 + d) / (2 * d)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapacityTables {
    pub thresholds: Vec<u64>,
    pub level_score: Vec<Score8>,
}

/// `n_classes` equal partitions of `max_capacity` with a linear level score.
pub fn build_capacity_tables(max_capacity: u64, n_classes: usize) -> Result<CapacityTables, ControlPlaneError> {
    if n_classes < 2 {
        return Err(ControlPlaneError::TooFewClasses(n_classes));
    }
    if max_capacity == 0 {
        return Err(ControlPlaneError::ZeroCapacity);
    }
    let n = n_classes as u128;
    let thresholds = (1..=n)
        .map(|i| (i * max_capacity as u128 / n) as u64)
        .collect::<Vec<_>>();
    if thresholds.windows(2).any(|w| w[0] >= w[1]) || thresholds[0] == 0 {
        // fewer bits per second than classes
        return Err(ControlPlaneError::TooFewClasses(n_classes));
    }
    Ok(CapacityTables {
        thresholds,
        level_score: linear_level_scores(n_classes),
    })
}

/// Capacity-class lookup: scans from the top class down; higher capacity gives a smaller cost.
pub fn calc_link_cap_score(link_capacity: u64, tables: &CapacityTables) -> Score8 {
    for i in (0..tables.thresholds.len()).rev() {
        if link_capacity >= tables.thresholds[i] {
            return Score8::saturating(255 - tables.level_score[i].get() as u64);
        }
    }
    Score8::MAX
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueTables {
    pub q_thresh: Vec<u64>,
    pub level_score: Vec<Score8>,
}

/// Queue levels at `(i + 1) * buffer / n`.
pub fn build_queue_tables(buffer_bytes: u64, n_levels: usize) -> Result<QueueTables, ControlPlaneError> {
    if n_levels < 2 {
        return Err(ControlPlaneError::TooFewClasses(n_levels));
    }
    let n = n_levels as u64;
    Ok(QueueTables {
        q_thresh: strictly_increasing((1..=n).map(|i| i * buffer_bytes / n)),
        level_score: linear_level_scores(n_levels),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendTables {
    pub rate_bucket: u64,
    pub t_thresh: Vec<u64>,
    pub level_score: Vec<Score8>,
}

/// Trend levels as fractions of the bytes one sampling interval drains at `rate_bps`.
pub fn build_trend_tables(
    rate_bps: u64,
    sample_interval: SimTime,
    n_levels: usize,
) -> Result<TrendTables, ControlPlaneError> {
    if n_levels < 2 {
        return Err(ControlPlaneError::TooFewClasses(n_levels));
    }
    let per_interval = (rate_bps as u128 * sample_interval.as_ns() as u128 / 8_000_000_000) as u64;
    let n = n_levels as u64;
    Ok(TrendTables {
        rate_bucket: rate_bps,
        t_thresh: strictly_increasing((1..=n).map(|j| j * per_interval / n)),
        level_score: linear_level_scores(n_levels),
    })
}

// Bumps equal or zero entries so thresholds stay strictly increasing and positive.
fn strictly_increasing(it: impl Iterator<Item = u64>) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::new();
    for v in it {
        let floor = out.last().map_or(1, |p| p + 1);
        out.push(v.max(floor));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePath {
    pub path_id: u32,
    /// Port index on the deciding switch.
    pub egress_port: u32,
    pub hop_links: Vec<LinkId>,
    pub one_way_delay_ms: u32,
    pub bottleneck_capacity: u64,
    pub c_path: Score8,
}

impl CandidatePath {
    pub fn egress_link(&self) -> LinkId {
        self.hop_links[0]
    }
}

/// `min((w_dl * delayScore + w_lc * linkCapScore) >> s_path, 255)`.
pub fn calc_path_quality(
    path: &CandidatePath,
    weights: &PathQualityWeights,
    tables: &CapacityTables,
    scoring: &DelayScoring,
) -> Score8 {
    // one_way_delay_ms is unsigned, the error branch cannot trigger
    let delay = calc_delay_score(path.one_way_delay_ms as i64, scoring).unwrap_or(Score8::MAX);
    let cap = calc_link_cap_score(path.bottleneck_capacity, tables);
    let sum = weights.w_dl as u64 * delay.get() as u64 + weights.w_lc as u64 * cap.get() as u64;
    Score8::saturating(sum >> weights.s_path)
}

/// Candidate inter-DC routes from DCI `switch` to `dst_dc`, one per egress port, sorted by port.
///
/// Each route leaves through a distinct inter-DC port and then follows the shortest
/// propagation-delay DCI-to-DCI route that never re-enters the switch's own datacenter.
/// `c_path` is left at zero; [`provision_switch`] fills it in.
pub fn enumerate_candidate_paths(topology: &Topology, switch: NodeId, dst_dc: DcId) -> Vec<CandidatePath> {
    let own_dc = topology.dc_of(switch);
    if own_dc == dst_dc {
        return Vec::new();
    }
    let adj = topology.adjacency();
    let mut out = Vec::new();
    for (port, &lid) in topology.ports_of(switch).iter().enumerate() {
        let link = topology.link(lid);
        let next = topology.node(link.dst);
        if next.dc == own_dc || next.role != NodeRole::Dci {
            continue;
        }
        let tail = if next.dc == dst_dc {
            Some(Vec::new())
        } else {
            shortest_dci_route(topology, &adj, next.id, dst_dc, own_dc)
        };
        let Some(tail) = tail else { continue };
        let mut hops = Vec::with_capacity(tail.len() + 1);
        hops.push(lid);
        hops.extend(tail);
        let delay = hops
            .iter()
            .map(|&h| topology.link(h).propagation_delay)
            .fold(SimTime::ZERO, |a, b| a + b);
        let bottleneck = hops
            .iter()
            .map(|&h| topology.link(h).capacity_bps)
            .min()
            .unwrap_or(0);
        out.push(CandidatePath {
            path_id: out.len() as u32,
            egress_port: port as u32,
            hop_links: hops,
            one_way_delay_ms: delay.ceil_ms() as u32,
            bottleneck_capacity: bottleneck,
            c_path: Score8::MIN,
        });
    }
    out
}

// Dijkstra over DCI-to-DCI links keyed by (delay, hop count, node id) for determinism.
fn shortest_dci_route(
    topology: &Topology,
    adj: &[Vec<LinkId>],
    from: NodeId,
    dst_dc: DcId,
    avoid_dc: DcId,
) -> Option<Vec<LinkId>> {
    let n = topology.nodes.len();
    let mut best: Vec<Option<(u64, u32)>> = vec![None; n];
    let mut via: Vec<Option<LinkId>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    best[from as usize] = Some((0, 0));
    heap.push(Reverse((0u64, 0u32, from)));
    while let Some(Reverse((d, h, u))) = heap.pop() {
        if best[u as usize] != Some((d, h)) {
            continue;
        }
        if topology.dc_of(u) == dst_dc {
            let mut route = Vec::new();
            let mut cur = u;
            while let Some(l) = via[cur as usize] {
                route.push(l);
                cur = topology.link(l).src;
            }
            route.reverse();
            return Some(route);
        }
        for &lid in &adj[u as usize] {
            let l = topology.link(lid);
            let v = topology.node(l.dst);
            if v.role != NodeRole::Dci || v.dc == avoid_dc {
                continue;
            }
            let cand = (d + l.propagation_delay.as_ns(), h + 1);
            if best[v.id as usize].is_none_or(|b| cand < b) {
                best[v.id as usize] = Some(cand);
                via[v.id as usize] = Some(lid);
                heap.push(Reverse((cand.0, cand.1, v.id)));
            }
        }
    }
    None
}

/// Inputs to [`provision_switch`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvisionConfig {
    pub n_classes: usize,
    pub n_queue_levels: usize,
    pub n_trend_levels: usize,
    pub path_weights: PathQualityWeights,
    pub delay: DelayScoring,
    pub sample_interval: SimTime,
    /// Top of the capacity classes; defaults to the largest inter-DC link capacity.
    pub capacity_reference: Option<u64>,
}

impl Default for ProvisionConfig {
    fn default() -> Self {
        ProvisionConfig {
            n_classes: 10,
            n_queue_levels: 10,
            n_trend_levels: 10,
            path_weights: PathQualityWeights::default(),
            delay: DelayScoring::default(),
            sample_interval: SimTime::from_us(50),
            capacity_reference: None,
        }
    }
}

/// Everything a DCI switch needs at runtime, fixed at provisioning time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchTables {
    pub switch: NodeId,
    /// Port index to outgoing link.
    pub ports: Vec<LinkId>,
    /// Candidates per destination DC, sorted by egress port.
    pub candidates: BTreeMap<DcId, Vec<CandidatePath>>,
    pub capacity: CapacityTables,
    /// Per port index.
    pub queue: Vec<QueueTables>,
    /// One table per distinct port rate, ascending.
    pub trend: Vec<TrendTables>,
    /// Port index to index into `trend`.
    pub port_trend: Vec<usize>,
    pub weights: PathQualityWeights,
    pub delay: DelayScoring,
}

impl SwitchTables {
    pub fn candidates_to(&self, dst_dc: DcId) -> &[CandidatePath] {
        self.candidates.get(&dst_dc).map_or(&[], Vec::as_slice)
    }

    pub fn trend_for_port(&self, port: usize) -> &TrendTables {
        &self.trend[self.port_trend[port]]
    }

    /// Plain-text dump, one section per table.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[switch]\nid = {}\nports = {}", self.switch, self.ports.len());
        let _ = writeln!(
            s,
            "\n[path_weights]\nw_dl = {}\nw_lc = {}\ns_path = {}\nmax_delay_ms = {}\ndelay_shift = {}",
            self.weights.w_dl, self.weights.w_lc, self.weights.s_path, self.delay.max_delay_ms, self.delay.shift
        );
        let _ = writeln!(s, "\n[capacity_classes]\nclass threshold_bps level_score");
        for (i, (t, l)) in self.capacity.thresholds.iter().zip(&self.capacity.level_score).enumerate() {
            let _ = writeln!(s, "{i} {t} {}", l.get());
        }
        for (dc, cands) in &self.candidates {
            let _ = writeln!(
                s,
                "\n[candidates dst_dc={dc}]\npath port delay_ms bottleneck_bps c_path hops"
            );
            for c in cands {
                let hops: Vec<String> = c.hop_links.iter().map(u32::to_string).collect();
                let _ = writeln!(
                    s,
                    "{} {} {} {} {} {}",
                    c.path_id,
                    c.egress_port,
                    c.one_way_delay_ms,
                    c.bottleneck_capacity,
                    c.c_path.get(),
                    hops.join(",")
                );
            }
        }
        for (p, q) in self.queue.iter().enumerate() {
            let th: Vec<String> = q.q_thresh.iter().map(u64::to_string).collect();
            let _ = writeln!(s, "\n[queue_levels port={p} link={}]\n{}", self.ports[p], th.join(" "));
        }
        for t in &self.trend {
            let th: Vec<String> = t.t_thresh.iter().map(u64::to_string).collect();
            let _ = writeln!(s, "\n[trend_levels rate_bps={}]\n{}", t.rate_bucket, th.join(" "));
        }
        s
    }
}

/// Builds the bootstrap tables of DCI switch `switch`.
pub fn provision_switch(
    topology: &Topology,
    switch: NodeId,
    config: &ProvisionConfig,
) -> Result<SwitchTables, ControlPlaneError> {
    if topology.node(switch).role != NodeRole::Dci {
        return Err(ControlPlaneError::NotADci(switch));
    }
    config.delay.validate()?;
    config.path_weights.validate()?;
    let ports = topology.ports_of(switch);
    if !ports.iter().any(|&l| topology.is_inter_dc(topology.link(l))) {
        return Err(ControlPlaneError::NoInterDcPorts(switch));
    }
    let reference = match config.capacity_reference {
        Some(c) => c,
        None => topology.max_inter_dc_capacity().ok_or(ControlPlaneError::NoInterDcPorts(switch))?,
    };
    let capacity = build_capacity_tables(reference, config.n_classes)?;

    let own_dc = topology.dc_of(switch);
    let mut candidates = BTreeMap::new();
    for dc in 0..topology.dc_count() as DcId {
        if dc == own_dc {
            continue;
        }
        let mut paths = enumerate_candidate_paths(topology, switch, dc);
        if paths.is_empty() {
            continue;
        }
        for p in &mut paths {
            p.c_path = calc_path_quality(p, &config.path_weights, &capacity, &config.delay);
        }
        candidates.insert(dc, paths);
    }

    let queue = ports
        .iter()
        .map(|&l| build_queue_tables(topology.link(l).buffer_bytes, config.n_queue_levels))
        .collect::<Result<Vec<_>, _>>()?;
    let rates: BTreeSet<u64> = ports.iter().map(|&l| topology.link(l).capacity_bps).collect();
    let trend = rates
        .iter()
        .map(|&r| build_trend_tables(r, config.sample_interval, config.n_trend_levels))
        .collect::<Result<Vec<_>, _>>()?;
    let port_trend = ports
        .iter()
        .map(|&l| {
            let r = topology.link(l).capacity_bps;
            trend.iter().position(|t| t.rate_bucket == r).unwrap_or(0)
        })
        .collect();

    Ok(SwitchTables {
        switch,
        ports,
        candidates,
        capacity,
        queue,
        trend,
        port_trend,
        weights: config.path_weights,
        delay: config.delay,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TopologyBuilder;

    const G: u64 = 1_000_000_000;

    fn default_tables() -> CapacityTables {
        build_capacity_tables(400 * G, 10).unwrap()
    }

    #[test]
    fn delay_score_examples() {
        let s = DelayScoring::default();
        assert_eq!(calc_delay_score(32, &s).unwrap().get(), 255);
        assert_eq!(calc_delay_score(0, &s).unwrap().get(), 0);
        assert_eq!(calc_delay_score(16, &s).unwrap().get(), 127);
        assert_eq!(calc_delay_score(5, &s).unwrap().get(), 39);
        assert_eq!(calc_delay_score(-1, &s), Err(ControlPlaneError::NegativeDelay(-1)));
    }

    #[test]
    fn delay_scale_must_be_power_of_two() {
        assert!(DelayScoring::new(6).is_ok());
        let bad = DelayScoring {
            max_delay_ms: 40,
            shift: 5,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn capacity_tables_example() {
        let t = default_tables();
        let gbps: Vec<u64> = t.thresholds.iter().map(|x| x / G).collect();
        assert_eq!(gbps, vec![40, 80, 120, 160, 200, 240, 280, 320, 360, 400]);
        let scores: Vec<u32> = t.level_score.iter().map(|s| s.get()).collect();
        assert_eq!(scores, vec![0, 28, 57, 85, 113, 142, 170, 198, 227, 255]);

        let two = build_capacity_tables(100, 2).unwrap();
        assert_eq!(two.thresholds, vec![50, 100]);
        assert_eq!(two.level_score, vec![Score8::new(0), Score8::new(255)]);

        assert_eq!(build_capacity_tables(100, 1), Err(ControlPlaneError::TooFewClasses(1)));
    }

    #[test]
    fn link_cap_score_examples() {
        let t = default_tables();
        assert_eq!(calc_link_cap_score(400 * G, &t).get(), 0);
        assert_eq!(calc_link_cap_score(200 * G, &t).get(), 142);
        assert_eq!(calc_link_cap_score(100 * G, &t).get(), 227);
        assert_eq!(calc_link_cap_score(G, &t).get(), 255);
    }

    fn path(delay_ms: u32, cap: u64) -> CandidatePath {
        CandidatePath {
            path_id: 0,
            egress_port: 0,
            hop_links: vec![0],
            one_way_delay_ms: delay_ms,
            bottleneck_capacity: cap,
            c_path: Score8::MIN,
        }
    }

    #[test]
    fn path_quality_examples() {
        let t = default_tables();
        let d = DelayScoring::default();
        let w = PathQualityWeights::new(3, 1, 2).unwrap();
        assert_eq!(calc_path_quality(&path(5, 200 * G), &w, &t, &d).get(), 64);
        let w11 = PathQualityWeights::new(1, 1, 1).unwrap();
        assert_eq!(calc_path_quality(&path(40, G), &w11, &t, &d).get(), 255);
        assert_eq!(calc_path_quality(&path(0, 400 * G), &w, &t, &d).get(), 0);
    }

    #[test]
    fn default_shift_rule() {
        assert_eq!(PathQualityWeights::with_default_shift(3, 1).unwrap().s_path, 2);
        assert_eq!(PathQualityWeights::with_default_shift(1, 1).unwrap().s_path, 1);
        assert_eq!(PathQualityWeights::with_default_shift(4, 1).unwrap().s_path, 3);
        assert!(PathQualityWeights::new(3, 2, 2).is_err());
    }

    // a - b - c inter-DC chain, one DCI per DC
    fn chain() -> Topology {
        let mut b = TopologyBuilder::new();
        let dcs: Vec<_> = ["a", "b", "c"].iter().map(|n| b.dc(*n)).collect();
        let s: Vec<_> = dcs.iter().map(|&d| b.node(NodeRole::Dci, d)).collect();
        let h: Vec<_> = dcs.iter().map(|&d| b.node(NodeRole::Host, d)).collect();
        for i in 0..3 {
            b.duplex(h[i], s[i], 100 * G, SimTime::from_us(1), 1 << 20);
        }
        b.duplex(s[0], s[1], 40 * G, SimTime::from_ms(3), 1 << 20);
        b.duplex(s[1], s[2], 100 * G, SimTime::from_ms(4), 1 << 20);
        b.build()
    }

    #[test]
    fn chain_middle_switch_has_one_candidate_each_way() {
        let t = chain();
        let left = enumerate_candidate_paths(&t, 1, 0);
        let right = enumerate_candidate_paths(&t, 1, 2);
        assert_eq!(left.len(), 1);
        assert_eq!(right.len(), 1);
        assert!(enumerate_candidate_paths(&t, 1, 1).is_empty());

        let end = enumerate_candidate_paths(&t, 0, 2);
        assert_eq!(end.len(), 1);
        assert_eq!(end[0].hop_links.len(), 2);
        assert_eq!(end[0].one_way_delay_ms, 7);
        assert_eq!(end[0].bottleneck_capacity, 40 * G);
    }

    #[test]
    fn provisioning_one_rate_gives_one_trend_bucket() {
        let mut b = TopologyBuilder::new();
        let d0 = b.dc("a");
        let d1 = b.dc("b");
        let s0 = b.node(NodeRole::Dci, d0);
        let s1 = b.node(NodeRole::Dci, d1);
        b.duplex(s0, s1, 40 * G, SimTime::from_ms(1), 1 << 20);
        let t = b.build();
        let tables = provision_switch(&t, s0, &ProvisionConfig::default()).unwrap();
        assert_eq!(tables.trend.len(), 1);
        assert_eq!(tables.trend[0].rate_bucket, 40 * G);
        // 40 Gbit/s for 50 us = 250 000 bytes, split in 10 levels
        assert_eq!(tables.trend[0].t_thresh[0], 25_000);
        assert_eq!(tables.trend[0].t_thresh[9], 250_000);
    }

    #[test]
    fn provisioning_rejects_switch_without_inter_dc_ports() {
        let mut b = TopologyBuilder::new();
        let d0 = b.dc("a");
        let s0 = b.node(NodeRole::Dci, d0);
        let h = b.node(NodeRole::Host, d0);
        b.duplex(s0, h, G, SimTime::ZERO, 1000);
        let t = b.build();
        assert_eq!(
            provision_switch(&t, s0, &ProvisionConfig::default()),
            Err(ControlPlaneError::NoInterDcPorts(s0))
        );
        assert_eq!(
            provision_switch(&t, h, &ProvisionConfig::default()),
            Err(ControlPlaneError::NotADci(h))
        );
    }

    #[test]
    fn queue_thresholds_split_the_buffer() {
        let q = build_queue_tables(1000, 10).unwrap();
        assert_eq!(q.q_thresh, vec![100, 200, 300, 400, 500, 600, 700, 800, 900, 1000]);
        let tiny = build_queue_tables(3, 4).unwrap();
        assert_eq!(tiny.q_thresh, vec![1, 2, 3, 4]);
    }
}
