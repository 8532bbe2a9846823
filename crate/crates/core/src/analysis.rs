//! Metrics over completed runs: FCT slowdown against an alone-in-network ideal, nearest-rank
//! percentiles, link utilization, and the switch resource accounting.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_plane::FlowCacheEntry;
use crate::engine::SimResult;
use crate::model::{serialization_time, LinkId, NodeId, NodeRole, SimTime, Topology};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("no route from {0} to {1}")]
    NoRoute(NodeId, NodeId),
    #[error("no records")]
    Empty,
    #[error("duration must be positive")]
    ZeroDuration,
}

/// The minimum-propagation-delay route between two hosts, ties broken by hop count.
pub fn min_delay_route(topology: &Topology, src: NodeId, dst: NodeId) -> Result<Vec<LinkId>, AnalysisError> {
    let adj = topology.adjacency();
    let n = topology.nodes.len();
    let mut best: Vec<Option<(u64, u32)>> = vec![None; n];
    let mut via: Vec<Option<LinkId>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    best[src as usize] = Some((0, 0));
    heap.push(Reverse((0u64, 0u32, src)));
    while let Some(Reverse((d, h, v))) = heap.pop() {
        if best[v as usize] != Some((d, h)) {
            continue;
        }
        if v == dst {
            break;
        }
        if v != src && topology.node(v).role == NodeRole::Host {
            continue;
        }
        for &l in &adj[v as usize] {
            let link = topology.link(l);
            let cand = (d + link.propagation_delay.as_ns(), h + 1);
            if best[link.dst as usize].is_none_or(|b| cand < b) {
                best[link.dst as usize] = Some(cand);
                via[link.dst as usize] = Some(l);
                heap.push(Reverse((cand.0, cand.1, link.dst)));
            }
        }
    }
    if best[dst as usize].is_none() {
        return Err(AnalysisError::NoRoute(src, dst));
    }
    let mut route = Vec::new();
    let mut v = dst;
    while v != src {
        let l = via[v as usize].expect("reached nodes have a predecessor");
        route.push(l);
        v = topology.link(l).src;
    }
    route.reverse();
    Ok(route)
}

/// Closed form without serialization: propagation + size / bottleneck.
pub fn ideal_fct_closed_form(total_prop: SimTime, bottleneck_bps: u64, size: u64) -> SimTime {
    total_prop + serialization_time(size, bottleneck_bps)
}

/// Alone-in-network FCT on the minimum-delay route under the engine's store-and-forward model:
/// propagation, plus the first packet serialized at every hop, plus the rest of the flow
/// streamed through the bottleneck.
pub fn ideal_fct(topology: &Topology, src: NodeId, dst: NodeId, size: u64, mtu: u32) -> Result<SimTime, AnalysisError> {
    let route = min_delay_route(topology, src, dst)?;
    Ok(ideal_fct_on_route(topology, &route, size, mtu))
}

pub fn ideal_fct_on_route(topology: &Topology, route: &[LinkId], size: u64, mtu: u32) -> SimTime {
    let first = size.min(mtu as u64);
    let mut t = SimTime::ZERO;
    let mut bottleneck = u64::MAX;
    for &l in route {
        let link = topology.link(l);
        t += link.propagation_delay + serialization_time(first, link.capacity_bps);
        bottleneck = bottleneck.min(link.capacity_bps);
    }
    t + serialization_time(size - first, bottleneck)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlowdownRecord {
    pub flow_id: u64,
    pub size: u64,
    pub actual_fct: SimTime,
    pub ideal_fct: SimTime,
    pub slowdown: f64,
}

/// Slowdown of every finished flow.
pub fn slowdowns(topology: &Topology, result: &SimResult, mtu: u32) -> Result<Vec<SlowdownRecord>, AnalysisError> {
    let mut routes: HashMap<(NodeId, NodeId), Vec<LinkId>> = HashMap::new();
    let mut out = Vec::new();
    for f in result.finished() {
        let route = match routes.get(&(f.src, f.dst)) {
            Some(r) => r,
            None => {
                let r = min_delay_route(topology, f.src, f.dst)?;
                routes.entry((f.src, f.dst)).or_insert(r)
            }
        };
        let ideal = ideal_fct_on_route(topology, route, f.size, mtu);
        let actual = f.fct().expect("finished flows have a completion time");
        out.push(SlowdownRecord {
            flow_id: f.id,
            size: f.size,
            actual_fct: actual,
            ideal_fct: ideal,
            slowdown: actual.as_ns() as f64 / ideal.as_ns().max(1) as f64,
        });
    }
    Ok(out)
}

/// Nearest-rank percentile of unsorted values; `p` in per-mille.
pub fn percentile(values: &[f64], p: u32) -> Result<f64, AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(nearest_rank(&v, p))
}

fn nearest_rank(sorted: &[f64], p: u32) -> f64 {
    let n = sorted.len() as u64;
    let rank = (p as u64 * n).div_ceil(1000).clamp(1, n);
    sorted[rank as usize - 1]
}

pub fn slowdown_percentiles(records: &[SlowdownRecord], ps: &[u32]) -> Result<Vec<f64>, AnalysisError> {
    if records.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut v: Vec<f64> = records.iter().map(|r| r.slowdown).collect();
    v.sort_by(f64::total_cmp);
    Ok(ps.iter().map(|&p| nearest_rank(&v, p)).collect())
}

/// Percentiles per size bucket; bucket `i` holds sizes in `[edges[i-1], edges[i])`, with
/// open ends. Empty buckets are omitted.
pub fn bucket_percentiles(
    records: &[SlowdownRecord],
    edges: &[u64],
    ps: &[u32],
) -> Vec<(u64, u64, Vec<f64>)> {
    let mut out = Vec::new();
    for i in 0..=edges.len() {
        let lo = if i == 0 { 0 } else { edges[i - 1] };
        let hi = edges.get(i).copied().unwrap_or(u64::MAX);
        let sel: Vec<SlowdownRecord> = records.iter().filter(|r| r.size >= lo && r.size < hi).copied().collect();
        if let Ok(v) = slowdown_percentiles(&sel, ps) {
            out.push((lo, hi, v));
        }
    }
    out
}

/// Records whose size is at or above the 90th-percentile size.
pub fn largest_decile(records: &[SlowdownRecord]) -> Vec<SlowdownRecord> {
    if records.is_empty() {
        return Vec::new();
    }
    let sizes: Vec<f64> = records.iter().map(|r| r.size as f64).collect();
    let cut = percentile(&sizes, 900).expect("non-empty") as u64;
    records.iter().filter(|r| r.size >= cut).copied().collect()
}

/// `bytes * 8 / (capacity * duration)` in per-mille, rounded down.
pub fn link_utilization(result: &SimResult, topology: &Topology, link: LinkId, duration: SimTime) -> Result<u32, AnalysisError> {
    if duration == SimTime::ZERO {
        return Err(AnalysisError::ZeroDuration);
    }
    let bytes = result.links[link as usize].bytes as u128;
    let cap = topology.link(link).capacity_bps as u128;
    Ok((bytes * 8 * 1000 * 1_000_000_000 / (cap * duration.as_ns() as u128)) as u32)
}

pub fn utilization_csv(result: &SimResult, topology: &Topology, duration: SimTime) -> Result<String, AnalysisError> {
    let mut s = String::from("link_id,src,dst,capacity_bps,bytes,utilization_permille\n");
    for l in &topology.links {
        let u = link_utilization(result, topology, l.id, duration)?;
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            l.id, l.src, l.dst, l.capacity_bps, result.links[l.id as usize].bytes, u
        ));
    }
    Ok(s)
}

/// Bytes per port register set: queue, previous queue, trend, duration (4 B each) plus an
/// 8 B sample timestamp.
pub const PORT_STATE_BYTES: u64 = 4 + 4 + 4 + 4 + 8;
/// Per-entry figure from the reference sizing demonstration; disagrees with the field sum.
pub const FLOW_ENTRY_BYTES_DEMO: u64 = 24;
/// Integer primitives per candidate on a new-flow decision.
pub const OPS_PER_CANDIDATE: u64 = 15;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub per_port_bytes: u64,
    pub total_port_bytes: u64,
    pub per_flow_bytes_formula: u64,
    pub per_flow_bytes_demo: u64,
    pub total_flow_cache_bytes_formula: u64,
    pub total_flow_cache_bytes_demo: u64,
    /// One 8-bit path score per installed path.
    pub path_score_bytes: u64,
    pub per_new_flow_ops: u64,
    pub sort_comparisons: u64,
}

/// `floor(m * log2(m))`, computed exactly in integers.
pub fn sort_comparisons(m: u64) -> u64 {
    if m < 2 {
        return 0;
    }
    // largest c with 2^c <= m^m
    num_pow_bits(m) - 1
}

// Bit length of m^m, i.e. floor(m*log2 m) + 1 for m >= 2.
fn num_pow_bits(m: u64) -> u64 {
    // m^m as little-endian 32-bit limbs
    let mut limbs: Vec<u64> = vec![1];
    for _ in 0..m {
        let mut carry = 0u64;
        for limb in &mut limbs {
            let v = *limb * m + carry;
            *limb = v & 0xffff_ffff;
            carry = v >> 32;
        }
        while carry > 0 {
            limbs.push(carry & 0xffff_ffff);
            carry >>= 32;
        }
    }
    let top = *limbs.last().expect("non-empty");
    (limbs.len() as u64 - 1) * 32 + (64 - top.leading_zeros() as u64)
}

pub fn resource_report(n_ports: u64, n_flow_entries: u64, n_paths: u64, m_candidates: u64) -> ResourceReport {
    let per_flow = FlowCacheEntry::MODELED_BYTES as u64;
    let sort = sort_comparisons(m_candidates);
    ResourceReport {
        per_port_bytes: PORT_STATE_BYTES,
        total_port_bytes: PORT_STATE_BYTES * n_ports,
        per_flow_bytes_formula: per_flow,
        per_flow_bytes_demo: FLOW_ENTRY_BYTES_DEMO,
        total_flow_cache_bytes_formula: per_flow * n_flow_entries,
        total_flow_cache_bytes_demo: FLOW_ENTRY_BYTES_DEMO * n_flow_entries,
        path_score_bytes: n_paths,
        per_new_flow_ops: OPS_PER_CANDIDATE * m_candidates + sort,
        sort_comparisons: sort,
    }
}

impl ResourceReport {
    pub fn render(&self) -> String {
        format!(
            "port state: {} B/port, {} B total\n\
             flow cache: {} B/entry by field sum -> {} B total\n\
             flow cache: {} B/entry (demonstration figure) -> {} B total\n\
             note: the two per-entry figures disagree; both are reported\n\
             path scores: {} B\n\
             per-new-flow ops: {} ({} sort comparisons)\n",
            self.per_port_bytes,
            self.total_port_bytes,
            self.per_flow_bytes_formula,
            self.total_flow_cache_bytes_formula,
            self.per_flow_bytes_demo,
            self.total_flow_cache_bytes_demo,
            self.path_score_bytes,
            self.per_new_flow_ops,
            self.sort_comparisons
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_example() {
        let t = ideal_fct_closed_form(SimTime::from_ms(5), 40_000_000_000, 1_000_000);
        assert_eq!(t, SimTime::from_us(5_200));
    }

    #[test]
    fn nearest_rank_examples() {
        let v: Vec<f64> = (1..=100).map(|x| x as f64).collect();
        assert_eq!(percentile(&v, 500).unwrap(), 50.0);
        assert_eq!(percentile(&v, 990).unwrap(), 99.0);
        assert_eq!(percentile(&[3.5], 10).unwrap(), 3.5);
        assert_eq!(percentile(&[2.0; 7], 990).unwrap(), 2.0);
        assert_eq!(percentile(&[], 500), Err(AnalysisError::Empty));
    }

    #[test]
    fn resource_examples() {
        let r = resource_report(48, 50_000, 10_000, 6);
        assert_eq!(r.total_port_bytes, 1152);
        assert_eq!(r.total_flow_cache_bytes_formula, 1_000_000);
        assert_eq!(r.total_flow_cache_bytes_demo, 1_200_000);
        assert_eq!(r.per_new_flow_ops, 105);
        assert_eq!(r.sort_comparisons, 15);
    }

    #[test]
    fn sort_comparisons_match_float() {
        for m in 1..200u64 {
            let f = if m < 2 { 0 } else { (m as f64 * (m as f64).log2()).floor() as u64 };
            assert_eq!(sort_comparisons(m), f, "m={m}");
        }
        assert_eq!(sort_comparisons(4), 8);
    }
}
