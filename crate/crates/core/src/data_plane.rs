//! On-switch decision path: congestion estimator, fused cost, diversity-preserving selection,
//! and the sticky flow cache with lazy fast-failover.
//!
//! All arithmetic is integer add/subtract/shift/compare plus table lookups.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{ecmp_select, ucmp_select, PolicyKind};
use crate::control_plane::{CandidatePath, QueueTables, Score8, SwitchTables, TrendTables};
use crate::hash::hash_index;
use crate::model::{DcId, LinkId, NodeId, SimTime};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DataPlaneError {
    #[error("sample at {now} precedes last sample at {last}")]
    ClockRegression { last: SimTime, now: SimTime },
    #[error("empty candidate list")]
    EmptyCandidates,
    #[error("no candidate path to dc {0}")]
    NoRoute(DcId),
    #[error("no live candidate path to dc {0}")]
    NoLiveCandidate(DcId),
    #[error("fusion weights alpha and beta are both zero")]
    DegenerateFusion,
    #[error("congestion weights {sum} exceed 2^{shift}")]
    WeightOverflow { sum: u32, shift: u32 },
}

/// Per-egress-port registers sampled by the monitor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortCongestionState {
    pub queue_cur: u32,
    pub queue_prev: u32,
    pub trend: i32,
    pub dur_cnt: u32,
    pub last_sample: SimTime,
    pub alive: bool,
}

impl Default for PortCongestionState {
    fn default() -> Self {
        PortCongestionState {
            queue_cur: 0,
            queue_prev: 0,
            trend: 0,
            dur_cnt: 0,
            last_sample: SimTime::ZERO,
            alive: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CongestionWeights {
    pub w_ql: u32,
    pub w_tl: u32,
    pub w_dp: u32,
    pub s_cong: u32,
    /// Trend smoothing shift.
    pub k: u32,
    /// Queue level index at or above which the duration counter grows.
    pub high_water_level: usize,
    pub d_shift: u32,
    /// Fallback to pure minimum cost when every candidate is at or above this.
    pub cong_high: Score8,
}

pub const DEFAULT_HIGH_WATER_LEVEL: usize = 2;

impl Default for CongestionWeights {
    fn default() -> Self {
        CongestionWeights {
            w_ql: 2,
            w_tl: 1,
            w_dp: 1,
            s_cong: 2,
            k: 3,
            high_water_level: DEFAULT_HIGH_WATER_LEVEL,
            d_shift: 2,
            cong_high: Score8::new(192),
        }
    }
}

impl CongestionWeights {
    /// Defaults with the given component weights and `s_cong = ceil(log2(sum))`.
    pub fn with_weights(w_ql: u32, w_tl: u32, w_dp: u32) -> Result<Self, DataPlaneError> {
        let w = CongestionWeights {
            w_ql,
            w_tl,
            w_dp,
            s_cong: crate::control_plane::shift_for(w_ql + w_tl + w_dp),
            ..Default::default()
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), DataPlaneError> {
        let sum = self.w_ql + self.w_tl + self.w_dp;
        if self.s_cong >= 31 || sum > 1 << self.s_cong {
            return Err(DataPlaneError::WeightOverflow {
                sum,
                shift: self.s_cong,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub alpha: u32,
    pub beta: u32,
}

impl FusionWeights {
    pub fn new(alpha: u32, beta: u32) -> Result<Self, DataPlaneError> {
        if alpha == 0 && beta == 0 {
            return Err(DataPlaneError::DegenerateFusion);
        }
        Ok(FusionWeights { alpha, beta })
    }
}

impl Default for FusionWeights {
    fn default() -> Self {
        FusionWeights { alpha: 3, beta: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowCacheEntry {
    pub flow_id: u64,
    pub out_dev_idx: u32,
    pub last_seen: SimTime,
}

impl FlowCacheEntry {
    /// Modelled register footprint: 8 B id, 4 B port index, 8 B timestamp.
    pub const MODELED_BYTES: usize = 8 + 4 + 8;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostedCandidate {
    pub egress_port: u32,
    pub c_path: Score8,
    pub c_cong: Score8,
    pub fused: u32,
}

/// Level index of `value`: the number of thresholds at or below it, capped at `n - 1`.
/// Non-positive values are level 0.
pub fn level_index(value: i64, thresholds: &[u64]) -> usize {
    if value <= 0 || thresholds.is_empty() {
        return 0;
    }
    let v = value as u64;
    let count = thresholds.iter().take_while(|&&t| t <= v).count();
    count.min(thresholds.len() - 1)
}

pub fn quantize_level(value: i64, thresholds: &[u64], level_score: &[Score8]) -> Score8 {
    if thresholds.is_empty() {
        return Score8::MIN;
    }
    level_score[level_index(value, thresholds)]
}

/// One monitor sample of a port: shifts the queue registers, updates the trend accumulator
/// `T - (T >> k) + (delta >> k)` with arithmetic shifts, and moves the duration counter.
pub fn sample_port(
    state: &PortCongestionState,
    queue_bytes_now: u64,
    now: SimTime,
    tables: &QueueTables,
    weights: &CongestionWeights,
) -> Result<PortCongestionState, DataPlaneError> {
    if now < state.last_sample {
        return Err(DataPlaneError::ClockRegression {
            last: state.last_sample,
            now,
        });
    }
    let queue_prev = state.queue_cur;
    let queue_cur = queue_bytes_now.min(u32::MAX as u64) as u32;
    let delta = (queue_cur as i64 - queue_prev as i64).clamp(i32::MIN as i64, i32::MAX as i64) as i32;
    let t = state.trend;
    let trend = (t as i64 - (t >> weights.k) as i64 + (delta >> weights.k) as i64)
        .clamp(i32::MIN as i64, i32::MAX as i64) as i32;
    let level = level_index(queue_cur as i64, &tables.q_thresh);
    let dur_cnt = if level >= weights.high_water_level {
        state.dur_cnt.saturating_add(1)
    } else {
        state.dur_cnt.saturating_sub(1)
    };
    Ok(PortCongestionState {
        queue_cur,
        queue_prev,
        trend,
        dur_cnt,
        last_sample: now,
        alive: state.alive,
    })
}

/// `min((w_ql*Q + w_tl*T + w_dp*D) >> s_cong, 255)`.
pub fn calc_cong_score(
    state: &PortCongestionState,
    queue: &QueueTables,
    trend: &TrendTables,
    weights: &CongestionWeights,
) -> Score8 {
    let q = quantize_level(state.queue_cur as i64, &queue.q_thresh, &queue.level_score);
    let t = quantize_level(state.trend as i64, &trend.t_thresh, &trend.level_score);
    let d = Score8::saturating((state.dur_cnt >> weights.d_shift) as u64);
    let sum = weights.w_ql as u64 * q.get() as u64
        + weights.w_tl as u64 * t.get() as u64
        + weights.w_dp as u64 * d.get() as u64;
    Score8::saturating(sum >> weights.s_cong)
}

/// `alpha * c_path + beta * c_cong`, unclamped.
pub fn fused_cost(c_path: Score8, c_cong: Score8, w: &FusionWeights) -> u32 {
    w.alpha * c_path.get() + w.beta * c_cong.get()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub egress_port: u32,
    /// Size of the low-cost set the hash ran over; 1 on the fallback branch.
    pub retained: usize,
    pub fallback: bool,
}

/// Candidates ordered by fused cost, ties by ascending egress port.
pub fn sort_candidates(candidates: &[CostedCandidate]) -> Vec<CostedCandidate> {
    let mut v = candidates.to_vec();
    v.sort_by_key(|c| (c.fused, c.egress_port));
    v
}

/// Two-stage selection: keep the cheaper `ceil(m/2)` candidates and hash the flow into them,
/// or take the cheapest outright when every candidate is at or above `cong_high`.
pub fn select_egress(
    candidates: &[CostedCandidate],
    flow_key: u64,
    salt: u64,
    weights: &CongestionWeights,
) -> Result<Selection, DataPlaneError> {
    if candidates.is_empty() {
        return Err(DataPlaneError::EmptyCandidates);
    }
    let sorted = sort_candidates(candidates);
    if sorted.iter().all(|c| c.c_cong >= weights.cong_high) {
        return Ok(Selection {
            egress_port: sorted[0].egress_port,
            retained: 1,
            fallback: true,
        });
    }
    let keep = sorted.len().div_ceil(2);
    let idx = hash_index(flow_key, salt, keep as u64) as usize;
    Ok(Selection {
        egress_port: sorted[idx].egress_port,
        retained: keep,
        fallback: false,
    })
}

/// Minimum fused cost, no filtering or hashing. The herd-effect ablation.
pub fn select_min_cost(candidates: &[CostedCandidate]) -> Result<Selection, DataPlaneError> {
    let best = candidates
        .iter()
        .min_by_key(|c| (c.fused, c.egress_port))
        .ok_or(DataPlaneError::EmptyCandidates)?;
    Ok(Selection {
        egress_port: best.egress_port,
        retained: 1,
        fallback: false,
    })
}

/// Bounded flow-id to egress map, with an age index for eviction and idle GC.
#[derive(Debug, Clone, Default)]
pub struct FlowCache {
    entries: HashMap<u64, FlowCacheEntry>,
    by_age: BTreeSet<(SimTime, u64)>,
    capacity: usize,
}

impl FlowCache {
    pub fn new(capacity: usize) -> Self {
        FlowCache {
            entries: HashMap::new(),
            by_age: BTreeSet::new(),
            capacity: capacity.max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, flow_id: u64) -> Option<&FlowCacheEntry> {
        self.entries.get(&flow_id)
    }

    pub fn touch(&mut self, flow_id: u64, now: SimTime) {
        if let Some(e) = self.entries.get_mut(&flow_id) {
            self.by_age.remove(&(e.last_seen, flow_id));
            e.last_seen = now;
            self.by_age.insert((now, flow_id));
        }
    }

    pub fn remove(&mut self, flow_id: u64) -> Option<FlowCacheEntry> {
        let e = self.entries.remove(&flow_id)?;
        self.by_age.remove(&(e.last_seen, flow_id));
        Some(e)
    }

    /// Inserts, first evicting the entry with the oldest `last_seen` (ties: smallest id)
    /// when full. Returns the evicted entry.
    pub fn insert(&mut self, entry: FlowCacheEntry) -> Option<FlowCacheEntry> {
        let mut evicted = None;
        if let Some(old) = self.entries.get(&entry.flow_id) {
            self.by_age.remove(&(old.last_seen, entry.flow_id));
        } else if self.entries.len() >= self.capacity {
            if let Some((_, victim)) = self.by_age.pop_first() {
                evicted = self.entries.remove(&victim);
            }
        }
        self.by_age.insert((entry.last_seen, entry.flow_id));
        self.entries.insert(entry.flow_id, entry);
        evicted
    }

    /// Drops entries idle for strictly longer than `idle_timeout`.
    pub fn gc(&mut self, now: SimTime, idle_timeout: SimTime) -> usize {
        let mut n = 0;
        while let Some(&(seen, id)) = self.by_age.first() {
            if now.saturating_sub(seen) <= idle_timeout {
                break;
            }
            self.by_age.pop_first();
            self.entries.remove(&id);
            n += 1;
        }
        n
    }
}

/// What the switch reads from the forwarding engine.
pub trait PortView {
    fn queue_bytes(&self, link: LinkId) -> u64;
    fn link_alive(&self, link: LinkId) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    CacheHit,
    NewFlow,
    FailoverReroute,
}

impl DecisionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionKind::CacheHit => "cache_hit",
            DecisionKind::NewFlow => "new_flow",
            DecisionKind::FailoverReroute => "failover_reroute",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub egress_port: u32,
    /// Index into the candidate list for the destination DC.
    pub candidate: usize,
    pub kind: DecisionKind,
    /// Present on full decisions when tracing is on.
    pub trace: Option<DecisionTrace>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionTrace {
    pub candidates: Vec<CostedCandidate>,
    pub retained: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchConfig {
    pub policy: PolicyKind,
    pub fusion: FusionWeights,
    pub congestion: CongestionWeights,
    pub cache_capacity: usize,
    pub sample_interval: SimTime,
    pub trace: bool,
}

impl Default for SwitchConfig {
    fn default() -> Self {
        SwitchConfig {
            policy: PolicyKind::Lcmp,
            fusion: FusionWeights::default(),
            congestion: CongestionWeights::default(),
            cache_capacity: 50_000,
            sample_interval: SimTime::from_us(50),
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchStats {
    pub cache_hits: u64,
    pub new_flows: u64,
    pub failovers: u64,
    pub evictions: u64,
    pub gc_evictions: u64,
    pub routing_errors: u64,
    pub samples: u64,
}

/// Runtime state of one DCI switch. Owned by a single engine; no internal locking.
#[derive(Debug, Clone)]
pub struct SwitchState {
    tables: Arc<SwitchTables>,
    config: SwitchConfig,
    salt: u64,
    ports: Vec<PortCongestionState>,
    cache: FlowCache,
    last_refresh: Option<SimTime>,
    stats: SwitchStats,
}

impl SwitchState {
    pub fn new(tables: Arc<SwitchTables>, config: SwitchConfig) -> Self {
        let ports = vec![PortCongestionState::default(); tables.ports.len()];
        SwitchState {
            salt: tables.switch as u64,
            cache: FlowCache::new(config.cache_capacity),
            tables,
            config,
            ports,
            last_refresh: None,
            stats: SwitchStats::default(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.tables.switch
    }

    pub fn tables(&self) -> &SwitchTables {
        &self.tables
    }

    pub fn config(&self) -> &SwitchConfig {
        &self.config
    }

    pub fn stats(&self) -> &SwitchStats {
        &self.stats
    }

    pub fn port_state(&self, port: usize) -> &PortCongestionState {
        &self.ports[port]
    }

    pub fn cache(&self) -> &FlowCache {
        &self.cache
    }

    pub fn port_of_link(&self, link: LinkId) -> Option<usize> {
        self.tables.ports.iter().position(|&l| l == link)
    }

    pub fn set_port_alive(&mut self, port: usize, alive: bool) {
        self.ports[port].alive = alive;
    }

    /// Samples every port.
    pub fn sample_all(&mut self, now: SimTime, view: &impl PortView) -> Result<(), DataPlaneError> {
        for (i, &link) in self.tables.ports.iter().enumerate() {
            self.ports[i] = sample_port(
                &self.ports[i],
                view.queue_bytes(link),
                now,
                &self.tables.queue[i],
                &self.config.congestion,
            )?;
        }
        self.last_refresh = Some(now);
        self.stats.samples += 1;
        Ok(())
    }

    /// Samples only if at least one sampling interval has passed since the last refresh.
    pub fn refresh_if_due(&mut self, now: SimTime, view: &impl PortView) -> Result<(), DataPlaneError> {
        let due = self
            .last_refresh
            .is_none_or(|t| now.saturating_sub(t) >= self.config.sample_interval);
        if due {
            self.sample_all(now, view)?;
        }
        Ok(())
    }

    pub fn cong_score(&self, port: usize) -> Score8 {
        calc_cong_score(
            &self.ports[port],
            &self.tables.queue[port],
            self.tables.trend_for_port(port),
            &self.config.congestion,
        )
    }

    pub fn costed(&self, candidate: &CandidatePath) -> CostedCandidate {
        let c_cong = self.cong_score(candidate.egress_port as usize);
        CostedCandidate {
            egress_port: candidate.egress_port,
            c_path: candidate.c_path,
            c_cong,
            fused: fused_cost(candidate.c_path, c_cong, &self.config.fusion),
        }
    }

    fn candidate_alive(&self, c: &CandidatePath, view: &impl PortView) -> bool {
        self.ports[c.egress_port as usize].alive && c.hop_links.iter().all(|&l| view.link_alive(l))
    }

    /// Per-packet entry point: cache hit, new-flow decision, or failover re-decision.
    pub fn handle_packet(
        &mut self,
        flow_key: u64,
        dst_dc: DcId,
        now: SimTime,
        view: &impl PortView,
    ) -> Result<Decision, DataPlaneError> {
        let tables = Arc::clone(&self.tables);
        let cands = tables.candidates_to(dst_dc);
        if cands.is_empty() {
            self.stats.routing_errors += 1;
            return Err(DataPlaneError::NoRoute(dst_dc));
        }
        let mut kind = DecisionKind::NewFlow;
        if let Some(entry) = self.cache.get(flow_key).copied() {
            let hit = cands
                .iter()
                .position(|c| c.egress_port == entry.out_dev_idx)
                .filter(|&i| self.candidate_alive(&cands[i], view));
            match hit {
                Some(i) => {
                    self.cache.touch(flow_key, now);
                    self.stats.cache_hits += 1;
                    return Ok(Decision {
                        egress_port: entry.out_dev_idx,
                        candidate: i,
                        kind: DecisionKind::CacheHit,
                        trace: None,
                    });
                }
                None => {
                    self.cache.remove(flow_key);
                    kind = DecisionKind::FailoverReroute;
                }
            }
        }

        let live: Vec<usize> = (0..cands.len())
            .filter(|&i| self.candidate_alive(&cands[i], view))
            .collect();
        if live.is_empty() {
            self.stats.routing_errors += 1;
            return Err(DataPlaneError::NoLiveCandidate(dst_dc));
        }

        let (egress_port, trace) = match self.config.policy {
            PolicyKind::Lcmp | PolicyKind::MinCost => {
                self.refresh_if_due(now, view)?;
                let costed: Vec<CostedCandidate> = live.iter().map(|&i| self.costed(&cands[i])).collect();
                let sel = if self.config.policy == PolicyKind::Lcmp {
                    select_egress(&costed, flow_key, self.salt, &self.config.congestion)?
                } else {
                    select_min_cost(&costed)?
                };
                let trace = self.config.trace.then_some(DecisionTrace {
                    candidates: costed,
                    retained: sel.retained,
                });
                (sel.egress_port, trace)
            }
            PolicyKind::Ecmp => {
                let ports: Vec<u32> = live.iter().map(|&i| cands[i].egress_port).collect();
                let p = ecmp_select(&ports, flow_key, self.salt)?;
                (p, self.config.trace.then(|| self.plain_trace(cands, &live)))
            }
            PolicyKind::UcmpProxy => {
                let weighted: Vec<(u32, u64)> = live
                    .iter()
                    .map(|&i| (cands[i].egress_port, cands[i].bottleneck_capacity))
                    .collect();
                let p = ucmp_select(&weighted, flow_key, self.salt)?;
                (p, self.config.trace.then(|| self.plain_trace(cands, &live)))
            }
        };
        let candidate = cands
            .iter()
            .position(|c| c.egress_port == egress_port)
            .ok_or(DataPlaneError::EmptyCandidates)?;

        if self
            .cache
            .insert(FlowCacheEntry {
                flow_id: flow_key,
                out_dev_idx: egress_port,
                last_seen: now,
            })
            .is_some()
        {
            self.stats.evictions += 1;
        }
        match kind {
            DecisionKind::FailoverReroute => self.stats.failovers += 1,
            _ => self.stats.new_flows += 1,
        }
        Ok(Decision {
            egress_port,
            candidate,
            kind,
            trace,
        })
    }

    fn plain_trace(&self, cands: &[CandidatePath], live: &[usize]) -> DecisionTrace {
        DecisionTrace {
            candidates: live.iter().map(|&i| self.costed(&cands[i])).collect(),
            retained: live.len(),
        }
    }

    pub fn gc_flow_cache(&mut self, now: SimTime, idle_timeout: SimTime) -> usize {
        let n = self.cache.gc(now, idle_timeout);
        self.stats.gc_evictions += n as u64;
        n
    }
}
