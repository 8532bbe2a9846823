//! Experiment presets and the plan runner.
//!
//! A plan is the cross product of variants (a policy plus weight overrides), loads and seeds.
//! Every cell is an independent single-threaded simulation; cells run on a bounded thread
//! pool and results are collected in plan order, so artifacts do not depend on scheduling.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, largest_decile, slowdown_percentiles, slowdowns, AnalysisError};
use crate::baselines::PolicyKind;
use crate::control_plane::{provision_switch, ProvisionConfig};
use crate::data_plane::{PortView, SwitchConfig, SwitchState};
use crate::engine::{self, Counters, EngineError, LinkFailure, SimConfig, SimResult};
use crate::model::{DcId, FiveTuple, Flow, LinkId, NodeId, NodeRole, SimTime, Topology, TopologyBuilder};
use crate::scenario::{Scenario, ScenarioError, TrafficSource, WeightOverrides};
use crate::traffic::{PairMode, ROCE_DST_PORT, UDP};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("writing {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("plan has no {0}")]
    EmptyPlan(&'static str),
    #[error("thread pool: {0}")]
    Pool(String),
    #[error("{0}")]
    Config(String),
}

pub const GBPS: u64 = 1_000_000_000;

pub const PRESETS: [&str; 7] = ["8dc", "herd", "ablation", "weights_global", "weights_path", "weights_cong", "failover"];

/// Knobs shared by the multi-path presets. Capacities, buffers and flow sizes are divided
/// by `scale`; delays are not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresetParams {
    pub scale: u64,
    /// Unscaled per-port switch buffer.
    pub buffer_bytes: u64,
    pub duration: SimTime,
    pub hosts_per_leaf: u32,
}

impl Default for PresetParams {
    fn default() -> Self {
        PresetParams {
            scale: 100,
            buffer_bytes: 6_000_000_000,
            duration: SimTime::from_ms(100),
            hosts_per_leaf: 4,
        }
    }
}

/// Inter-DC routes of the 8-DC preset as (Gbps, one-way ms): each capacity class has one
/// low-delay and one high-delay member.
pub const EIGHT_DC_PATHS: [(u64, u64); 6] = [(200, 250), (200, 25), (100, 100), (100, 10), (40, 50), (40, 5)];

/// Identical routes for the herd experiment.
pub const HERD_PATHS: [(u64, u64); 6] = [(100, 10); 6];

/// Node ids of interest in a multi-path topology.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiPathLayout {
    pub src_dc: DcId,
    pub dst_dc: DcId,
    pub src_dci: NodeId,
    pub dst_dci: NodeId,
    /// First inter-DC hop of each route, in route order.
    pub route_links: Vec<LinkId>,
}

fn fabric(b: &mut TopologyBuilder, dc: DcId, p: &PresetParams) -> NodeId {
    let scale = p.scale.max(1);
    let buf = (p.buffer_bytes / scale).max(1);
    let us = SimTime::from_us(1);
    let dci = b.node(NodeRole::Dci, dc);
    let spines: Vec<NodeId> = (0..2).map(|_| b.node(NodeRole::Spine, dc)).collect();
    let leaves: Vec<NodeId> = (0..4).map(|_| b.node(NodeRole::Leaf, dc)).collect();
    for &s in &spines {
        b.duplex(dci, s, 400 * GBPS / scale, us, buf);
    }
    for &l in &leaves {
        for &s in &spines {
            b.duplex(l, s, 100 * GBPS / scale, us, buf);
        }
    }
    for &l in &leaves {
        for _ in 0..p.hosts_per_leaf {
            let h = b.node(NodeRole::Host, dc);
            b.duplex(h, l, 100 * GBPS / scale, us, buf);
        }
    }
    dci
}

/// Two full leaf/spine DCs joined through one single-switch transit DC per route. Each
/// route's one-way delay is split evenly over its two inter-DC hops.
pub fn multi_path_topology(paths: &[(u64, u64)], p: &PresetParams) -> (Topology, MultiPathLayout) {
    let scale = p.scale.max(1);
    let buf = (p.buffer_bytes / scale).max(1);
    let mut b = TopologyBuilder::new();
    let src_dc = b.dc("dc1");
    let transit: Vec<DcId> = (0..paths.len()).map(|i| b.dc(format!("dc{}", i + 2))).collect();
    let dst_dc = b.dc(format!("dc{}", paths.len() + 2));
    let src_dci = fabric(&mut b, src_dc, p);
    let mids: Vec<NodeId> = transit.iter().map(|&d| b.node(NodeRole::Dci, d)).collect();
    let dst_dci = fabric(&mut b, dst_dc, p);
    let mut route_links = Vec::new();
    for (i, &(gbps, ms)) in paths.iter().enumerate() {
        let cap = gbps * GBPS / scale;
        let half = SimTime::from_ns(ms * 1_000_000 / 2);
        let (first, _) = b.duplex(src_dci, mids[i], cap, half, buf);
        b.duplex(mids[i], dst_dci, cap, half, buf);
        route_links.push(first);
    }
    (
        b.build(),
        MultiPathLayout {
            src_dc,
            dst_dc,
            src_dci,
            dst_dci,
            route_links,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub policy: PolicyKind,
    pub weights: WeightOverrides,
}

impl Variant {
    pub fn policy(policy: PolicyKind) -> Self {
        Variant {
            name: match policy {
                PolicyKind::UcmpProxy => "ucmp".to_string(),
                p => p.as_str().to_string(),
            },
            policy,
            weights: WeightOverrides::default(),
        }
    }

    pub fn lcmp(name: &str, weights: WeightOverrides) -> Self {
        Variant {
            name: name.to_string(),
            policy: PolicyKind::Lcmp,
            weights,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub name: String,
    pub scenario: Scenario,
    pub variants: Vec<Variant>,
    /// Per-mille; ignored for explicit flow lists.
    pub loads: Vec<u32>,
    pub seeds: Vec<u64>,
    pub trace: bool,
}

pub const DEFAULT_SEEDS: [u64; 3] = [1, 2, 3];

fn base_sim() -> SimConfig {
    SimConfig::default()
}

fn poisson(layout: &MultiPathLayout, p: &PresetParams, load: u32) -> TrafficSource {
    TrafficSource::Poisson {
        pair_mode: PairMode::Pair {
            src_dc: layout.src_dc,
            dst_dc: layout.dst_dc,
        },
        load_permille: load,
        duration: p.duration,
        workload: "websearch".to_string(),
        size_divisor: p.scale.max(1),
    }
}

fn weight_variants(tuples: &[(&str, WeightOverrides)]) -> Vec<Variant> {
    tuples.iter().map(|(n, w)| Variant::lcmp(n, *w)).collect()
}

pub fn preset(name: &str, params: &PresetParams) -> Result<ExperimentPlan, ExperimentError> {
    let seeds = DEFAULT_SEEDS.to_vec();
    let eight = || multi_path_topology(&EIGHT_DC_PATHS, params);
    let plan = match name {
        "8dc" => {
            let (topo, layout) = eight();
            ExperimentPlan {
                name: name.into(),
                scenario: Scenario {
                    topology: Arc::new(topo),
                    sim: base_sim(),
                    traffic: poisson(&layout, params, 300),
                    seed: 1,
                },
                variants: [PolicyKind::Lcmp, PolicyKind::Ecmp, PolicyKind::UcmpProxy]
                    .into_iter()
                    .map(Variant::policy)
                    .collect(),
                loads: vec![300, 500],
                seeds,
                trace: false,
            }
        }
        "ablation" | "weights_global" | "weights_path" | "weights_cong" => {
            let (topo, layout) = eight();
            let w = WeightOverrides::default;
            let variants = match name {
                "ablation" => weight_variants(&[
                    ("lcmp", w()),
                    ("rm-alpha", WeightOverrides { alpha: Some(0), beta: Some(1), ..w() }),
                    ("rm-beta", WeightOverrides { alpha: Some(3), beta: Some(0), ..w() }),
                ]),
                "weights_global" => weight_variants(&[
                    ("ab-3-1", WeightOverrides { alpha: Some(3), beta: Some(1), ..w() }),
                    ("ab-1-1", WeightOverrides { alpha: Some(1), beta: Some(1), ..w() }),
                    ("ab-1-3", WeightOverrides { alpha: Some(1), beta: Some(3), ..w() }),
                ]),
                "weights_path" => weight_variants(&[
                    ("path-3-1", WeightOverrides { w_dl: Some(3), w_lc: Some(1), ..w() }),
                    ("path-1-1", WeightOverrides { w_dl: Some(1), w_lc: Some(1), ..w() }),
                    ("path-1-3", WeightOverrides { w_dl: Some(1), w_lc: Some(3), ..w() }),
                ]),
                _ => weight_variants(&[
                    ("cong-2-1-1", WeightOverrides { w_ql: Some(2), w_tl: Some(1), w_dp: Some(1), ..w() }),
                    ("cong-1-2-1", WeightOverrides { w_ql: Some(1), w_tl: Some(2), w_dp: Some(1), ..w() }),
                    ("cong-1-1-2", WeightOverrides { w_ql: Some(1), w_tl: Some(1), w_dp: Some(2), ..w() }),
                ]),
            };
            ExperimentPlan {
                name: name.into(),
                scenario: Scenario {
                    topology: Arc::new(topo),
                    sim: base_sim(),
                    traffic: poisson(&layout, params, 300),
                    seed: 1,
                },
                variants,
                loads: vec![300],
                seeds,
                trace: false,
            }
        }
        "herd" => {
            let (topo, layout) = multi_path_topology(&HERD_PATHS, params);
            let flows = herd_flows(&topo, &layout, HERD_FLOWS, HERD_FLOW_BYTES / params.scale.max(1));
            ExperimentPlan {
                name: name.into(),
                scenario: Scenario {
                    topology: Arc::new(topo),
                    sim: base_sim(),
                    traffic: TrafficSource::Flows(flows),
                    seed: 1,
                },
                variants: [PolicyKind::Lcmp, PolicyKind::MinCost]
                    .into_iter()
                    .map(Variant::policy)
                    .collect(),
                loads: vec![0],
                seeds: vec![1],
                trace: true,
            }
        }
        "failover" => {
            let (topo, layout) = multi_path_topology(&EIGHT_DC_PATHS, params);
            let setup = failover_setup(&topo, &layout, params, &base_sim())?;
            let mut sim = base_sim();
            sim.failures.push(setup.failure);
            ExperimentPlan {
                name: name.into(),
                scenario: Scenario {
                    topology: Arc::new(topo),
                    sim,
                    traffic: TrafficSource::Flows(vec![setup.flow]),
                    seed: 1,
                },
                variants: vec![Variant::policy(PolicyKind::Lcmp)],
                loads: vec![0],
                seeds: vec![1],
                trace: true,
            }
        }
        other => return Err(ExperimentError::UnknownPreset(other.to_string())),
    };
    Ok(plan)
}

pub const HERD_FLOWS: usize = 200;
pub const HERD_FLOW_BYTES: u64 = 1_000_000;

/// `n` flows from DC1 hosts to DC8 hosts, all arriving at time zero.
pub fn herd_flows(topo: &Topology, layout: &MultiPathLayout, n: usize, size: u64) -> Vec<Flow> {
    let src = topo.hosts_in(layout.src_dc);
    let dst = topo.hosts_in(layout.dst_dc);
    (0..n)
        .map(|i| Flow {
            id: i as u64,
            five_tuple: FiveTuple {
                src_host: src[i % src.len()],
                dst_host: dst[(i / src.len() + i) % dst.len()],
                src_port: 10_000 + i as u16,
                dst_port: ROCE_DST_PORT,
                protocol: UDP,
            },
            size: size.max(1),
            arrival: SimTime::ZERO,
        })
        .collect()
}

struct NoQueues;

impl PortView for NoQueues {
    fn queue_bytes(&self, _: LinkId) -> u64 {
        0
    }
    fn link_alive(&self, _: LinkId) -> bool {
        true
    }
}

/// Per-port flow counts when `n` new flows hit one DCI switch at the same instant, with the
/// switch state frozen (no sampling between decisions).
pub fn herd_decisions(
    topo: &Topology,
    layout: &MultiPathLayout,
    policy: PolicyKind,
    n: usize,
    provision: &ProvisionConfig,
) -> Result<BTreeMap<u32, usize>, ExperimentError> {
    let tables = provision_switch(topo, layout.src_dci, provision).map_err(EngineError::from)?;
    let mut sw = SwitchState::new(
        Arc::new(tables),
        SwitchConfig {
            policy,
            ..SwitchConfig::default()
        },
    );
    let mut counts = BTreeMap::new();
    for f in herd_flows(topo, layout, n, 1) {
        let d = sw
            .handle_packet(f.key(), layout.dst_dc, SimTime::ZERO, &NoQueues)
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        *counts.entry(d.egress_port).or_insert(0) += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailoverSetup {
    pub flow: Flow,
    /// Inter-DC link the flow uses when the network is idle.
    pub idle_link: LinkId,
    pub failure: LinkFailure,
}

pub const FAILOVER_FLOW_BYTES: u64 = 200_000_000;

/// One long DC1-to-DC8 flow, and a failure of the link its idle-network decision picks,
/// timed at the middle of its transmission.
pub fn failover_setup(
    topo: &Topology,
    layout: &MultiPathLayout,
    params: &PresetParams,
    sim: &SimConfig,
) -> Result<FailoverSetup, ExperimentError> {
    let flow = herd_flows(topo, layout, 1, FAILOVER_FLOW_BYTES / params.scale.max(1)).remove(0);
    let tables = provision_switch(topo, layout.src_dci, &sim.provision).map_err(EngineError::from)?;
    let link_of = |port: u32| tables.ports[port as usize];
    let mut sw = SwitchState::new(Arc::new(tables.clone()), sim.switch);
    let d = sw
        .handle_packet(flow.key(), layout.dst_dc, SimTime::ZERO, &NoQueues)
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let idle_link = link_of(d.egress_port);
    let host_rate = 100 * GBPS / params.scale.max(1);
    let send_time = crate::model::serialization_time(flow.size, host_rate);
    Ok(FailoverSetup {
        flow,
        idle_link,
        failure: LinkFailure {
            link: idle_link,
            at: SimTime(send_time.as_ns() / 2),
            recover: None,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub plan: String,
    pub variant: String,
    pub policy: PolicyKind,
    pub weights: WeightOverrides,
    pub load_permille: u32,
    pub seed: u64,
    pub flows: usize,
    pub finished: usize,
    pub unfinished: usize,
    pub p50: Option<f64>,
    pub p90: Option<f64>,
    pub p99: Option<f64>,
    pub p50_largest_decile: Option<f64>,
    pub p99_largest_decile: Option<f64>,
    pub counters: Counters,
    pub lossless_violated: bool,
    pub end_time_ns: u64,
    /// Bytes carried by each route's first inter-DC hop out of the source DCI, by link id.
    pub inter_dc_bytes: BTreeMap<LinkId, u64>,
}

pub struct CellOutput {
    pub summary: CellSummary,
    pub result: SimResult,
}

pub fn cell_config(plan: &ExperimentPlan, variant: &Variant) -> Result<SimConfig, ExperimentError> {
    let mut sim = plan.scenario.sim.clone();
    sim.switch.policy = variant.policy;
    sim.switch.trace = plan.trace;
    variant.weights.apply(&mut sim)?;
    Ok(sim)
}

pub fn run_cell(plan: &ExperimentPlan, variant: &Variant, load: u32, seed: u64) -> Result<CellOutput, ExperimentError> {
    let sim = cell_config(plan, variant)?;
    let mtu = sim.mtu;
    let flows = plan.scenario.flows(Some(load), seed)?;
    let topo = Arc::clone(&plan.scenario.topology);
    let result = engine::simulate(Arc::clone(&topo), flows, sim)?;
    let summary = summarize(plan, variant, load, seed, &topo, &result, mtu)?;
    Ok(CellOutput { summary, result })
}

fn summarize(
    plan: &ExperimentPlan,
    variant: &Variant,
    load: u32,
    seed: u64,
    topo: &Topology,
    result: &SimResult,
    mtu: u32,
) -> Result<CellSummary, ExperimentError> {
    let records = slowdowns(topo, result, mtu)?;
    let ps = slowdown_percentiles(&records, &[500, 900, 990]).ok();
    let large = slowdown_percentiles(&largest_decile(&records), &[500, 990]).ok();
    let inter_dc_bytes = topo
        .links
        .iter()
        .filter(|l| topo.is_inter_dc(l) && !topo.hosts_in(topo.dc_of(l.src)).is_empty())
        .map(|l| (l.id, result.links[l.id as usize].bytes))
        .collect();
    Ok(CellSummary {
        plan: plan.name.clone(),
        variant: variant.name.clone(),
        policy: variant.policy,
        weights: variant.weights,
        load_permille: load,
        seed,
        flows: result.flows.len(),
        finished: records.len(),
        unfinished: result.flows.len() - records.len(),
        p50: ps.as_ref().map(|v| v[0]),
        p90: ps.as_ref().map(|v| v[1]),
        p99: ps.as_ref().map(|v| v[2]),
        p50_largest_decile: large.as_ref().map(|v| v[0]),
        p99_largest_decile: large.as_ref().map(|v| v[1]),
        counters: result.counters,
        lossless_violated: result.lossless_violated,
        end_time_ns: result.end_time.as_ns(),
        inter_dc_bytes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub plan: String,
    pub cells: Vec<CellSummary>,
    pub failed: bool,
}

impl PlanReport {
    /// Mean p50/p99 over seeds, one row per variant and load.
    pub fn table(&self) -> String {
        let mut rows: Vec<(String, u32)> = Vec::new();
        for c in &self.cells {
            let k = (c.variant.clone(), c.load_permille);
            if !rows.contains(&k) {
                rows.push(k);
            }
        }
        let mut s = String::new();
        let _ = writeln!(s, "{:<14} {:>6} {:>6} {:>10} {:>10} {:>8}", "variant", "load", "seeds", "p50", "p99", "lossless");
        for (v, load) in rows {
            let cells: Vec<&CellSummary> =
                self.cells.iter().filter(|c| c.variant == v && c.load_permille == load).collect();
            let mean = |f: fn(&CellSummary) -> Option<f64>| {
                let v: Vec<f64> = cells.iter().filter_map(|c| f(c)).collect();
                if v.is_empty() {
                    "-".to_string()
                } else {
                    format!("{:.3}", v.iter().sum::<f64>() / v.len() as f64)
                }
            };
            let ok = if cells.iter().any(|c| c.lossless_violated) { "VIOLATED" } else { "ok" };
            let _ = writeln!(
                s,
                "{:<14} {:>6} {:>6} {:>10} {:>10} {:>8}",
                v,
                load,
                cells.len(),
                mean(|c| c.p50),
                mean(|c| c.p99),
                ok
            );
        }
        s
    }
}

fn write(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    let io = |source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, contents).map_err(io)
}

pub fn cell_dir(out: &Path, variant: &str, load: u32, seed: u64) -> PathBuf {
    out.join(variant).join(load.to_string()).join(seed.to_string())
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("summary types serialize");
    s.push('\n');
    s
}

/// Runs every cell, writes artifacts under `out` when given, and returns the report.
/// `failed` is set when any cell violated the lossless assumption.
pub fn run_plan(plan: &ExperimentPlan, out: Option<&Path>, jobs: usize) -> Result<PlanReport, ExperimentError> {
    if plan.variants.is_empty() {
        return Err(ExperimentError::EmptyPlan("variants"));
    }
    if plan.loads.is_empty() {
        return Err(ExperimentError::EmptyPlan("loads"));
    }
    if plan.seeds.is_empty() {
        return Err(ExperimentError::EmptyPlan("seeds"));
    }
    let mut cells = Vec::new();
    for v in &plan.variants {
        for &l in &plan.loads {
            for &s in &plan.seeds {
                cells.push((v, l, s));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    let outputs: Vec<Result<CellSummary, ExperimentError>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(v, l, s)| {
                let cell = run_cell(plan, v, l, s)?;
                if let Some(out) = out {
                    let dir = cell_dir(out, &v.name, l, s);
                    let topo = &plan.scenario.topology;
                    write(&dir.join("flows.csv"), &cell.result.flows_csv())?;
                    write(&dir.join("links.csv"), &cell.result.links_csv())?;
                    let duration = cell.result.end_time.max(SimTime(1));
                    write(&dir.join("utilization.csv"), &analysis::utilization_csv(&cell.result, topo, duration)?)?;
                    write(&dir.join("summary.json"), &to_json(&cell.summary))?;
                    if plan.trace {
                        write(&dir.join("trace.csv"), &cell.result.trace_csv())?;
                    }
                }
                Ok(cell.summary)
            })
            .collect()
    });
    let cells = outputs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let report = PlanReport {
        plan: plan.name.clone(),
        failed: cells.iter().any(|c| c.lossless_violated),
        cells,
    };
    if let Some(out) = out {
        write(&out.join("summary.json"), &to_json(&report))?;
        write(&out.join("table.txt"), &report.table())?;
    }
    Ok(report)
}
