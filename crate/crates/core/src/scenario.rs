//! Scenario files (JSON) and their runtime form.
//!
//! Capacities in a file are used as given; presets apply their scale divisor before
//! building. Links are directed unless `duplex` is set, in which case the reverse link gets
//! the next id.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::PolicyKind;
use crate::control_plane::{DelayScoring, PathQualityWeights};
use crate::data_plane::{CongestionWeights, FusionWeights};
use crate::engine::{LinkFailure, SimConfig};
use crate::model::{DcId, FiveTuple, Flow, LinkId, NodeId, NodeRole, SimTime, Topology, TopologyBuilder};
use crate::traffic::{self, PairMode, TrafficSpec, ROCE_DST_PORT, UDP};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("reading {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing scenario")]
    Json(#[from] serde_json::Error),
    #[error("node {index} has id {id}; ids must be dense and in order")]
    NodeOrder { index: usize, id: NodeId },
    #[error("node {node} refers to unknown dc {dc}")]
    UnknownDc { node: NodeId, dc: DcId },
    #[error("link {index}: unknown endpoint {node}")]
    UnknownNode { index: usize, node: NodeId },
    #[error("link {index}: capacity {gbps} Gbit/s is not a valid rate")]
    Capacity { index: usize, gbps: f64 },
    #[error("invalid weights: {0}")]
    Weights(String),
    #[error(transparent)]
    Traffic(#[from] traffic::TrafficError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: NodeId,
    pub role: NodeRole,
    pub dc: DcId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub src: NodeId,
    pub dst: NodeId,
    /// Decimal Gbit/s, converted to whole bits per second on load.
    pub capacity_gbps: f64,
    pub delay_us: u64,
    pub buffer_bytes: u64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub duplex: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureSpec {
    pub link: LinkId,
    pub at_ns: u64,
    #[serde(default)]
    pub recover_ns: Option<u64>,
}

/// Optional weight overrides; unset fields keep the defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_dl: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_lc: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_ql: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_tl: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_dp: Option<u32>,
}

impl WeightOverrides {
    /// Later values win.
    pub fn merge(self, over: WeightOverrides) -> WeightOverrides {
        WeightOverrides {
            alpha: over.alpha.or(self.alpha),
            beta: over.beta.or(self.beta),
            w_dl: over.w_dl.or(self.w_dl),
            w_lc: over.w_lc.or(self.w_lc),
            w_ql: over.w_ql.or(self.w_ql),
            w_tl: over.w_tl.or(self.w_tl),
            w_dp: over.w_dp.or(self.w_dp),
        }
    }

    pub fn apply(&self, cfg: &mut SimConfig) -> Result<(), ScenarioError> {
        let werr = |e: &dyn std::fmt::Display| ScenarioError::Weights(e.to_string());
        let f = cfg.switch.fusion;
        cfg.switch.fusion =
            FusionWeights::new(self.alpha.unwrap_or(f.alpha), self.beta.unwrap_or(f.beta)).map_err(|e| werr(&e))?;
        if self.w_dl.is_some() || self.w_lc.is_some() {
            let p = cfg.provision.path_weights;
            cfg.provision.path_weights =
                PathQualityWeights::with_default_shift(self.w_dl.unwrap_or(p.w_dl), self.w_lc.unwrap_or(p.w_lc))
                    .map_err(|e| werr(&e))?;
        }
        if self.w_ql.is_some() || self.w_tl.is_some() || self.w_dp.is_some() {
            let c = cfg.switch.congestion;
            let w = CongestionWeights::with_weights(
                self.w_ql.unwrap_or(c.w_ql),
                self.w_tl.unwrap_or(c.w_tl),
                self.w_dp.unwrap_or(c.w_dp),
            )
            .map_err(|e| werr(&e))?;
            cfg.switch.congestion = CongestionWeights {
                w_ql: w.w_ql,
                w_tl: w.w_tl,
                w_dp: w.w_dp,
                s_cong: w.s_cong,
                ..c
            };
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingSpec {
    #[serde(default = "default_policy")]
    pub policy: PolicyKind,
    #[serde(default, flatten)]
    pub weights: WeightOverrides,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_shift: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high_water_level: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_reference_bps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_capacity: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idle_timeout_ns: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<FailureSpec>,
}

fn default_policy() -> PolicyKind {
    PolicyKind::Lcmp
}

impl Default for RoutingSpec {
    fn default() -> Self {
        RoutingSpec {
            policy: PolicyKind::Lcmp,
            weights: WeightOverrides::default(),
            delay_shift: None,
            high_water_level: None,
            capacity_reference_bps: None,
            cache_capacity: None,
            idle_timeout_ns: None,
            failures: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mtu: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ecn_shift: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_ns: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub src: NodeId,
    pub dst: NodeId,
    pub size: u64,
    pub arrival_ns: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src_port: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrafficFileSpec {
    Poisson {
        load_permille: u32,
        duration_ns: u64,
        workload: String,
        #[serde(default = "one")]
        size_divisor: u64,
        /// `[src_dc, dst_dc]`; absent means all-to-all.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pair: Option<[DcId; 2]>,
    },
    Flows {
        flows: Vec<FlowSpec>,
    },
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub dcs: Vec<String>,
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
    #[serde(default)]
    pub routing: RoutingSpec,
    #[serde(default)]
    pub transport: TransportSpec,
    pub traffic: TrafficFileSpec,
    #[serde(default = "one")]
    pub seed: u64,
}

/// Where a scenario's flows come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TrafficSource {
    Poisson {
        pair_mode: PairMode,
        load_permille: u32,
        duration: SimTime,
        workload: String,
        size_divisor: u64,
    },
    Flows(Vec<Flow>),
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub topology: Arc<Topology>,
    pub sim: SimConfig,
    pub traffic: TrafficSource,
    pub seed: u64,
}

impl Scenario {
    /// Flows for one cell; `load` overrides the scenario's Poisson load.
    pub fn flows(&self, load: Option<u32>, seed: u64) -> Result<Vec<Flow>, ScenarioError> {
        match &self.traffic {
            TrafficSource::Flows(f) => Ok(f.clone()),
            TrafficSource::Poisson {
                pair_mode,
                load_permille,
                duration,
                workload,
                size_divisor,
            } => Ok(traffic::generate_flows(
                &self.topology,
                &TrafficSpec {
                    pair_mode: *pair_mode,
                    load_permille: load.unwrap_or(*load_permille),
                    duration: *duration,
                    cdf: traffic::workload(workload)?,
                    seed,
                    size_divisor: *size_divisor,
                },
            )?),
        }
    }
}

pub fn topology_from_specs(dcs: &[String], nodes: &[NodeSpec], links: &[LinkSpec]) -> Result<Topology, ScenarioError> {
    let mut b = TopologyBuilder::new();
    for d in dcs {
        b.dc(d.clone());
    }
    for (i, n) in nodes.iter().enumerate() {
        if n.id as usize != i {
            return Err(ScenarioError::NodeOrder { index: i, id: n.id });
        }
        if n.dc as usize >= dcs.len() {
            return Err(ScenarioError::UnknownDc { node: n.id, dc: n.dc });
        }
        b.node(n.role, n.dc);
    }
    for (i, l) in links.iter().enumerate() {
        for node in [l.src, l.dst] {
            if node as usize >= nodes.len() {
                return Err(ScenarioError::UnknownNode { index: i, node });
            }
        }
        if !l.capacity_gbps.is_finite() || l.capacity_gbps < 0.0 || l.capacity_gbps > 1e9 {
            return Err(ScenarioError::Capacity { index: i, gbps: l.capacity_gbps });
        }
        let bps = (l.capacity_gbps * 1e9).round() as u64;
        let d = SimTime::from_us(l.delay_us);
        if l.duplex {
            b.duplex(l.src, l.dst, bps, d, l.buffer_bytes);
        } else {
            b.link(l.src, l.dst, bps, d, l.buffer_bytes);
        }
    }
    Ok(b.build())
}

/// Node and link specs describing `topology`, one directed link per entry. Exact for delays
/// that are whole microseconds.
pub fn topology_to_specs(topology: &Topology) -> (Vec<String>, Vec<NodeSpec>, Vec<LinkSpec>) {
    let nodes = topology
        .nodes
        .iter()
        .map(|n| NodeSpec {
            id: n.id,
            role: n.role,
            dc: n.dc,
        })
        .collect();
    let links = topology
        .links
        .iter()
        .map(|l| LinkSpec {
            src: l.src,
            dst: l.dst,
            capacity_gbps: l.capacity_bps as f64 / 1e9,
            delay_us: l.propagation_delay.as_ns() / 1000,
            buffer_bytes: l.buffer_bytes,
            duplex: false,
        })
        .collect();
    (topology.dc_names.clone(), nodes, links)
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn into_scenario(self) -> Result<Scenario, ScenarioError> {
        let topology = topology_from_specs(&self.dcs, &self.nodes, &self.links)?;
        let mut sim = SimConfig::default();
        let r = &self.routing;
        sim.switch.policy = r.policy;
        if let Some(s) = r.delay_shift {
            sim.provision.delay =
                DelayScoring::new(s).map_err(|e| ScenarioError::Weights(e.to_string()))?;
        }
        if let Some(h) = r.high_water_level {
            sim.switch.congestion.high_water_level = h;
        }
        sim.provision.capacity_reference = r.capacity_reference_bps;
        if let Some(c) = r.cache_capacity {
            sim.switch.cache_capacity = c;
        }
        if let Some(t) = r.idle_timeout_ns {
            sim.idle_timeout = SimTime::from_ns(t);
        }
        r.weights.apply(&mut sim)?;
        sim.failures = r
            .failures
            .iter()
            .map(|f| LinkFailure {
                link: f.link,
                at: SimTime::from_ns(f.at_ns),
                recover: f.recover_ns.map(SimTime::from_ns),
            })
            .collect();
        if let Some(m) = self.transport.mtu {
            sim.mtu = m;
        }
        if let Some(e) = self.transport.ecn_shift {
            sim.transport.ecn_shift = e;
        }
        sim.horizon = self.transport.horizon_ns.map(SimTime::from_ns);

        let traffic = match self.traffic {
            TrafficFileSpec::Poisson {
                load_permille,
                duration_ns,
                workload,
                size_divisor,
                pair,
            } => {
                // fail early on a bad workload name
                traffic::workload(&workload)?;
                TrafficSource::Poisson {
                    pair_mode: match pair {
                        Some([src_dc, dst_dc]) => PairMode::Pair { src_dc, dst_dc },
                        None => PairMode::AllToAll,
                    },
                    load_permille,
                    duration: SimTime::from_ns(duration_ns),
                    workload,
                    size_divisor,
                }
            }
            TrafficFileSpec::Flows { flows } => TrafficSource::Flows(
                flows
                    .iter()
                    .enumerate()
                    .map(|(i, f)| Flow {
                        id: i as u64,
                        five_tuple: FiveTuple {
                            src_host: f.src,
                            dst_host: f.dst,
                            src_port: f.src_port.unwrap_or(1024 + (i % 64_000) as u16),
                            dst_port: ROCE_DST_PORT,
                            protocol: UDP,
                        },
                        size: f.size,
                        arrival: SimTime::from_ns(f.arrival_ns),
                    })
                    .collect(),
            ),
        };
        Ok(Scenario {
            topology: Arc::new(topology),
            sim,
            traffic,
            seed: self.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_DC: &str = r#"{
        "dcs": ["a", "b"],
        "nodes": [
            {"id": 0, "role": "host", "dc": 0},
            {"id": 1, "role": "dci", "dc": 0},
            {"id": 2, "role": "dci", "dc": 1},
            {"id": 3, "role": "host", "dc": 1}
        ],
        "links": [
            {"src": 0, "dst": 1, "capacity_gbps": 1, "delay_us": 1, "buffer_bytes": 100000, "duplex": true},
            {"src": 1, "dst": 2, "capacity_gbps": 1, "delay_us": 5000, "buffer_bytes": 100000, "duplex": true},
            {"src": 2, "dst": 3, "capacity_gbps": 1, "delay_us": 1, "buffer_bytes": 100000, "duplex": true}
        ],
        "routing": {"policy": "ucmp", "alpha": 1, "beta": 3},
        "traffic": {"kind": "flows", "flows": [{"src": 0, "dst": 3, "size": 5000, "arrival_ns": 0}]}
    }"#;

    #[test]
    fn parses_and_builds() {
        let s = ScenarioFile::parse(TWO_DC).unwrap().into_scenario().unwrap();
        assert_eq!(s.topology.links.len(), 6);
        assert_eq!(s.sim.switch.policy, PolicyKind::UcmpProxy);
        assert_eq!(s.sim.switch.fusion, FusionWeights { alpha: 1, beta: 3 });
        assert_eq!(s.seed, 1);
        assert!(matches!(s.traffic, TrafficSource::Flows(ref f) if f.len() == 1));
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = TWO_DC.replace("\"seed\"", "\"x\"").replace("\"dcs\"", "\"dcz\"");
        assert!(ScenarioFile::parse(&bad).is_err());
    }

    #[test]
    fn rejects_degenerate_fusion() {
        let bad = TWO_DC.replace("\"alpha\": 1, \"beta\": 3", "\"alpha\": 0, \"beta\": 0");
        assert!(matches!(
            ScenarioFile::parse(&bad).unwrap().into_scenario(),
            Err(ScenarioError::Weights(_))
        ));
    }

    #[test]
    fn specs_round_trip() {
        let s = ScenarioFile::parse(TWO_DC).unwrap().into_scenario().unwrap();
        let (d, n, l) = topology_to_specs(&s.topology);
        assert_eq!(topology_from_specs(&d, &n, &l).unwrap(), *s.topology);
    }
}
