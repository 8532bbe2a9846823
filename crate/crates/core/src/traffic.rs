//! Flow-size CDFs and Poisson flow generation between datacenters.
//!
//! Offered load is defined against aggregate inter-DC capacity: for a DC pair, the sum of the
//! bottleneck capacities of the candidate routes out of the source DC; for all-to-all, the
//! total inter-DC egress capacity of every DC that hosts senders. Arrivals are Poisson with
//! `lambda = load/1000 * capacity / (8 * mean_size)`.

use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control_plane::enumerate_candidate_paths;
use crate::model::{DcId, FiveTuple, Flow, SimTime, Topology};

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("cdf line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("cdf is empty")]
    Empty,
    #[error("cdf ends at {0} per-mille, expected 1000")]
    Incomplete(u32),
    #[error("dc {0} has no hosts")]
    NoHosts(DcId),
    #[error("load {0} per-mille outside 0..=1000")]
    BadLoad(u32),
    #[error("no inter-dc capacity between the traffic endpoints")]
    NoCapacity,
    #[error("all-to-all traffic needs at least two dcs with hosts")]
    TooFewDcs,
    #[error("unknown workload {0:?}")]
    UnknownWorkload(String),
    #[error("reading {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Piecewise-linear empirical CDF, probabilities in per-mille.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSizeCdf {
    /// Interpolation origin; `None` means the first point is an atom.
    origin: Option<u64>,
    points: Vec<(u64, u32)>,
}

pub const WEBSEARCH: &str = include_str!("../data/websearch.cdf");
pub const HADOOP: &str = include_str!("../data/hadoop.cdf");
pub const STORAGE: &str = include_str!("../data/storage.cdf");

/// Built-in workload by name, or a CDF file path.
pub fn workload(name_or_path: &str) -> Result<FlowSizeCdf, TrafficError> {
    match name_or_path {
        "websearch" => load_cdf(WEBSEARCH),
        "hadoop" => load_cdf(HADOOP),
        "storage" => load_cdf(STORAGE),
        p if Path::new(p).is_file() => {
            let text = std::fs::read_to_string(p).map_err(|source| TrafficError::Io {
                path: p.to_string(),
                source,
            })?;
            load_cdf(&text)
        }
        other => Err(TrafficError::UnknownWorkload(other.to_string())),
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> TrafficError {
    TrafficError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Parses `<size_bytes> <cumulative_percent>` lines; `#` lines and blanks are skipped.
/// A leading row at 0 % is the interpolation origin rather than a point.
pub fn load_cdf(text: &str) -> Result<FlowSizeCdf, TrafficError> {
    let mut origin = None;
    let mut points: Vec<(u64, u32)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(s), Some(p), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(line_no, "expected two fields"));
        };
        let size: f64 = s.parse().map_err(|_| parse_err(line_no, format!("bad size {s:?}")))?;
        let pct: f64 = p.parse().map_err(|_| parse_err(line_no, format!("bad percent {p:?}")))?;
        if !(size.is_finite() && size >= 0.0) {
            return Err(parse_err(line_no, "size must be non-negative"));
        }
        if !(0.0..=100.0).contains(&pct) {
            return Err(parse_err(line_no, "percent outside 0..=100"));
        }
        let size = size.round() as u64;
        let permille = (pct * 10.0).round() as u32;
        if permille == 0 {
            if points.is_empty() && origin.is_none() {
                origin = Some(size);
                continue;
            }
            return Err(parse_err(line_no, "only the first row may be at 0 %"));
        }
        let prev = points.last().copied().or(origin.map(|o| (o, 0)));
        if let Some((ps, pp)) = prev {
            if size <= ps {
                return Err(parse_err(line_no, "sizes not increasing"));
            }
            if permille <= pp {
                return Err(parse_err(line_no, "cumulative percent not increasing"));
            }
        }
        if size == 0 {
            return Err(parse_err(line_no, "flow size must be positive"));
        }
        points.push((size, permille));
    }
    let last = points.last().ok_or(TrafficError::Empty)?;
    if last.1 != 1000 {
        return Err(TrafficError::Incomplete(last.1));
    }
    Ok(FlowSizeCdf { origin, points })
}

impl FlowSizeCdf {
    pub fn points(&self) -> &[(u64, u32)] {
        &self.points
    }

    /// Inverse transform at `u` in `[0, 1000)` per-mille.
    pub fn quantile(&self, u: f64) -> u64 {
        let (s0, c0) = self.points[0];
        if u < c0 as f64 {
            return match self.origin {
                None => s0,
                Some(o) => lerp(o, s0, u / c0 as f64),
            };
        }
        for w in self.points.windows(2) {
            let ((sa, ca), (sb, cb)) = (w[0], w[1]);
            if u < cb as f64 {
                return lerp(sa, sb, (u - ca as f64) / (cb - ca) as f64);
            }
        }
        self.points.last().unwrap().0
    }

    pub fn sample(&self, rng: &mut impl Rng) -> u64 {
        self.quantile(rng.random::<f64>() * 1000.0).max(1)
    }

    /// Mean by trapezoid integration over the CDF, including the first-point atom.
    pub fn mean(&self) -> f64 {
        let (s0, c0) = self.points[0];
        let head = match self.origin {
            None => s0 as f64,
            Some(o) => (o + s0) as f64 / 2.0,
        };
        let mut m = head * c0 as f64;
        for w in self.points.windows(2) {
            let ((sa, ca), (sb, cb)) = (w[0], w[1]);
            m += (sa + sb) as f64 / 2.0 * (cb - ca) as f64;
        }
        m / 1000.0
    }
}

fn lerp(a: u64, b: u64, f: f64) -> u64 {
    (a as f64 + (b as f64 - a as f64) * f).round() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum PairMode {
    Pair { src_dc: DcId, dst_dc: DcId },
    AllToAll,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficSpec {
    pub pair_mode: PairMode,
    pub load_permille: u32,
    pub duration: SimTime,
    pub cdf: FlowSizeCdf,
    pub seed: u64,
    /// Flow sizes are divided by this (rounded, at least 1 byte).
    pub size_divisor: u64,
}

pub const ROCE_DST_PORT: u16 = 4791;
pub const UDP: u8 = 17;

/// Aggregate inter-DC capacity the load fraction refers to, in bit/s.
pub fn aggregate_capacity(topology: &Topology, mode: &PairMode) -> u64 {
    match *mode {
        PairMode::Pair { src_dc, dst_dc } => topology
            .dcis_in(src_dc)
            .into_iter()
            .flat_map(|s| enumerate_candidate_paths(topology, s, dst_dc))
            .map(|c| c.bottleneck_capacity)
            .sum(),
        PairMode::AllToAll => topology
            .links
            .iter()
            .filter(|l| topology.is_inter_dc(l) && !topology.hosts_in(topology.dc_of(l.src)).is_empty())
            .map(|l| l.capacity_bps)
            .sum(),
    }
}

pub fn scale_size(size: u64, divisor: u64) -> u64 {
    let d = divisor.max(1);
    ((size + d / 2) / d).max(1)
}

/// Poisson arrivals in `[0, duration)`, sorted by arrival, ids `0..n`, unique five-tuples.
pub fn generate_flows(topology: &Topology, spec: &TrafficSpec) -> Result<Vec<Flow>, TrafficError> {
    if spec.load_permille > 1000 {
        return Err(TrafficError::BadLoad(spec.load_permille));
    }
    let dcs: Vec<DcId> = match spec.pair_mode {
        PairMode::Pair { src_dc, dst_dc } => {
            for dc in [src_dc, dst_dc] {
                if topology.hosts_in(dc).is_empty() {
                    return Err(TrafficError::NoHosts(dc));
                }
            }
            vec![src_dc, dst_dc]
        }
        PairMode::AllToAll => {
            let v: Vec<DcId> = (0..topology.dc_count() as DcId)
                .filter(|&d| !topology.hosts_in(d).is_empty())
                .collect();
            if v.len() < 2 {
                return Err(TrafficError::TooFewDcs);
            }
            v
        }
    };
    if spec.load_permille == 0 || spec.duration == SimTime::ZERO {
        return Ok(Vec::new());
    }
    let capacity = aggregate_capacity(topology, &spec.pair_mode);
    if capacity == 0 {
        return Err(TrafficError::NoCapacity);
    }
    let mean = spec.cdf.mean() / spec.size_divisor.max(1) as f64;
    // flows per nanosecond
    let lambda = spec.load_permille as f64 / 1000.0 * capacity as f64 / (8.0 * mean) / 1e9;
    let gaps = Exp::new(lambda).map_err(|_| TrafficError::NoCapacity)?;
    let hosts: Vec<Vec<_>> = (0..topology.dc_count() as DcId).map(|d| topology.hosts_in(d)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut used = HashSet::new();
    let mut flows = Vec::new();
    let mut t = 0.0f64;
    loop {
        t += gaps.sample(&mut rng);
        if t >= spec.duration.as_ns() as f64 {
            break;
        }
        let (sdc, ddc) = match spec.pair_mode {
            PairMode::Pair { src_dc, dst_dc } => (src_dc, dst_dc),
            PairMode::AllToAll => {
                let a = dcs[rng.random_range(0..dcs.len())];
                let mut b = dcs[rng.random_range(0..dcs.len() - 1)];
                if b == a {
                    b = dcs[dcs.len() - 1];
                }
                (a, b)
            }
        };
        let src_host = hosts[sdc as usize][rng.random_range(0..hosts[sdc as usize].len())];
        let dst_host = hosts[ddc as usize][rng.random_range(0..hosts[ddc as usize].len())];
        let size = scale_size(spec.cdf.sample(&mut rng), spec.size_divisor);
        let mut src_port: u16 = rng.random_range(1024..=u16::MAX);
        while !used.insert((src_host, dst_host, src_port)) {
            src_port = rng.random_range(1024..=u16::MAX);
        }
        flows.push(Flow {
            id: flows.len() as u64,
            five_tuple: FiveTuple {
                src_host,
                dst_host,
                src_port,
                dst_port: ROCE_DST_PORT,
                protocol: UDP,
            },
            size,
            arrival: SimTime(t as u64),
        });
    }
    Ok(flows)
}
