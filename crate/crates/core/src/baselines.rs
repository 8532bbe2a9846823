//! Comparison policies sharing the switch interface: ECMP, a capacity-weighted UCMP proxy,
//! and the minimum-cost ablation (selected inside the data plane).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data_plane::DataPlaneError;
use crate::hash::{hash_index, mix64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Lcmp,
    Ecmp,
    #[serde(alias = "ucmp")]
    UcmpProxy,
    /// Fused cost without the diversity filter.
    MinCost,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [PolicyKind::Lcmp, PolicyKind::Ecmp, PolicyKind::UcmpProxy, PolicyKind::MinCost];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Lcmp => "lcmp",
            PolicyKind::Ecmp => "ecmp",
            PolicyKind::UcmpProxy => "ucmp_proxy",
            PolicyKind::MinCost => "min_cost",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown policy {0:?} (expected lcmp, ecmp, ucmp_proxy or min_cost)")]
pub struct UnknownPolicy(pub String);

impl FromStr for PolicyKind {
    type Err = UnknownPolicy;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lcmp" => Ok(PolicyKind::Lcmp),
            "ecmp" => Ok(PolicyKind::Ecmp),
            "ucmp_proxy" | "ucmp" => Ok(PolicyKind::UcmpProxy),
            "min_cost" => Ok(PolicyKind::MinCost),
            other => Err(UnknownPolicy(other.to_string())),
        }
    }
}

/// Uniform hash over the live egress ports, in the order given.
pub fn ecmp_select(ports: &[u32], flow_key: u64, salt: u64) -> Result<u32, DataPlaneError> {
    if ports.is_empty() {
        return Err(DataPlaneError::EmptyCandidates);
    }
    Ok(ports[hash_index(flow_key, salt, ports.len() as u64) as usize])
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Integer weights proportional to capacity: each capacity divided by the gcd of all of them.
pub fn capacity_weights(capacities: &[u64]) -> Vec<u64> {
    let g = capacities.iter().copied().fold(0, gcd).max(1);
    capacities.iter().map(|&c| c / g).collect()
}

/// Capacity-proportional weighted hash over `(port, bottleneck capacity)` pairs.
/// Weights are independent of delay.
pub fn ucmp_select(candidates: &[(u32, u64)], flow_key: u64, salt: u64) -> Result<u32, DataPlaneError> {
    if candidates.is_empty() {
        return Err(DataPlaneError::EmptyCandidates);
    }
    let caps: Vec<u64> = candidates.iter().map(|c| c.1).collect();
    let weights = capacity_weights(&caps);
    let total: u64 = weights.iter().sum();
    if total == 0 {
        return ecmp_select(&candidates.iter().map(|c| c.0).collect::<Vec<_>>(), flow_key, salt);
    }
    let mut r = mix64(flow_key ^ salt) % total;
    for (c, w) in candidates.iter().zip(&weights) {
        if r < *w {
            return Ok(c.0);
        }
        r -= w;
    }
    unreachable!("r < total")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        for p in PolicyKind::ALL {
            assert_eq!(p.as_str().parse::<PolicyKind>().unwrap(), p);
        }
        assert!("foo".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn gcd_weights() {
        let g = 1_000_000_000;
        assert_eq!(capacity_weights(&[200 * g, 200 * g, 100 * g, 40 * g]), vec![10, 10, 5, 2]);
        assert_eq!(capacity_weights(&[400_000_000, 2_000_000_000]), vec![1, 5]);
    }

    #[test]
    fn ecmp_is_uniform() {
        let ports = [0, 1, 2, 3, 4, 5];
        let mut counts = [0u32; 6];
        for key in 0..60_000u64 {
            counts[ecmp_select(&ports, mix64(key), 17).unwrap() as usize] += 1;
        }
        for c in counts {
            assert!((9_400..=10_600).contains(&c), "{counts:?}");
        }
    }

    #[test]
    fn ucmp_is_capacity_proportional() {
        let g = 1_000_000_000;
        let cands = [(0, 200 * g), (1, 100 * g), (2, 40 * g)];
        let mut counts = [0f64; 3];
        let n = 68_000u64;
        for key in 0..n {
            counts[ucmp_select(&cands, mix64(key), 3).unwrap() as usize] += 1.0;
        }
        let expect = [200.0 / 340.0, 100.0 / 340.0, 40.0 / 340.0];
        for i in 0..3 {
            let share = counts[i] / n as f64;
            assert!((share - expect[i]).abs() < 0.01, "{i}: {share}");
        }
    }

    #[test]
    fn empty_is_error() {
        assert!(ecmp_select(&[], 1, 1).is_err());
        assert!(ucmp_select(&[], 1, 1).is_err());
    }
}
