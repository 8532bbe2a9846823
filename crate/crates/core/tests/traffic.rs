use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lcmp_core::experiment::{multi_path_topology, MultiPathLayout, PresetParams, EIGHT_DC_PATHS};
use lcmp_core::model::{SimTime, Topology};
use lcmp_core::traffic::{aggregate_capacity, generate_flows, workload, PairMode, TrafficSpec};

fn setup() -> (Topology, MultiPathLayout) {
    multi_path_topology(&EIGHT_DC_PATHS, &PresetParams::default())
}

fn spec(layout: &MultiPathLayout, load: u32, duration: SimTime, seed: u64) -> TrafficSpec {
    TrafficSpec {
        pair_mode: PairMode::Pair {
            src_dc: layout.src_dc,
            dst_dc: layout.dst_dc,
        },
        load_permille: load,
        duration,
        cdf: workload("websearch").unwrap(),
        seed,
        size_divisor: 100,
    }
}

#[test]
fn sample_mean_tracks_cdf_mean() {
    for name in ["websearch", "hadoop", "storage"] {
        let cdf = workload(name).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let total: f64 = (0..n).map(|_| cdf.sample(&mut rng) as f64).sum();
        let rel = (total / n as f64 - cdf.mean()).abs() / cdf.mean();
        assert!(rel < 0.02, "{name}: {rel}");
    }
}

#[test]
fn flow_counts_are_poisson() {
    let (t, l) = setup();
    let d = SimTime::from_ms(100);
    let cdf = workload("websearch").unwrap();
    let cap = aggregate_capacity(&t, &spec(&l, 300, d, 0).pair_mode) as f64;
    let expected = 0.3 * cap * d.as_secs_f64() / (8.0 * cdf.mean() / 100.0);
    let sigma = expected.sqrt();
    for seed in 0..20 {
        let n = generate_flows(&t, &spec(&l, 300, d, seed)).unwrap().len() as f64;
        assert!((n - expected).abs() <= 3.0 * sigma, "seed {seed}: {n} vs {expected}");
    }
}

#[test]
fn offered_load_matches_target() {
    let (t, l) = setup();
    let d = SimTime::from_ms(1000);
    let s = spec(&l, 300, d, 5);
    let flows = generate_flows(&t, &s).unwrap();
    let bytes: u64 = flows.iter().map(|f| f.size).sum();
    let cap = aggregate_capacity(&t, &s.pair_mode) as f64;
    let offered = bytes as f64 * 8.0 / (cap * d.as_secs_f64());
    assert!((offered - 0.30).abs() <= 0.02, "{offered}");
}

#[test]
fn ids_and_tuples_unique() {
    let (t, l) = setup();
    let flows = generate_flows(&t, &spec(&l, 800, SimTime::from_ms(3000), 9)).unwrap();
    assert!(flows.len() >= 100_000, "{}", flows.len());
    let ids: HashSet<_> = flows.iter().map(|f| f.id).collect();
    let tuples: HashSet<_> = flows.iter().map(|f| f.five_tuple).collect();
    assert_eq!(ids.len(), flows.len());
    assert_eq!(tuples.len(), flows.len());
    assert!(flows.windows(2).all(|w| w[0].arrival <= w[1].arrival));
}

#[test]
fn same_seed_same_flows() {
    let (t, l) = setup();
    let a = generate_flows(&t, &spec(&l, 300, SimTime::from_ms(50), 3)).unwrap();
    let b = generate_flows(&t, &spec(&l, 300, SimTime::from_ms(50), 3)).unwrap();
    let c = generate_flows(&t, &spec(&l, 300, SimTime::from_ms(50), 4)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn zero_load_is_empty() {
    let (t, l) = setup();
    assert!(generate_flows(&t, &spec(&l, 0, SimTime::from_ms(50), 3)).unwrap().is_empty());
    assert!(generate_flows(&t, &spec(&l, 1001, SimTime::from_ms(50), 3)).is_err());
}
