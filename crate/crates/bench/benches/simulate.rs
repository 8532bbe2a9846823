use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};

use lcmp_core::experiment::{herd_flows, multi_path_topology, preset, run_cell, PresetParams, EIGHT_DC_PATHS};
use lcmp_core::model::SimTime;
use lcmp_core::{simulate, SimConfig};

fn simulate_bench(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);

    let (topo, layout) = multi_path_topology(&EIGHT_DC_PATHS, &PresetParams::default());
    let topo = Arc::new(topo);
    let flows = herd_flows(&topo, &layout, 50, 50_000);
    g.bench_function("herd_50", |b| {
        b.iter(|| simulate(Arc::clone(&topo), flows.clone(), SimConfig::default()).unwrap())
    });

    let params = PresetParams {
        duration: SimTime::from_ms(20),
        ..PresetParams::default()
    };
    let plan = preset("8dc", &params).unwrap();
    g.bench_function("8dc_lcmp_load300_20ms", |b| {
        b.iter(|| run_cell(&plan, &plan.variants[0], 300, 1).unwrap())
    });
    g.finish();
}

criterion_group!(benches, simulate_bench);
criterion_main!(benches);
