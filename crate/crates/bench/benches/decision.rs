use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};

use lcmp_core::control_plane::{provision_switch, Score8};
use lcmp_core::data_plane::{select_egress, CongestionWeights, CostedCandidate, PortView, SwitchConfig, SwitchState};
use lcmp_core::experiment::{multi_path_topology, PresetParams, EIGHT_DC_PATHS};
use lcmp_core::hash::mix64;
use lcmp_core::model::SimTime;
use lcmp_core::ProvisionConfig;

struct Idle;

impl PortView for Idle {
    fn queue_bytes(&self, _: u32) -> u64 {
        0
    }
    fn link_alive(&self, _: u32) -> bool {
        true
    }
}

fn decision(c: &mut Criterion) {
    let cands: Vec<CostedCandidate> = (0..6)
        .map(|p| CostedCandidate {
            egress_port: p,
            c_path: Score8::new((p * 37 % 256) as u8),
            c_cong: Score8::new((p * 11) as u8),
            fused: p * 97 % 700,
        })
        .collect();
    let w = CongestionWeights::default();
    let mut key = 0u64;
    c.bench_function("select_egress/6", |b| {
        b.iter(|| {
            key = key.wrapping_add(1);
            select_egress(black_box(&cands), mix64(key), 7, &w).unwrap()
        })
    });

    let (topo, layout) = multi_path_topology(&EIGHT_DC_PATHS, &PresetParams::default());
    let tables = Arc::new(provision_switch(&topo, layout.src_dci, &ProvisionConfig::default()).unwrap());
    let mut sw = SwitchState::new(Arc::clone(&tables), SwitchConfig::default());
    let mut n = 0u64;
    c.bench_function("handle_packet/new_flow", |b| {
        b.iter(|| {
            n += 1;
            sw.handle_packet(mix64(n), layout.dst_dc, SimTime::from_us(n), &Idle).unwrap()
        })
    });
    let mut sw = SwitchState::new(tables, SwitchConfig::default());
    sw.handle_packet(42, layout.dst_dc, SimTime::ZERO, &Idle).unwrap();
    c.bench_function("handle_packet/cache_hit", |b| {
        b.iter(|| sw.handle_packet(black_box(42), layout.dst_dc, SimTime::from_us(1), &Idle).unwrap())
    });
}

criterion_group!(benches, decision);
criterion_main!(benches);
