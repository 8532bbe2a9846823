use std::fs;

use lcmp_core::control_plane::provision_switch;
use lcmp_core::experiment::{cell_dir, preset, run_plan, PresetParams, PRESETS};
use lcmp_core::model::{validate_topology, SimTime};
use lcmp_core::scenario::WeightOverrides;
use lcmp_core::PolicyKind;

fn quick() -> PresetParams {
    PresetParams {
        duration: SimTime::from_ms(10),
        ..PresetParams::default()
    }
}

#[test]
fn every_preset_builds_a_valid_plan() {
    for name in PRESETS {
        let plan = preset(name, &PresetParams::default()).unwrap();
        assert!(validate_topology(&plan.scenario.topology).is_empty(), "{name}");
        assert!(!plan.variants.is_empty() && !plan.loads.is_empty() && !plan.seeds.is_empty());
    }
    assert!(preset("nope", &PresetParams::default()).is_err());
}

#[test]
fn eight_dc_has_six_candidates() {
    let plan = preset("8dc", &PresetParams::default()).unwrap();
    let t = &plan.scenario.topology;
    let src = t.dcis_in(0)[0];
    let tables = provision_switch(t, src, &plan.scenario.sim.provision).unwrap();
    let dst = (t.dc_count() - 1) as u32;
    let c = tables.candidates_to(dst);
    assert_eq!(c.len(), 6);
    let mut classes: Vec<(u64, u32)> = c.iter().map(|c| (c.bottleneck_capacity, c.one_way_delay_ms)).collect();
    classes.sort();
    // scaled by 100: 40/100/200 Gbit/s become 0.4/1/2
    let g = 1_000_000_000 / 100;
    assert_eq!(classes.iter().map(|c| c.0 / g).collect::<Vec<_>>(), [40, 40, 100, 100, 200, 200]);
    assert_eq!(classes.iter().map(|c| c.1).collect::<Vec<_>>(), [5, 50, 10, 100, 25, 250]);
}

#[test]
fn weight_presets_enumerate_tuples() {
    let p = PresetParams::default();
    let get = |name: &str| preset(name, &p).unwrap().variants.iter().map(|v| v.weights).collect::<Vec<_>>();
    let ab: Vec<_> = get("weights_global").iter().map(|w| (w.alpha.unwrap(), w.beta.unwrap())).collect();
    assert_eq!(ab, [(3, 1), (1, 1), (1, 3)]);
    let path: Vec<_> = get("weights_path").iter().map(|w| (w.w_dl.unwrap(), w.w_lc.unwrap())).collect();
    assert_eq!(path, [(3, 1), (1, 1), (1, 3)]);
    let cong: Vec<_> = get("weights_cong")
        .iter()
        .map(|w| (w.w_ql.unwrap(), w.w_tl.unwrap(), w.w_dp.unwrap()))
        .collect();
    assert_eq!(cong, [(2, 1, 1), (1, 2, 1), (1, 1, 2)]);
}

#[test]
fn ablation_variants() {
    let plan = preset("ablation", &PresetParams::default()).unwrap();
    let names: Vec<_> = plan.variants.iter().map(|v| v.name.as_str()).collect();
    assert_eq!(names, ["lcmp", "rm-alpha", "rm-beta"]);
    assert_eq!(plan.variants[1].weights.alpha, Some(0));
    assert_eq!(plan.variants[2].weights.beta, Some(0));
    assert!(plan.variants.iter().all(|v| v.policy == PolicyKind::Lcmp));
}

#[test]
fn plan_enumerates_cells_and_writes_layout() {
    let mut plan = preset("8dc", &quick()).unwrap();
    plan.loads = vec![300];
    plan.seeds = vec![1];
    let dir = tempfile::tempdir().unwrap();
    let report = run_plan(&plan, Some(dir.path()), 2).unwrap();
    assert_eq!(report.cells.len(), 3);
    assert!(!report.failed);
    for v in ["lcmp", "ecmp", "ucmp"] {
        let cell = cell_dir(dir.path(), v, 300, 1);
        for f in ["flows.csv", "links.csv", "utilization.csv", "summary.json"] {
            assert!(cell.join(f).is_file(), "{}", cell.join(f).display());
        }
    }
    let table = fs::read_to_string(dir.path().join("table.txt")).unwrap();
    assert!(table.contains("lcmp") && table.contains("ucmp"));
    assert!(dir.path().join("summary.json").is_file());
}

#[test]
fn summaries_are_byte_identical_across_runs() {
    let mut plan = preset("8dc", &quick()).unwrap();
    plan.loads = vec![300];
    plan.seeds = vec![2];
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_plan(&plan, Some(a.path()), 1).unwrap();
    run_plan(&plan, Some(b.path()), 3).unwrap();
    let read = |d: &std::path::Path| fs::read(d.join("summary.json")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn degenerate_weights_fail_the_cell() {
    let mut plan = preset("8dc", &quick()).unwrap();
    plan.loads = vec![300];
    plan.seeds = vec![1];
    plan.variants.truncate(1);
    plan.variants[0].weights = WeightOverrides {
        alpha: Some(0),
        beta: Some(0),
        ..WeightOverrides::default()
    };
    assert!(run_plan(&plan, None, 1).is_err());
}
