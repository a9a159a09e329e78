mod common;

use std::collections::BTreeMap;

use prunepack::plan::prune_ratio;
use prunepack::{
    apply_prune_plan, build_coupling_groups, emit_report, network_flops, plan_prune, Axis, Budget, LayerKind,
    PlanOptions, PrunePlan,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const BASELINE_FLOPS: f64 = 4.14e9;
const TABLE_FLOPS: u64 = 2_050_000_000;
const TABLE_RATIO: f64 = 0.5021;

#[test]
fn fixture_layer_counts() {
    let g = common::resnet50();
    let count = |k: LayerKind| g.layers().iter().filter(|l| l.kind == k).count();
    assert_eq!(count(LayerKind::Conv), 53);
    assert_eq!(count(LayerKind::Linear), 1);
    assert_eq!(count(LayerKind::ElementwiseAdd), 16);
    assert_eq!(g.input_resolution(), (224, 224));
}

#[test]
fn fixture_flops_near_baseline() {
    let g = common::resnet50();
    let flops = network_flops(&g).unwrap() as f64;
    assert!((flops / BASELINE_FLOPS - 1.0).abs() <= 0.03, "{flops}");
}

#[test]
fn stage_groups_cover_block_outputs() {
    let g = common::resnet50();
    let coupling = build_coupling_groups(&g).unwrap();
    for (stage, blocks, width) in [(1, 3, 256), (2, 4, 512), (3, 6, 1024), (4, 3, 2048)] {
        let gid = coupling.group_of(g.layer_index(&format!("layer{stage}.0.downsample")).unwrap(), Axis::Output);
        let group = coupling.group(gid).unwrap();
        assert_eq!(group.channel_count, width);
        assert!(group.prunable);
        for b in 0..blocks {
            let id = format!("layer{stage}.{b}.2");
            assert_eq!(coupling.group_of(g.layer_index(&id).unwrap(), Axis::Output), gid, "{id}");
        }
    }
    // stem, the 16 stage groups' worth of inner convs (2 per block) and 4 stages
    assert_eq!(coupling.prunable_groups().count(), 1 + 2 * 16 + 4);
}

#[test]
fn keeping_11_of_64_in_layer1_1_0() {
    let g = common::resnet50();
    let coupling = build_coupling_groups(&g).unwrap();
    let mut keep: BTreeMap<usize, Vec<usize>> =
        coupling.prunable_groups().map(|grp| (grp.group_id, (0..grp.channel_count).collect())).collect();
    let group = coupling.find_by_label("layer1.1.0").unwrap();
    assert_eq!(group.channel_count, 64);
    keep.insert(group.group_id, (0..11).collect());

    let plan = PrunePlan::from_keep_sets(keep);
    let pruned = apply_prune_plan(&g, &plan).unwrap();
    assert_eq!(pruned.layer("layer1.1.0").unwrap().c_out, 11);
    assert_eq!(pruned.layer("layer1.1.1").unwrap().c_in, 11);
    assert_eq!(pruned.layer("layer1.1.1").unwrap().c_out, 64);

    let mut plan = plan;
    plan.finalize(&g).unwrap();
    let report = emit_report(&plan, &g).unwrap();
    let row = report.layers.iter().find(|r| r.layer == "layer1.1.0").unwrap();
    assert_eq!((row.kept, row.pruned), (11, 53));
    assert!((row.prune_ratio_pct - 82.8125).abs() < 1e-12);
}

#[test]
fn table_budget_reaches_table_ratio() {
    let g = common::resnet50();
    let scores = common::random_scores(&g, &mut ChaCha8Rng::seed_from_u64(2050));
    let plan = plan_prune(&g, &scores, &Budget::flops(TABLE_FLOPS), &PlanOptions::default()).unwrap();
    assert!(plan.achieved_flops <= TABLE_FLOPS);
    assert!((plan.achieved_flops as f64) >= TABLE_FLOPS as f64 * (1.0 - 0.005), "{}", plan.achieved_flops);
    assert!((plan.achieved_ratio - TABLE_RATIO).abs() <= 0.01, "{}", plan.achieved_ratio);
    assert_eq!(plan.achieved_flops, network_flops(&apply_prune_plan(&g, &plan).unwrap()).unwrap());
    assert_eq!(plan.achieved_ratio, prune_ratio(plan.original_flops, plan.achieved_flops));
}
