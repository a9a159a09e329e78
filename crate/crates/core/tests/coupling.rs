mod common;

use std::collections::BTreeSet;

use prunepack::graph::apply_keep_sets;
use prunepack::{build_coupling_groups, channel_flops_saving, network_flops, Axis, LayerKind, PrunePlan};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn members(graph: &prunepack::NetworkGraph, label: &str) -> BTreeSet<(String, Axis)> {
    let coupling = build_coupling_groups(graph).unwrap();
    let g = coupling.find_by_label(label).unwrap_or_else(|| panic!("no group labelled {label}"));
    g.members.iter().map(|m| (m.layer.clone(), m.axis)).collect()
}

fn set(items: &[(&str, Axis)]) -> BTreeSet<(String, Axis)> {
    items.iter().map(|(l, a)| (l.to_string(), *a)).collect()
}

#[test]
fn inverted_residual_has_three_prunable_roles() {
    let g = common::inverted_residual_se();
    let coupling = build_coupling_groups(&g).unwrap();
    let labels: Vec<&str> = coupling.prunable_groups().map(|g| g.label.as_str()).collect();
    assert_eq!(labels, ["stem", "expand", "se_reduce"]);

    use Axis::{Input as I, Output as O};
    // projection output, skip source and every consumer of the sum
    assert_eq!(
        members(&g, "stem"),
        set(&[("stem", O), ("expand", I), ("project", O), ("skip_add", I), ("skip_add", O), ("head", I)])
    );
    // expansion, depthwise, SE expansion and the gate multiply
    assert_eq!(
        members(&g, "expand"),
        set(&[
            ("expand", O),
            ("expand_act", I),
            ("expand_act", O),
            ("dw", I),
            ("dw", O),
            ("dw_act", I),
            ("dw_act", O),
            ("se_pool", I),
            ("se_pool", O),
            ("se_reduce", I),
            ("se_expand", O),
            ("se_gate", I),
            ("se_gate", O),
            ("se_mul", I),
            ("se_mul", O),
            ("project", I),
        ])
    );
    assert_eq!(
        members(&g, "se_reduce"),
        set(&[("se_reduce", O), ("se_reduce_act", I), ("se_reduce_act", O), ("se_expand", I)])
    );
}

#[test]
fn inverted_residual_middle_group_saving() {
    // expand out: 8*14*14, dw: 14*14*9, se_reduce in: 4, se_expand out: 4, project in: 8*14*14
    let g = common::inverted_residual_se();
    let coupling = build_coupling_groups(&g).unwrap();
    let group = coupling.find_by_label("expand").unwrap();
    let hw = 14 * 14;
    assert_eq!(channel_flops_saving(&g, group).unwrap(), (8 * hw + hw * 9 + 4 + 4 + 8 * hw) as u64);
}

#[test]
fn resnet_stage_shares_one_group() {
    let g = common::resnet_basic_stage();
    let coupling = build_coupling_groups(&g).unwrap();
    let group = coupling.group_of(g.layer_index("block0.conv2").unwrap(), Axis::Output);
    for id in ["block0.downsample", "block1.conv2", "block0.add", "block1.add"] {
        assert_eq!(coupling.group_of(g.layer_index(id).unwrap(), Axis::Output), group, "{id}");
    }
    assert_eq!(coupling.group_of(g.layer_index("block1.conv1").unwrap(), Axis::Input), group);
    assert_ne!(coupling.group_of(g.layer_index("block1.conv1").unwrap(), Axis::Output), group);
    assert!(coupling.group(group).unwrap().prunable);
}

#[test]
fn grouped_and_boundary_axes_are_kept_whole() {
    let g = common::resnet_basic_stage();
    let coupling = build_coupling_groups(&g).unwrap();
    let fc = g.layer_index("fc").unwrap();
    assert!(!coupling.group(coupling.group_of(fc, Axis::Output)).unwrap().prunable);
    let stem = g.layer_index("stem").unwrap();
    assert!(!coupling.group(coupling.group_of(stem, Axis::Input)).unwrap().prunable);
}

#[test]
fn random_dags_prune_to_valid_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let g = common::random_dag(&mut rng);
        let coupling = build_coupling_groups(&g).unwrap();

        // partition: each (layer, axis) in exactly one group
        let mut seen = BTreeSet::new();
        for group in coupling.groups() {
            for m in &group.members {
                assert!(seen.insert((m.layer_index, m.axis)));
                assert_eq!(g.layers()[m.layer_index].channels(m.axis), group.channel_count);
            }
        }
        assert_eq!(seen.len(), 2 * g.layers().len());

        let keep = common::random_keep_sets(&g, &mut rng);
        let pruned = apply_keep_sets(&g, &keep).unwrap();
        for (i, l) in pruned.layers().iter().enumerate() {
            if l.kind.is_elementwise() {
                for &p in pruned.predecessors(i) {
                    assert_eq!(pruned.layers()[p].c_out, l.c_in);
                }
            }
            if l.kind == LayerKind::DepthwiseConv {
                assert_eq!(l.groups, l.c_out);
            }
        }
        let plan = PrunePlan::from_keep_sets(keep);
        assert_eq!(prunepack::apply_prune_plan(&g, &plan).unwrap(), pruned);
        assert!(network_flops(&pruned).unwrap() <= network_flops(&g).unwrap());
    }
}
