//! Fixtures shared by the integration tests of this crate and the CLI
//! acceptance suite (included there via `#[path]`).
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use prunepack::{
    build_coupling_groups, parse_graph, ChannelImportance, GraphBuilder, ImportanceMode, KnapsackInstance, NetworkGraph,
};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn resnet50() -> NetworkGraph {
    let text = std::fs::read_to_string(fixture_path("resnet50.json")).expect("fixture present");
    parse_graph(&text).expect("fixture parses")
}

/// Uniform scores in `[0.001, 1)` for every weighted layer, in layer order.
pub fn random_scores(graph: &NetworkGraph, rng: &mut ChaCha8Rng) -> Vec<ChannelImportance> {
    graph
        .layers()
        .iter()
        .filter(|l| l.kind.is_compute())
        .map(|l| ChannelImportance {
            layer_id: l.id.clone(),
            scores: (0..l.c_out).map(|_| rng.gen_range(0.001..1.0)).collect(),
            mode: ImportanceMode::AbsProduct,
        })
        .collect()
}

/// `stem -> [expand -> dw -> SE -> project] + skip -> head -> output`.
///
/// SE: global pool, reduction conv, activation, expansion conv, gate
/// activation, channel-wise multiply.
pub fn inverted_residual_se() -> NetworkGraph {
    let (c, e, r, hw) = (8, 32, 4, 14);
    let mut b = GraphBuilder::new(3, hw, hw);
    let stem = b.conv("stem", b.input(), c, 3, hw, hw);
    let expand = b.pointwise("expand", &stem, e, hw, hw);
    let expand_act = b.activation("expand_act", &expand);
    let dw = b.depthwise("dw", &expand_act, 3, hw, hw);
    let dw_act = b.activation("dw_act", &dw);
    let pool = b.global_avg_pool("se_pool", &dw_act);
    let reduce = b.pointwise("se_reduce", &pool, r, 1, 1);
    let reduce_act = b.activation("se_reduce_act", &reduce);
    let se_expand = b.pointwise("se_expand", &reduce_act, e, 1, 1);
    let gate = b.activation("se_gate", &se_expand);
    let scaled = b.mul("se_mul", &[&dw_act, &gate]);
    let project = b.pointwise("project", &scaled, c, hw, hw);
    let sum = b.add("skip_add", &[&project, &stem]);
    let head = b.pointwise("head", &sum, 16, hw, hw);
    b.output(head);
    b.build().unwrap()
}

/// Two basic blocks, the first with a projection shortcut.
pub fn resnet_basic_stage() -> NetworkGraph {
    let hw = 8;
    let mut b = GraphBuilder::new(3, hw, hw);
    let stem = b.conv("stem", b.input(), 8, 3, hw, hw);
    let a0 = b.conv("block0.conv1", &stem, 16, 3, hw, hw);
    let a1 = b.conv("block0.conv2", &a0, 16, 3, hw, hw);
    let down = b.conv("block0.downsample", &stem, 16, 1, hw, hw);
    let add0 = b.add("block0.add", &[&a1, &down]);
    let b0 = b.conv("block1.conv1", &add0, 16, 3, hw, hw);
    let b1 = b.conv("block1.conv2", &b0, 16, 3, hw, hw);
    let add1 = b.add("block1.add", &[&b1, &add0]);
    let pool = b.global_avg_pool("pool", &add1);
    let fc = b.linear("fc", &pool, 10);
    b.output(fc);
    b.build().unwrap()
}

/// Sequential chain of `depth` 3x3 convs of `width` channels.
pub fn sequential_chain(width: usize, depth: usize, hw: usize) -> NetworkGraph {
    let mut b = GraphBuilder::new(3, hw, hw);
    let mut prev = b.input();
    for i in 0..depth {
        prev = b.conv(&format!("conv{i}"), &prev, width, 3, hw, hw);
    }
    b.output(prev);
    b.build().unwrap()
}

/// Random network of 1 to 6 blocks drawn from: plain conv, residual basic
/// block (identity or projection skip), inverted residual with optional SE
/// and skip, grouped conv, depthwise separable pair. Ends in pool, linear,
/// output.
pub fn random_dag(rng: &mut ChaCha8Rng) -> NetworkGraph {
    let widths = [4usize, 6, 8, 12, 16];
    let mut hw = *[4usize, 8, 16].choose(rng).unwrap();
    let mut b = GraphBuilder::new(3, hw, hw);
    let mut prev = b.conv("stem", b.input(), *widths.choose(rng).unwrap(), 3, hw, hw);
    let mut c = b.channels(&prev);
    let blocks = rng.gen_range(1..=6);
    for i in 0..blocks {
        let p = format!("b{i}");
        if hw > 2 && rng.gen_bool(0.2) {
            hw /= 2;
        }
        match rng.gen_range(0..5) {
            0 => {
                let out = *widths.choose(rng).unwrap();
                prev = b.conv(&format!("{p}.conv"), &prev, out, rng.gen_range(1..=2) * 2 - 1, hw, hw);
                if rng.gen_bool(0.5) {
                    prev = b.activation(&format!("{p}.act"), &prev);
                }
            }
            1 => {
                let out = if rng.gen_bool(0.5) { c } else { *widths.choose(rng).unwrap() };
                let mid = *widths.choose(rng).unwrap();
                let x = b.conv(&format!("{p}.conv1"), &prev, mid, 3, hw, hw);
                let y = b.conv(&format!("{p}.conv2"), &x, out, 3, hw, hw);
                let skip = if out == c && rng.gen_bool(0.7) {
                    prev.clone()
                } else {
                    b.conv(&format!("{p}.downsample"), &prev, out, 1, hw, hw)
                };
                prev = b.add(&format!("{p}.add"), &[&y, &skip]);
            }
            2 => {
                let e = c * rng.gen_range(2..=4);
                let x = b.pointwise(&format!("{p}.expand"), &prev, e, hw, hw);
                let mut y = b.depthwise(&format!("{p}.dw"), &x, 3, hw, hw);
                if rng.gen_bool(0.6) {
                    let pool = b.global_avg_pool(&format!("{p}.se_pool"), &y);
                    let red = b.pointwise(&format!("{p}.se_reduce"), &pool, rng.gen_range(1..=4), 1, 1);
                    let exp = b.pointwise(&format!("{p}.se_expand"), &red, e, 1, 1);
                    let gate = b.activation(&format!("{p}.se_gate"), &exp);
                    y = b.mul(&format!("{p}.se_mul"), &[&y, &gate]);
                }
                let out = if rng.gen_bool(0.6) { c } else { *widths.choose(rng).unwrap() };
                let z = b.pointwise(&format!("{p}.project"), &y, out, hw, hw);
                prev = if out == c && rng.gen_bool(0.8) { b.add(&format!("{p}.add"), &[&z, &prev]) } else { z };
            }
            3 => {
                let divisors: Vec<usize> = (2..=c).filter(|g| c % g == 0).collect();
                match divisors.choose(rng) {
                    Some(&groups) => {
                        prev = b.grouped_conv(&format!("{p}.gconv"), &prev, groups * rng.gen_range(1..=3), 3, groups, hw, hw);
                    }
                    None => prev = b.conv(&format!("{p}.conv"), &prev, c, 3, hw, hw),
                }
            }
            _ => {
                let x = b.depthwise(&format!("{p}.dw"), &prev, 3, hw, hw);
                prev = b.pointwise(&format!("{p}.pw"), &x, *widths.choose(rng).unwrap(), hw, hw);
            }
        }
        c = b.channels(&prev);
    }
    let pool = b.global_avg_pool("pool", &prev);
    let fc = b.linear("fc", &pool, rng.gen_range(2..=10));
    b.output(fc);
    b.build().expect("random dag is valid")
}

/// Random nonempty sorted keep set for every prunable group.
pub fn random_keep_sets(graph: &NetworkGraph, rng: &mut ChaCha8Rng) -> BTreeMap<usize, Vec<usize>> {
    let coupling = build_coupling_groups(graph).unwrap();
    coupling
        .prunable_groups()
        .map(|g| {
            let n = g.channel_count;
            let k = rng.gen_range(1..=n);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            let mut keep = idx[..k].to_vec();
            keep.sort_unstable();
            (g.group_id, keep)
        })
        .collect()
}

/// `n <= max_n` items, integer values in `[0, 100]`, weights in `[1, 50]`.
pub fn random_instance(rng: &mut ChaCha8Rng, max_n: usize) -> KnapsackInstance {
    let n = rng.gen_range(0..=max_n);
    let values = (0..n).map(|_| rng.gen_range(0..=100) as f64).collect();
    let weights: Vec<u64> = (0..n).map(|_| rng.gen_range(1..=50)).collect();
    let total: u64 = weights.iter().sum();
    let capacity = rng.gen_range(0..=total.max(1));
    KnapsackInstance::new(values, weights, capacity).unwrap()
}
