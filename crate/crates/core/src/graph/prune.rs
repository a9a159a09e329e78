use std::collections::BTreeMap;

use super::{build_coupling_groups, Axis, LayerKind, NetworkGraph};
use crate::error::{Error, Result};
use crate::plan::PrunePlan;

/// Returns a new graph with every coupled axis shrunk to the plan's kept
/// channels. The input graph is not modified.
pub fn apply_prune_plan(graph: &NetworkGraph, plan: &PrunePlan) -> Result<NetworkGraph> {
    apply_keep_sets(graph, &plan.groups)
}

/// [`apply_prune_plan`] on bare keep sets (group id → sorted kept indices).
pub fn apply_keep_sets(graph: &NetworkGraph, keep: &BTreeMap<usize, Vec<usize>>) -> Result<NetworkGraph> {
    let coupling = build_coupling_groups(graph)?;
    let mut counts: Vec<usize> = coupling.groups().iter().map(|g| g.channel_count).collect();
    for (&gid, kept) in keep {
        let group = coupling
            .group(gid)
            .ok_or_else(|| Error::PlanMismatch(format!("group {gid} does not exist in this graph")))?;
        if kept.is_empty() {
            return Err(Error::EmptyGroup { group: gid });
        }
        if kept.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::PlanMismatch(format!("group {gid} kept indices are not sorted and unique")));
        }
        if let Some(&last) = kept.last() {
            if last >= group.channel_count {
                return Err(Error::PlanMismatch(format!(
                    "group {gid} keeps index {last} but has {} channels",
                    group.channel_count
                )));
            }
        }
        if !group.prunable && kept.len() != group.channel_count {
            return Err(Error::PlanMismatch(format!("group {gid} ({}) is not prunable", group.label)));
        }
        counts[gid] = kept.len();
    }

    let layers = graph
        .layers()
        .iter()
        .enumerate()
        .map(|(i, layer)| {
            let mut l = layer.clone();
            l.c_in = counts[coupling.group_of(i, Axis::Input)];
            l.c_out = counts[coupling.group_of(i, Axis::Output)];
            if l.kind == LayerKind::DepthwiseConv {
                l.groups = l.c_in;
            }
            l
        })
        .collect();
    graph.with_layers(layers)
}
