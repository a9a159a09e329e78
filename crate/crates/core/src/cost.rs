//! Compute weight of one channel of a coupling group.
//!
//! Removing a channel of a group removes, for every member axis, one slice
//! of that layer's work: an output channel of a conv saves
//! `(c_in / groups) * h * w * k^2`, an input channel saves
//! `(c_out / groups) * h * w * k^2`. A depthwise conv owns both axes of one
//! channel and is counted once (`h * w * k^2`).
//!
//! Because a sequential layer's FLOPs show up once through its output axis
//! and once through its consumer-side input axis, item weights overlap; the
//! planner bridges item weights and true FLOPs by bisection.

use std::collections::BTreeMap;

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Axis, AxisRef, Coupling, CouplingGroup, LayerKind, LayerSpec, NetworkGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostUnit {
    Flops,
    /// Integer nanoseconds derived from microsecond measurements.
    LatencyUs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelCost {
    pub group_id: usize,
    pub per_channel_cost: u64,
    pub unit: CostUnit,
}

/// Work attributed to one channel of `member`'s axis, if it is counted.
fn member_flops(layer: &LayerSpec, axis: Axis) -> u64 {
    if !layer.kind.is_compute() {
        return 0;
    }
    let spatial = (layer.h_out * layer.w_out * layer.kernel * layer.kernel) as u64;
    match (layer.kind, axis) {
        (LayerKind::DepthwiseConv, Axis::Output) => spatial,
        (LayerKind::DepthwiseConv, Axis::Input) => 0,
        (_, Axis::Output) => (layer.c_in / layer.groups) as u64 * spatial,
        (_, Axis::Input) => (layer.c_out / layer.groups) as u64 * spatial,
    }
}

fn counted_members<'a>(graph: &'a NetworkGraph, group: &'a CouplingGroup) -> impl Iterator<Item = (&'a AxisRef, &'a LayerSpec)> {
    group.members.iter().map(move |m| (m, &graph.layers()[m.layer_index]))
}

/// FLOPs saved by removing one channel of `group`.
pub fn channel_flops_saving(graph: &NetworkGraph, group: &CouplingGroup) -> Result<u64> {
    if !group.prunable {
        return Err(Error::NonPrunableGroup { group: group.group_id });
    }
    Ok(counted_members(graph, group).map(|(m, l)| member_flops(l, m.axis)).sum())
}

pub fn build_flops_costs(graph: &NetworkGraph, coupling: &Coupling) -> Result<Vec<ChannelCost>> {
    coupling
        .prunable_groups()
        .map(|g| {
            Ok(ChannelCost { group_id: g.group_id, per_channel_cost: channel_flops_saving(graph, g)?, unit: CostUnit::Flops })
        })
        .collect()
}

fn measured(table: &BTreeMap<String, f64>, layer: &LayerSpec) -> Result<f64> {
    let us = *table.get(&layer.id).ok_or_else(|| Error::MissingLatency { layer: layer.id.clone() })?;
    if !(us.is_finite() && us > 0.0) {
        return Err(Error::NonPositiveLatency { layer: layer.id.clone(), value: us });
    }
    Ok(us)
}

/// Latency attributed uniformly per channel: each counted member adds
/// `round(layer_us * 1000 / channels)` nanosecond quanta, where `channels`
/// is the layer's channel count along that axis. A linear-in-channels proxy;
/// group totals are at least one quantum.
pub fn build_latency_costs(graph: &NetworkGraph, coupling: &Coupling, table: &BTreeMap<String, f64>) -> Result<Vec<ChannelCost>> {
    for layer in graph.layers().iter().filter(|l| l.kind.is_compute()) {
        measured(table, layer)?;
    }
    coupling
        .prunable_groups()
        .map(|g| {
            let mut total = 0u64;
            for (m, layer) in counted_members(graph, g) {
                if !layer.kind.is_compute() || (layer.kind == LayerKind::DepthwiseConv && m.axis == Axis::Input) {
                    continue;
                }
                total += latency_quanta(measured(table, layer)?, layer.channels(m.axis));
            }
            Ok(ChannelCost { group_id: g.group_id, per_channel_cost: total.max(1), unit: CostUnit::LatencyUs })
        })
        .collect()
}

pub fn latency_quanta(layer_us: f64, channels: usize) -> u64 {
    (layer_us * 1000.0 / channels as f64).round() as u64
}

/// True FLOPs of the graph with each group shrunk to `counts[group_id]`.
pub fn flops_with_counts(graph: &NetworkGraph, coupling: &Coupling, counts: &[usize]) -> u64 {
    graph
        .layers()
        .iter()
        .enumerate()
        .filter(|(_, l)| l.kind.is_compute())
        .map(|(i, l)| {
            let c_in = counts[coupling.group_of(i, Axis::Input)];
            let c_out = counts[coupling.group_of(i, Axis::Output)];
            let groups = if l.kind == LayerKind::DepthwiseConv { c_in } else { l.groups };
            crate::graph::flops::conv_macs(c_out, c_in, groups, l)
        })
        .sum()
}

/// Latency estimate with per-layer time scaled by the kept fraction of
/// each of its channel axes (depthwise: of its single channel axis).
pub fn estimated_latency_us(graph: &NetworkGraph, coupling: &Coupling, counts: &[usize], table: &BTreeMap<String, f64>) -> Result<f64> {
    let mut total = 0.0;
    for (i, l) in graph.layers().iter().enumerate().filter(|(_, l)| l.kind.is_compute()) {
        let us = measured(table, l)?;
        let fin = counts[coupling.group_of(i, Axis::Input)] as f64 / l.c_in as f64;
        let fout = counts[coupling.group_of(i, Axis::Output)] as f64 / l.c_out as f64;
        total += if l.kind == LayerKind::DepthwiseConv { us * fout } else { us * fin * fout };
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GcdReduction {
    pub weights: Vec<u64>,
    pub capacity: u64,
    pub gcd: u64,
}

/// Divides weights by their GCD and floors the capacity by it. Every
/// achievable total weight is a multiple of the GCD, so the feasible sets
/// are unchanged.
pub fn gcd_reduce(weights: &[u64], capacity: u64) -> Result<GcdReduction> {
    if weights.is_empty() {
        return Err(Error::EmptyWeights);
    }
    if let Some(index) = weights.iter().position(|&w| w == 0) {
        return Err(Error::ZeroWeight { index });
    }
    let g = weights.iter().fold(0u64, |acc, &w| acc.gcd(&w));
    Ok(GcdReduction { weights: weights.iter().map(|w| w / g).collect(), capacity: capacity / g, gcd: g })
}

/// Reads a latency table document `{"<layer_id>": microseconds}`.
pub fn parse_latency_table(text: &str) -> Result<BTreeMap<String, f64>> {
    serde_json::from_str(text).map_err(Error::from_json)
}
