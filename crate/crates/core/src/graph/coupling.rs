use std::collections::BTreeMap;
use std::fmt;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use super::{LayerKind, NetworkGraph};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Input,
    Output,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Input => "input",
            Axis::Output => "output",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisRef {
    pub layer: String,
    #[serde(skip)]
    pub layer_index: usize,
    pub axis: Axis,
}

/// Channel axes that must keep identical channel sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CouplingGroup {
    pub group_id: usize,
    /// Id of the first weighted layer producing this group's channels.
    pub label: String,
    pub members: Vec<AxisRef>,
    pub channel_count: usize,
    pub prunable: bool,
}

impl CouplingGroup {
    pub fn contains(&self, layer_index: usize, axis: Axis) -> bool {
        self.members.iter().any(|m| m.layer_index == layer_index && m.axis == axis)
    }
}

/// Partition of every channel axis of a graph into coupling groups.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Coupling {
    groups: Vec<CouplingGroup>,
    axis_group: Vec<usize>,
}

fn axis_slot(layer: usize, axis: Axis) -> usize {
    2 * layer + usize::from(axis == Axis::Output)
}

impl Coupling {
    pub fn groups(&self) -> &[CouplingGroup] {
        &self.groups
    }

    pub fn group(&self, group_id: usize) -> Option<&CouplingGroup> {
        self.groups.get(group_id)
    }

    pub fn group_of(&self, layer_index: usize, axis: Axis) -> usize {
        self.axis_group[axis_slot(layer_index, axis)]
    }

    pub fn prunable_groups(&self) -> impl Iterator<Item = &CouplingGroup> {
        self.groups.iter().filter(|g| g.prunable)
    }

    pub fn find_by_label(&self, label: &str) -> Option<&CouplingGroup> {
        self.groups.iter().find(|g| g.label == label)
    }
}

/// Partitions all channel axes with union-find:
///
/// * producer output and consumer input are merged along every edge;
/// * channel-preserving layers (elementwise junctions, pooling, activations,
///   depthwise convs, graph input/output) merge their own input and output,
///   which ties all junction operands together;
/// * a group is prunable only if none of its layers is the graph input or
///   output, flagged non-prunable, or a grouped (non-depthwise) conv.
///
/// Group ids are assigned in order of each group's first axis (layer order,
/// input before output), so they are stable for a given document.
pub fn build_coupling_groups(graph: &NetworkGraph) -> Result<Coupling> {
    let layers = graph.layers();
    let n_axes = 2 * layers.len();
    let mut uf = UnionFind::<usize>::new(n_axes);

    for (i, layer) in layers.iter().enumerate() {
        if layer.kind == LayerKind::Concat {
            return Err(Error::UnsupportedJunction { layer: layer.id.clone(), kind: layer.kind.to_string() });
        }
        if layer.kind.is_channel_preserving() {
            uf.union(axis_slot(i, Axis::Input), axis_slot(i, Axis::Output));
        }
    }
    for &(p, c) in graph.edges() {
        uf.union(axis_slot(p, Axis::Output), axis_slot(c, Axis::Input));
    }

    let mut root_to_group: BTreeMap<usize, usize> = BTreeMap::new();
    let mut axis_group = vec![0; n_axes];
    let mut groups: Vec<CouplingGroup> = Vec::new();
    for slot in 0..n_axes {
        let root = uf.find(slot);
        let next = groups.len();
        let gid = *root_to_group.entry(root).or_insert(next);
        if gid == next {
            groups.push(CouplingGroup { group_id: gid, label: String::new(), members: Vec::new(), channel_count: 0, prunable: true });
        }
        axis_group[slot] = gid;
        let layer_index = slot / 2;
        let axis = if slot % 2 == 0 { Axis::Input } else { Axis::Output };
        groups[gid].members.push(AxisRef { layer: layers[layer_index].id.clone(), layer_index, axis });
    }

    for group in &mut groups {
        let first = &group.members[0];
        group.channel_count = layers[first.layer_index].channels(first.axis);
        for m in &group.members {
            let layer = &layers[m.layer_index];
            let c = layer.channels(m.axis);
            if c != group.channel_count {
                return Err(Error::InconsistentGroup {
                    group: group.group_id,
                    detail: format!(
                        "{}:{} has {} channels, {}:{} has {}",
                        first.layer, first.axis, group.channel_count, m.layer, m.axis, c
                    ),
                });
            }
            let grouped = layer.groups > 1 && layer.kind != LayerKind::DepthwiseConv;
            if !layer.is_prunable() || matches!(layer.kind, LayerKind::Input | LayerKind::Output) || grouped {
                group.prunable = false;
            }
        }
        group.label = group
            .members
            .iter()
            .find(|m| m.axis == Axis::Output && layers[m.layer_index].kind.is_compute())
            .unwrap_or(&group.members[0])
            .layer
            .clone();
    }

    Ok(Coupling { groups, axis_group })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;

    fn prunable_member_sets(c: &Coupling) -> Vec<Vec<String>> {
        c.prunable_groups()
            .map(|g| g.members.iter().map(|m| format!("{}:{}", m.layer, m.axis)).collect())
            .collect()
    }

    #[test]
    fn sequential_chain_groups_each_output() {
        let mut b = GraphBuilder::new(3, 8, 8);
        let a = b.conv("a", b.input(), 8, 3, 8, 8);
        let c = b.conv("b", &a, 16, 3, 8, 8);
        let d = b.conv("c", &c, 4, 3, 8, 8);
        b.output(&d);
        let g = b.build().unwrap();
        let coupling = build_coupling_groups(&g).unwrap();
        assert_eq!(
            prunable_member_sets(&coupling),
            vec![vec!["a:output", "b:input"], vec!["b:output", "c:input"]]
        );
        // the last conv feeds the graph output
        let last = coupling.group_of(3, Axis::Output);
        assert!(!coupling.groups()[last].prunable);
        assert_eq!(coupling.groups().len(), 4);
    }

    #[test]
    fn partition_covers_every_axis_once() {
        let mut b = GraphBuilder::new(3, 8, 8);
        let stem = b.conv("stem", b.input(), 8, 3, 8, 8);
        let c1 = b.conv("c1", &stem, 8, 3, 8, 8);
        let c2 = b.conv("c2", &c1, 8, 3, 8, 8);
        let add = b.add("add", &[&c2, &stem]);
        b.output(&add);
        let g = b.build().unwrap();
        let coupling = build_coupling_groups(&g).unwrap();
        let total: usize = coupling.groups().iter().map(|g| g.members.len()).sum();
        assert_eq!(total, 2 * g.layers().len());
        for (i, _) in g.layers().iter().enumerate() {
            for axis in [Axis::Input, Axis::Output] {
                let owners = coupling.groups().iter().filter(|grp| grp.contains(i, axis)).count();
                assert_eq!(owners, 1);
            }
        }
        // the skip add reaches the output, so stem/c2 are poisoned
        assert_eq!(prunable_member_sets(&coupling), vec![vec!["c1:output", "c2:input"]]);
    }

    #[test]
    fn grouped_conv_poisons_its_groups() {
        let mut b = GraphBuilder::new(3, 8, 8);
        let a = b.conv("a", b.input(), 8, 3, 8, 8);
        let gc = b.grouped_conv("g", &a, 8, 3, 2, 8, 8);
        let c = b.conv("c", &gc, 8, 3, 8, 8);
        let d = b.conv("d", &c, 4, 1, 8, 8);
        b.output(&d);
        let coupling = build_coupling_groups(&b.build().unwrap()).unwrap();
        assert_eq!(prunable_member_sets(&coupling), vec![vec!["c:output", "d:input"]]);
    }

    #[test]
    fn labels_follow_first_weighted_producer() {
        let mut b = GraphBuilder::new(3, 8, 8);
        let a = b.conv("a", b.input(), 8, 3, 8, 8);
        let r = b.activation("relu", &a);
        let c = b.conv("b", &r, 4, 3, 8, 8);
        b.output(&c);
        let coupling = build_coupling_groups(&b.build().unwrap()).unwrap();
        let g = coupling.find_by_label("a").unwrap();
        assert!(g.prunable);
        assert_eq!(g.members.len(), 4);
        assert_eq!(coupling.find_by_label("input").unwrap().group_id, 0);
    }
}
