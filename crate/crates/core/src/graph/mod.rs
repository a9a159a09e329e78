//! Network intermediate representation.
//!
//! A [`NetworkGraph`] is a validated DAG of [`LayerSpec`]s. Every layer has
//! an input and an output channel axis; coupling groups
//! ([`build_coupling_groups`]) partition those axes into sets that must be
//! pruned together.
//!
//! # Document format
//!
//! ```json
//! {
//!   "version": 1,
//!   "input_resolution": [224, 224],
//!   "layers": [
//!     {"id": "input", "kind": "input", "c_in": 3, "c_out": 3, "h_out": 224, "w_out": 224, "prunable": false},
//!     {"id": "conv1", "kind": "conv", "c_in": 3, "c_out": 64, "h_out": 112, "w_out": 112,
//!      "kernel": 7, "stride": 2, "groups": 1}
//!   ],
//!   "edges": [["input", "conv1"]]
//! }
//! ```
//!
//! `h_out`/`w_out` are the layer's *output* spatial dims as computed by the
//! exporter, so strides are already folded in: a conv costs
//! `c_out * c_in * h_out * w_out * kernel^2 / groups` multiply-accumulates.
//! `kernel`, `stride` and `groups` default to 1; `prunable` defaults to
//! `false` for `input`/`output` layers and `true` otherwise. Unknown fields
//! are rejected.

mod builder;
mod coupling;
pub(crate) mod flops;
mod prune;

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use petgraph::algo::toposort;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use builder::GraphBuilder;
pub use coupling::{build_coupling_groups, Axis, AxisRef, Coupling, CouplingGroup};
pub use flops::{layer_flops, network_flops};
pub use prune::{apply_keep_sets, apply_prune_plan};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    DepthwiseConv,
    PointwiseConv,
    Linear,
    GlobalAvgPool,
    ElementwiseAdd,
    ElementwiseMul,
    Activation,
    Input,
    Output,
    /// Parsed so that it can be rejected with a clear error.
    Concat,
}

impl LayerKind {
    /// Layers that perform multiply-accumulates and own trainable weights.
    pub fn is_compute(self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::DepthwiseConv | LayerKind::PointwiseConv | LayerKind::Linear)
    }

    /// Layers whose output channels are their input channels.
    pub fn is_channel_preserving(self) -> bool {
        matches!(
            self,
            LayerKind::GlobalAvgPool
                | LayerKind::ElementwiseAdd
                | LayerKind::ElementwiseMul
                | LayerKind::Activation
                | LayerKind::Input
                | LayerKind::Output
                | LayerKind::DepthwiseConv
        )
    }

    pub fn is_elementwise(self) -> bool {
        matches!(self, LayerKind::ElementwiseAdd | LayerKind::ElementwiseMul)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::DepthwiseConv => "depthwise_conv",
            LayerKind::PointwiseConv => "pointwise_conv",
            LayerKind::Linear => "linear",
            LayerKind::GlobalAvgPool => "global_avg_pool",
            LayerKind::ElementwiseAdd => "elementwise_add",
            LayerKind::ElementwiseMul => "elementwise_mul",
            LayerKind::Activation => "activation",
            LayerKind::Input => "input",
            LayerKind::Output => "output",
            LayerKind::Concat => "concat",
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub id: String,
    pub kind: LayerKind,
    pub c_in: usize,
    pub c_out: usize,
    pub h_out: usize,
    pub w_out: usize,
    #[serde(default = "one")]
    pub kernel: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default = "one")]
    pub groups: usize,
    #[serde(default)]
    pub prunable: Option<bool>,
}

fn one() -> usize {
    1
}

impl LayerSpec {
    pub fn is_prunable(&self) -> bool {
        self.prunable.unwrap_or(!matches!(self.kind, LayerKind::Input | LayerKind::Output))
    }

    pub fn channels(&self, axis: Axis) -> usize {
        match axis {
            Axis::Input => self.c_in,
            Axis::Output => self.c_out,
        }
    }

    fn validate(&self) -> Result<()> {
        let err = |reason: String| Err(Error::layer(&self.id, reason));
        if !valid_id(&self.id) {
            return err("id must match [A-Za-z0-9._-]+".into());
        }
        for (name, v) in [
            ("c_in", self.c_in),
            ("c_out", self.c_out),
            ("h_out", self.h_out),
            ("w_out", self.w_out),
            ("kernel", self.kernel),
            ("stride", self.stride),
            ("groups", self.groups),
        ] {
            if v == 0 {
                return err(format!("{name} must be positive"));
            }
        }
        if self.kind == LayerKind::Concat {
            return Err(Error::UnsupportedJunction { layer: self.id.clone(), kind: self.kind.to_string() });
        }
        if self.c_in % self.groups != 0 || self.c_out % self.groups != 0 {
            return err(format!("groups={} must divide c_in={} and c_out={}", self.groups, self.c_in, self.c_out));
        }
        match self.kind {
            LayerKind::DepthwiseConv => {
                if self.c_in != self.c_out || self.groups != self.c_in {
                    return err(format!(
                        "depthwise conv needs c_in == c_out == groups, got c_in={} c_out={} groups={}",
                        self.c_in, self.c_out, self.groups
                    ));
                }
            }
            LayerKind::PointwiseConv if self.kernel != 1 => {
                return err(format!("pointwise conv needs kernel 1, got {}", self.kernel));
            }
            LayerKind::Linear if self.kernel != 1 || self.groups != 1 => {
                return err("linear layers need kernel 1 and groups 1".into());
            }
            LayerKind::Conv | LayerKind::PointwiseConv | LayerKind::Linear => {}
            _ => {
                if self.c_in != self.c_out {
                    return err(format!("{} layers need c_in == c_out, got {} and {}", self.kind, self.c_in, self.c_out));
                }
                if self.groups != 1 {
                    return err(format!("{} layers take no groups", self.kind));
                }
            }
        }
        if matches!(self.kind, LayerKind::Input | LayerKind::Output) && self.prunable == Some(true) {
            return err(format!("{} layers cannot be prunable", self.kind));
        }
        Ok(())
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDocument {
    version: u32,
    input_resolution: [usize; 2],
    layers: Vec<LayerSpec>,
    edges: Vec<[String; 2]>,
}

/// A validated network graph. Construction always validates, so every
/// value of this type satisfies the layer and graph invariants.
#[derive(Clone, Debug)]
pub struct NetworkGraph {
    layers: Vec<LayerSpec>,
    edges: Vec<(usize, usize)>,
    input_resolution: (usize, usize),
    index: HashMap<String, usize>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
}

impl PartialEq for NetworkGraph {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.edges == other.edges && self.input_resolution == other.input_resolution
    }
}

/// Parses and validates a graph document.
pub fn parse_graph(document: &str) -> Result<NetworkGraph> {
    let doc: GraphDocument = serde_json::from_str(document).map_err(Error::from_json)?;
    if doc.version != FORMAT_VERSION {
        return Err(Error::InvalidGraph(format!("unsupported version {}", doc.version)));
    }
    let edges = doc.edges.into_iter().map(|[a, b]| (a, b)).collect();
    NetworkGraph::new(doc.layers, edges, (doc.input_resolution[0], doc.input_resolution[1]))
}

impl NetworkGraph {
    pub fn new(layers: Vec<LayerSpec>, edges: Vec<(String, String)>, input_resolution: (usize, usize)) -> Result<Self> {
        if input_resolution.0 == 0 || input_resolution.1 == 0 {
            return Err(Error::InvalidGraph("input_resolution must be positive".into()));
        }
        let mut index = HashMap::with_capacity(layers.len());
        for (i, layer) in layers.iter().enumerate() {
            layer.validate()?;
            if index.insert(layer.id.clone(), i).is_some() {
                return Err(Error::layer(&layer.id, "duplicate id"));
            }
        }
        let lookup = |id: &str| index.get(id).copied().ok_or_else(|| Error::InvalidGraph(format!("edge references unknown layer `{id}`")));
        let mut resolved = Vec::with_capacity(edges.len());
        let mut seen = HashSet::new();
        for (src, dst) in &edges {
            let e = (lookup(src)?, lookup(dst)?);
            if e.0 == e.1 {
                return Err(Error::layer(src, "self loop"));
            }
            if !seen.insert(e) {
                return Err(Error::InvalidGraph(format!("duplicate edge {src} -> {dst}")));
            }
            resolved.push(e);
        }
        let mut graph = NetworkGraph {
            layers,
            edges: resolved,
            input_resolution,
            index,
            preds: Vec::new(),
            succs: Vec::new(),
        };
        graph.build_adjacency();
        graph.validate_structure()?;
        Ok(graph)
    }

    fn build_adjacency(&mut self) {
        let n = self.layers.len();
        self.preds = vec![Vec::new(); n];
        self.succs = vec![Vec::new(); n];
        for &(a, b) in &self.edges {
            self.succs[a].push(b);
            self.preds[b].push(a);
        }
    }

    fn validate_structure(&self) -> Result<()> {
        let inputs: Vec<usize> = self.find_kind(LayerKind::Input);
        let outputs: Vec<usize> = self.find_kind(LayerKind::Output);
        if inputs.len() != 1 || outputs.len() != 1 {
            return Err(Error::InvalidGraph(format!(
                "expected exactly one input and one output layer, found {} and {}",
                inputs.len(),
                outputs.len()
            )));
        }

        for (i, layer) in self.layers.iter().enumerate() {
            let n_pred = self.preds[i].len();
            let n_succ = self.succs[i].len();
            match layer.kind {
                LayerKind::Input if n_pred != 0 => return Err(Error::layer(&layer.id, "input layer has predecessors")),
                LayerKind::Input => {}
                k if k.is_elementwise() && n_pred < 2 => {
                    return Err(Error::layer(&layer.id, format!("{k} needs at least 2 operands, has {n_pred}")));
                }
                k if !k.is_elementwise() && n_pred != 1 => {
                    return Err(Error::layer(&layer.id, format!("{k} needs exactly 1 predecessor, has {n_pred}")));
                }
                _ => {}
            }
            match layer.kind {
                LayerKind::Output if n_succ != 0 => return Err(Error::layer(&layer.id, "output layer has successors")),
                LayerKind::Output => {}
                _ if n_succ == 0 => return Err(Error::layer(&layer.id, "dead end: output is not reachable")),
                _ => {}
            }
        }

        for &(a, b) in &self.edges {
            let (p, c) = (&self.layers[a], &self.layers[b]);
            if p.c_out != c.c_in {
                return Err(Error::layer(
                    &c.id,
                    format!("c_in={} does not match producer `{}` c_out={}", c.c_in, p.id, p.c_out),
                ));
            }
        }

        let mut dag = DiGraph::<(), ()>::with_capacity(self.layers.len(), self.edges.len());
        for _ in &self.layers {
            dag.add_node(());
        }
        for &(a, b) in &self.edges {
            dag.add_edge(NodeIndex::new(a), NodeIndex::new(b), ());
        }
        if let Err(cycle) = toposort(&dag, None) {
            return Err(Error::layer(&self.layers[cycle.node_id().index()].id, "graph contains a cycle"));
        }

        let forward = reach(inputs[0], &self.succs);
        let backward = reach(outputs[0], &self.preds);
        for (i, layer) in self.layers.iter().enumerate() {
            if !forward[i] {
                return Err(Error::layer(&layer.id, "not reachable from the input"));
            }
            if !backward[i] {
                return Err(Error::layer(&layer.id, "output not reachable from this layer"));
            }
        }
        Ok(())
    }

    fn find_kind(&self, kind: LayerKind) -> Vec<usize> {
        self.layers.iter().enumerate().filter(|(_, l)| l.kind == kind).map(|(i, _)| i).collect()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn layer(&self, id: &str) -> Option<&LayerSpec> {
        self.index.get(id).map(|&i| &self.layers[i])
    }

    pub fn layer_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Edges as layer index pairs, in document order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn predecessors(&self, layer: usize) -> &[usize] {
        &self.preds[layer]
    }

    pub fn successors(&self, layer: usize) -> &[usize] {
        &self.succs[layer]
    }

    pub fn input_resolution(&self) -> (usize, usize) {
        self.input_resolution
    }

    pub fn to_json(&self) -> String {
        let doc = GraphDocument {
            version: FORMAT_VERSION,
            input_resolution: [self.input_resolution.0, self.input_resolution.1],
            layers: self.layers.clone(),
            edges: self
                .edges
                .iter()
                .map(|&(a, b)| [self.layers[a].id.clone(), self.layers[b].id.clone()])
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("graph document serializes")
    }

    /// Rebuilds the graph with replaced layer specs; re-validates.
    pub(crate) fn with_layers(&self, layers: Vec<LayerSpec>) -> Result<Self> {
        let edges = self
            .edges
            .iter()
            .map(|&(a, b)| (layers[a].id.clone(), layers[b].id.clone()))
            .collect();
        NetworkGraph::new(layers, edges, self.input_resolution)
    }
}

fn reach(start: usize, adj: &[Vec<usize>]) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(n) = queue.pop_front() {
        for &m in &adj[n] {
            if !seen[m] {
                seen[m] = true;
                queue.push_back(m);
            }
        }
    }
    seen
}
