use super::{LayerKind, LayerSpec, NetworkGraph};
use crate::error::Result;

/// Programmatic construction of a [`NetworkGraph`]. Input channel counts
/// are taken from the producer; `build` runs full validation.
#[derive(Clone, Debug)]
pub struct GraphBuilder {
    layers: Vec<LayerSpec>,
    edges: Vec<(String, String)>,
    resolution: (usize, usize),
}

impl GraphBuilder {
    /// Starts a graph with an `input` layer of `channels` at `h`×`w`.
    pub fn new(channels: usize, h: usize, w: usize) -> Self {
        let input = LayerSpec {
            id: "input".into(),
            kind: LayerKind::Input,
            c_in: channels,
            c_out: channels,
            h_out: h,
            w_out: w,
            kernel: 1,
            stride: 1,
            groups: 1,
            prunable: Some(false),
        };
        GraphBuilder { layers: vec![input], edges: Vec::new(), resolution: (h, w) }
    }

    pub fn input(&self) -> String {
        "input".into()
    }

    /// Output channel count of an already added layer.
    pub fn channels(&self, id: &str) -> usize {
        self.producer(id).c_out
    }

    fn producer(&self, id: &str) -> &LayerSpec {
        self.layers.iter().find(|l| l.id == id).unwrap_or_else(|| panic!("unknown layer `{id}`"))
    }

    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, id: &str, kind: LayerKind, from: &[&str], c_out: usize, h: usize, w: usize, kernel: usize, groups: usize) -> String {
        let c_in = self.producer(from[0]).c_out;
        self.layers.push(LayerSpec {
            id: id.into(),
            kind,
            c_in,
            c_out,
            h_out: h,
            w_out: w,
            kernel,
            stride: 1,
            groups,
            prunable: None,
        });
        for f in from {
            self.edges.push((f.to_string(), id.into()));
        }
        id.into()
    }

    pub fn conv(&mut self, id: &str, from: impl AsRef<str>, c_out: usize, kernel: usize, h: usize, w: usize) -> String {
        self.push(id, LayerKind::Conv, &[from.as_ref()], c_out, h, w, kernel, 1)
    }

    pub fn grouped_conv(&mut self, id: &str, from: impl AsRef<str>, c_out: usize, kernel: usize, groups: usize, h: usize, w: usize) -> String {
        self.push(id, LayerKind::Conv, &[from.as_ref()], c_out, h, w, kernel, groups)
    }

    pub fn pointwise(&mut self, id: &str, from: impl AsRef<str>, c_out: usize, h: usize, w: usize) -> String {
        self.push(id, LayerKind::PointwiseConv, &[from.as_ref()], c_out, h, w, 1, 1)
    }

    pub fn depthwise(&mut self, id: &str, from: impl AsRef<str>, kernel: usize, h: usize, w: usize) -> String {
        let c = self.producer(from.as_ref()).c_out;
        self.push(id, LayerKind::DepthwiseConv, &[from.as_ref()], c, h, w, kernel, c)
    }

    pub fn linear(&mut self, id: &str, from: impl AsRef<str>, c_out: usize) -> String {
        self.push(id, LayerKind::Linear, &[from.as_ref()], c_out, 1, 1, 1, 1)
    }

    pub fn global_avg_pool(&mut self, id: &str, from: impl AsRef<str>) -> String {
        let c = self.producer(from.as_ref()).c_out;
        self.push(id, LayerKind::GlobalAvgPool, &[from.as_ref()], c, 1, 1, 1, 1)
    }

    pub fn activation(&mut self, id: &str, from: impl AsRef<str>) -> String {
        let p = self.producer(from.as_ref());
        let (c, h, w) = (p.c_out, p.h_out, p.w_out);
        self.push(id, LayerKind::Activation, &[from.as_ref()], c, h, w, 1, 1)
    }

    pub fn add(&mut self, id: &str, from: &[&str]) -> String {
        self.junction(id, LayerKind::ElementwiseAdd, from)
    }

    pub fn mul(&mut self, id: &str, from: &[&str]) -> String {
        self.junction(id, LayerKind::ElementwiseMul, from)
    }

    fn junction(&mut self, id: &str, kind: LayerKind, from: &[&str]) -> String {
        // Spatial dims follow the largest operand (SE gates broadcast 1x1).
        let (c, h, w) = from
            .iter()
            .map(|f| self.producer(f))
            .map(|p| (p.c_out, p.h_out, p.w_out))
            .max_by_key(|&(_, h, w)| h * w)
            .expect("junction needs operands");
        self.push(id, kind, from, c, h, w, 1, 1)
    }

    pub fn output(&mut self, from: impl AsRef<str>) -> String {
        let p = self.producer(from.as_ref());
        let (c, h, w) = (p.c_out, p.h_out, p.w_out);
        let id = self.push("output", LayerKind::Output, &[from.as_ref()], c, h, w, 1, 1);
        self.layers.last_mut().unwrap().prunable = Some(false);
        id
    }

    pub fn set_prunable(&mut self, id: &str, prunable: bool) -> &mut Self {
        if let Some(l) = self.layers.iter_mut().find(|l| l.id == id) {
            l.prunable = Some(prunable);
        }
        self
    }

    pub fn build(self) -> Result<NetworkGraph> {
        NetworkGraph::new(self.layers, self.edges, self.resolution)
    }
}
