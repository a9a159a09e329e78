use super::{LayerSpec, NetworkGraph};
use crate::error::{Error, Result};

/// Multiply-accumulate count of a compute layer:
/// `c_out * (c_in / groups) * h_out * w_out * kernel^2`.
///
/// Spatial dims are post-stride output dims, which folds the `1 / stride^2`
/// factor of the pre-stride form into `h_out * w_out`.
pub fn layer_flops(layer: &LayerSpec) -> Result<u64> {
    if !layer.kind.is_compute() {
        return Err(Error::NoFlopsModel { layer: layer.id.clone(), kind: layer.kind.to_string() });
    }
    Ok(conv_macs(layer.c_out, layer.c_in, layer.groups, layer))
}

/// Same formula with overridden channel counts.
pub(crate) fn conv_macs(c_out: usize, c_in: usize, groups: usize, layer: &LayerSpec) -> u64 {
    let per_group_in = (c_in / groups) as u64;
    c_out as u64 * per_group_in * layer.h_out as u64 * layer.w_out as u64 * (layer.kernel * layer.kernel) as u64
}

pub fn network_flops(graph: &NetworkGraph) -> Result<u64> {
    graph.layers().iter().filter(|l| l.kind.is_compute()).map(layer_flops).sum()
}
