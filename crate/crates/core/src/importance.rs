//! First-order Taylor channel importance.
//!
//! For output channel `o` with flattened weights `w` and per-sample
//! gradients `g_s`, the three criteria are
//!
//! | mode            | score                          |
//! |-----------------|--------------------------------|
//! | `signed_taylor` | `-mean_s(w · g_s)`             |
//! | `abs_taylor`    | `mean_s(|w · g_s|)`            |
//! | `abs_product`   | `mean_s(|w| · |g_s|)` (default) |
//!
//! Dot products accumulate in element order and the mean accumulates in
//! sample-index order, always in `f64`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Axis, Coupling, NetworkGraph};
use crate::tensor::TensorBlob;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMode {
    SignedTaylor,
    AbsTaylor,
    #[default]
    AbsProduct,
}

impl fmt::Display for ImportanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImportanceMode::SignedTaylor => "signed_taylor",
            ImportanceMode::AbsTaylor => "abs_taylor",
            ImportanceMode::AbsProduct => "abs_product",
        })
    }
}

impl FromStr for ImportanceMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "signed_taylor" => Ok(ImportanceMode::SignedTaylor),
            "abs_taylor" => Ok(ImportanceMode::AbsTaylor),
            "abs_product" => Ok(ImportanceMode::AbsProduct),
            other => Err(format!("unknown importance mode `{other}`")),
        }
    }
}

/// Weights of one layer and its gradients for each validation sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSample {
    pub layer_id: String,
    /// `weights[o]` is the flattened weight vector of output channel `o`.
    pub weights: Vec<Vec<f64>>,
    /// `grads[s][o]` matches `weights[o]` for sample `s`.
    pub grads: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelImportance {
    pub layer_id: String,
    pub scores: Vec<f64>,
    pub mode: ImportanceMode,
}

pub fn compute_channel_importance(sample: &ScoreSample, mode: ImportanceMode) -> Result<ChannelImportance> {
    if sample.grads.is_empty() {
        return Err(Error::NoSamples { layer: sample.layer_id.clone() });
    }
    for (s, grads) in sample.grads.iter().enumerate() {
        if grads.len() != sample.weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "layer `{}` sample {s}: {} gradient channels for {} weight channels",
                sample.layer_id,
                grads.len(),
                sample.weights.len()
            )));
        }
        for (o, (g, w)) in grads.iter().zip(&sample.weights).enumerate() {
            if g.len() != w.len() {
                return Err(Error::ShapeMismatch(format!(
                    "layer `{}` sample {s} channel {o}: gradient length {} vs weight length {}",
                    sample.layer_id,
                    g.len(),
                    w.len()
                )));
            }
        }
    }

    let n = sample.grads.len() as f64;
    let scores = sample
        .weights
        .iter()
        .enumerate()
        .map(|(o, w)| {
            let sum: f64 = sample.grads.iter().map(|grads| per_sample(w, &grads[o], mode)).sum();
            match mode {
                ImportanceMode::SignedTaylor => -(sum / n),
                _ => sum / n,
            }
        })
        .collect();
    Ok(ChannelImportance { layer_id: sample.layer_id.clone(), scores, mode })
}

fn per_sample(w: &[f64], g: &[f64], mode: ImportanceMode) -> f64 {
    match mode {
        ImportanceMode::SignedTaylor => w.iter().zip(g).map(|(a, b)| a * b).sum(),
        ImportanceMode::AbsTaylor => w.iter().zip(g).map(|(a, b)| a * b).sum::<f64>().abs(),
        ImportanceMode::AbsProduct => w.iter().zip(g).map(|(a, b)| a.abs() * b.abs()).sum(),
    }
}

/// Per-channel value of every prunable group: the sum of the scores of all
/// weighted layers whose output axis is in the group.
///
/// Members are summed in layer order, so the result does not depend on the
/// order of `importances`.
pub fn aggregate_group_importance(
    graph: &NetworkGraph,
    coupling: &Coupling,
    importances: &[ChannelImportance],
) -> Result<BTreeMap<usize, Vec<f64>>> {
    let by_layer: BTreeMap<&str, &ChannelImportance> = importances.iter().map(|i| (i.layer_id.as_str(), i)).collect();
    let mut out = BTreeMap::new();
    for group in coupling.prunable_groups() {
        let mut values = vec![0.0; group.channel_count];
        for m in group.members.iter().filter(|m| m.axis == Axis::Output) {
            if !graph.layers()[m.layer_index].kind.is_compute() {
                continue;
            }
            let imp = by_layer.get(m.layer.as_str()).ok_or_else(|| Error::MissingImportance { layer: m.layer.clone() })?;
            if imp.scores.len() != group.channel_count {
                return Err(Error::ShapeMismatch(format!(
                    "layer `{}` has {} scores but its group has {} channels",
                    m.layer,
                    imp.scores.len(),
                    group.channel_count
                )));
            }
            for (v, s) in values.iter_mut().zip(&imp.scores) {
                *v += s;
            }
        }
        out.insert(group.group_id, values);
    }
    Ok(out)
}

/// Reads a precomputed scores document `{"<layer_id>": [score, ...]}`.
/// Scores are taken as already computed under `mode`.
pub fn parse_scores(text: &str, mode: ImportanceMode) -> Result<Vec<ChannelImportance>> {
    let raw: BTreeMap<String, Vec<f64>> = serde_json::from_str(text).map_err(Error::from_json)?;
    raw.into_iter()
        .map(|(layer_id, scores)| {
            if scores.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("scores of `{layer_id}`")));
            }
            Ok(ChannelImportance { layer_id, scores, mode })
        })
        .collect()
}

/// Scores every weighted layer of `graph` that has a `weights/<id>` tensor,
/// using the gradients `grads/<id>/0`, `grads/<id>/1`, ... (indices must be
/// contiguous from zero). The leading weight dimension is the output channel.
pub fn importance_from_tensors(
    graph: &NetworkGraph,
    tensors: &BTreeMap<String, TensorBlob>,
    mode: ImportanceMode,
) -> Result<Vec<ChannelImportance>> {
    let mut out = Vec::new();
    for layer in graph.layers().iter().filter(|l| l.kind.is_compute()) {
        let Some(weights) = tensors.get(&format!("weights/{}", layer.id)) else {
            continue;
        };
        if weights.shape[0] != layer.c_out {
            return Err(Error::ShapeMismatch(format!(
                "weights/{} has leading dim {} but the layer has c_out={}",
                layer.id, weights.shape[0], layer.c_out
            )));
        }
        let prefix = format!("grads/{}/", layer.id);
        let mut indices: Vec<usize> = Vec::new();
        for key in tensors.range(prefix.clone()..).map(|(k, _)| k).take_while(|k| k.starts_with(&prefix)) {
            let idx = key[prefix.len()..]
                .parse()
                .map_err(|_| Error::Manifest(format!("gradient key `{key}` does not end in a sample index")))?;
            indices.push(idx);
        }
        indices.sort_unstable();
        if indices.iter().enumerate().any(|(i, &k)| i != k) {
            return Err(Error::Manifest(format!("gradient samples of `{}` are not numbered 0..{}", layer.id, indices.len())));
        }
        let split = |blob: &TensorBlob| -> Vec<Vec<f64>> {
            let flat = blob.to_f64();
            let per = flat.len() / blob.shape[0];
            flat.chunks(per).map(<[f64]>::to_vec).collect()
        };
        let mut grads = Vec::with_capacity(indices.len());
        for k in indices {
            let g = &tensors[&format!("{prefix}{k}")];
            if g.shape != weights.shape {
                return Err(Error::ShapeMismatch(format!("{prefix}{k} has shape {:?}, weights {:?}", g.shape, weights.shape)));
            }
            grads.push(split(g));
        }
        let sample = ScoreSample { layer_id: layer.id.clone(), weights: split(weights), grads };
        out.push(compute_channel_importance(&sample, mode)?);
    }
    Ok(out)
}
