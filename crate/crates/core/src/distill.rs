//! Loss kernels for fine-tuning a pruned (student) network against the
//! original (teacher):
//!
//! * `kd_loss`: cross-entropy of student softmax against teacher softmax,
//!   summed over the batch;
//! * `ikd_loss`: squared reconstruction error of teacher feature maps from
//!   student feature maps through a `C_t x C_s` matrix per layer, summed
//!   over batch, layers and positions;
//! * `combined_loss`: `ce + lambda_ikd * ikd + lambda_kd * kd`.
//!
//! All reductions are sums; rescale through [`LossWeights`].

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::TensorBlob;

/// Feature maps of one layer, `[batch, channels, positions]` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMapBatch {
    pub layer_id: String,
    batch: usize,
    channels: usize,
    positions: usize,
    data: Vec<f64>,
}

impl FeatureMapBatch {
    pub fn new(layer_id: impl Into<String>, batch: usize, channels: usize, positions: usize, data: Vec<f64>) -> Result<Self> {
        let layer_id = layer_id.into();
        if batch == 0 || channels == 0 || positions == 0 {
            return Err(Error::ShapeMismatch(format!("feature maps of `{layer_id}` need positive dims")));
        }
        if data.len() != batch * channels * positions {
            return Err(Error::ShapeMismatch(format!(
                "feature maps of `{layer_id}`: {} values for shape [{batch}, {channels}, {positions}]",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature maps of `{layer_id}`")));
        }
        Ok(FeatureMapBatch { layer_id, batch, channels, positions, data })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn positions(&self) -> usize {
        self.positions
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `channels x (batch * positions)`, batch-major columns.
    pub fn stacked(&self) -> DMatrix<f64> {
        let n = self.batch * self.positions;
        DMatrix::from_fn(self.channels, n, |c, col| {
            let (b, p) = (col / self.positions, col % self.positions);
            self.data[(b * self.channels + c) * self.positions + p]
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionMatrix {
    pub layer_id: String,
    /// `teacher_channels x student_channels`.
    pub m: DMatrix<f64>,
    pub ridge_lambda: f64,
}

impl ReconstructionMatrix {
    pub fn identity(layer_id: impl Into<String>, channels: usize) -> Self {
        ReconstructionMatrix { layer_id: layer_id.into(), m: DMatrix::identity(channels, channels), ridge_lambda: 0.0 }
    }

    pub fn zeros(layer_id: impl Into<String>, teacher_channels: usize, student_channels: usize) -> Self {
        ReconstructionMatrix { layer_id: layer_id.into(), m: DMatrix::zeros(teacher_channels, student_channels), ridge_lambda: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_ikd: f64,
    pub lambda_kd: f64,
}

impl Default for LossWeights {
    /// Both weights 1; no tuned values are implied.
    fn default() -> Self {
        LossWeights { lambda_ikd: 1.0, lambda_kd: 1.0 }
    }
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let argmax = (0..row.len()).fold(0, |best, i| if row[i] > row[best] { i } else { best });
    let max = row[argmax];
    // ln_1p keeps precision when one logit dominates
    let rest: f64 = row.iter().enumerate().filter(|&(i, _)| i != argmax).map(|(_, v)| (v - max).exp()).sum();
    let log_norm = rest.ln_1p();
    row.iter().map(|v| (v - max) - log_norm).collect()
}

/// `sum_{x,i} -log(softmax(student_x)_i) * softmax(teacher_x)_i`.
/// Logits are `[batch x classes]`.
pub fn kd_loss(teacher_logits: &DMatrix<f64>, student_logits: &DMatrix<f64>) -> Result<f64> {
    if teacher_logits.shape() != student_logits.shape() {
        return Err(Error::ShapeMismatch(format!(
            "teacher logits {:?} vs student logits {:?}",
            teacher_logits.shape(),
            student_logits.shape()
        )));
    }
    if teacher_logits.iter().chain(student_logits.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let mut total = 0.0;
    for x in 0..teacher_logits.nrows() {
        let t = log_softmax(&teacher_logits.row(x).iter().copied().collect::<Vec<_>>());
        let s = log_softmax(&student_logits.row(x).iter().copied().collect::<Vec<_>>());
        total += t.iter().zip(&s).map(|(lt, ls)| -ls * lt.exp()).sum::<f64>();
    }
    Ok(total)
}

/// One IKD term: teacher maps, student maps and the reconstruction matrix.
#[derive(Clone, Copy, Debug)]
pub struct IkdPair<'a> {
    pub teacher: &'a FeatureMapBatch,
    pub student: &'a FeatureMapBatch,
    pub reconstruction: &'a ReconstructionMatrix,
}

fn check_pair(teacher: &FeatureMapBatch, student: &FeatureMapBatch) -> Result<()> {
    if teacher.batch != student.batch || teacher.positions != student.positions {
        return Err(Error::ShapeMismatch(format!(
            "layer `{}`: teacher [{}, _, {}] vs student [{}, _, {}]",
            teacher.layer_id, teacher.batch, teacher.positions, student.batch, student.positions
        )));
    }
    Ok(())
}

/// `sum_x sum_l || F_t - M F_s ||^2` over every position.
pub fn ikd_loss(pairs: &[IkdPair<'_>]) -> Result<f64> {
    let mut total = 0.0;
    for pair in pairs {
        check_pair(pair.teacher, pair.student)?;
        let m = &pair.reconstruction.m;
        if m.shape() != (pair.teacher.channels, pair.student.channels) {
            return Err(Error::ShapeMismatch(format!(
                "layer `{}`: reconstruction matrix {:?}, expected ({}, {})",
                pair.teacher.layer_id,
                m.shape(),
                pair.teacher.channels,
                pair.student.channels
            )));
        }
        let residual = pair.teacher.stacked() - m * pair.student.stacked();
        total += residual.norm_squared();
    }
    Ok(total)
}

/// Ridge-regularized least-squares reconstruction matrix
/// `M = T S^T (S S^T + lambda I)^-1` over all batch positions. This is
/// the minimizer of the IKD term plus `lambda ||M||_F^2` for fixed features.
pub fn fit_reconstruction(teacher: &FeatureMapBatch, student: &FeatureMapBatch, ridge_lambda: f64) -> Result<ReconstructionMatrix> {
    check_pair(teacher, student)?;
    if !(ridge_lambda.is_finite() && ridge_lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("ridge lambda must be finite and nonnegative, got {ridge_lambda}")));
    }
    let s = student.stacked();
    let t = teacher.stacked();
    let mut gram = &s * s.transpose();
    for i in 0..gram.nrows() {
        gram[(i, i)] += ridge_lambda;
    }
    let rhs = &s * t.transpose();
    let chol = gram.cholesky().ok_or(Error::SingularSystem)?;
    let m_t = chol.solve(&rhs);
    if m_t.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(ReconstructionMatrix { layer_id: teacher.layer_id.clone(), m: m_t.transpose(), ridge_lambda })
}

pub fn combined_loss(ce: f64, ikd: f64, kd: f64, weights: &LossWeights) -> Result<f64> {
    for (name, v) in [("ce", ce), ("ikd", ikd), ("kd", kd), ("lambda_ikd", weights.lambda_ikd), ("lambda_kd", weights.lambda_kd)] {
        if !v.is_finite() {
            return Err(Error::NonFinite(name.into()));
        }
    }
    if weights.lambda_ikd < 0.0 || weights.lambda_kd < 0.0 {
        return Err(Error::InvalidArgument("loss weights must be nonnegative".into()));
    }
    Ok(ce + weights.lambda_ikd * ikd + weights.lambda_kd * kd)
}

/// Logits and paired feature maps read from a tensor dump.
///
/// Keys: `teacher/logits` and `student/logits` (`[batch, classes]`),
/// `teacher/features/<id>` and `student/features/<id>` (`[batch, channels,
/// positions...]`, trailing dims flattened), and optionally
/// `reconstruction/<id>` (`[teacher_channels, student_channels]`).
#[derive(Clone, Debug)]
pub struct DistillInputs {
    pub teacher_logits: Option<DMatrix<f64>>,
    pub student_logits: Option<DMatrix<f64>>,
    pub layers: Vec<(FeatureMapBatch, FeatureMapBatch, Option<ReconstructionMatrix>)>,
}

fn logits(blob: &TensorBlob) -> Result<DMatrix<f64>> {
    if blob.shape.len() != 2 {
        return Err(Error::ShapeMismatch(format!("`{}` must be [batch, classes], got {:?}", blob.key, blob.shape)));
    }
    Ok(DMatrix::from_row_slice(blob.shape[0], blob.shape[1], &blob.to_f64()))
}

fn feature_maps(layer_id: &str, blob: &TensorBlob) -> Result<FeatureMapBatch> {
    if blob.shape.len() < 2 {
        return Err(Error::ShapeMismatch(format!("`{}` must be [batch, channels, ...], got {:?}", blob.key, blob.shape)));
    }
    let positions = blob.shape[2..].iter().product();
    FeatureMapBatch::new(layer_id, blob.shape[0], blob.shape[1], positions, blob.to_f64())
}

impl DistillInputs {
    pub fn from_tensors(tensors: &BTreeMap<String, TensorBlob>) -> Result<Self> {
        let teacher_logits = tensors.get("teacher/logits").map(logits).transpose()?;
        let student_logits = tensors.get("student/logits").map(logits).transpose()?;
        if teacher_logits.is_some() != student_logits.is_some() {
            return Err(Error::MissingTensor("teacher/logits and student/logits come in pairs".into()));
        }
        let mut layers = Vec::new();
        for (key, teacher) in tensors.range("teacher/features/".to_string()..).take_while(|(k, _)| k.starts_with("teacher/features/")) {
            let id = &key["teacher/features/".len()..];
            let student = tensors
                .get(&format!("student/features/{id}"))
                .ok_or_else(|| Error::MissingTensor(format!("student/features/{id}")))?;
            let reconstruction = match tensors.get(&format!("reconstruction/{id}")) {
                Some(blob) => Some(ReconstructionMatrix { layer_id: id.to_string(), m: logits(blob)?, ridge_lambda: 0.0 }),
                None => None,
            };
            layers.push((feature_maps(id, teacher)?, feature_maps(id, student)?, reconstruction));
        }
        for key in tensors.keys().filter(|k| k.starts_with("student/features/")) {
            if !tensors.contains_key(&key.replacen("student/", "teacher/", 1)) {
                return Err(Error::MissingTensor(key.replacen("student/", "teacher/", 1)));
            }
        }
        Ok(DistillInputs { teacher_logits, student_logits, layers })
    }
}
