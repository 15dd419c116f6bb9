use rand::Rng;

use super::params::ModelParams;
use super::tensor::Matrix;
use super::{ModelConfig, NetError};
use crate::textpipe::PaddedSequence;

/// Probabilities are clamped to this floor before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// One inverted-dropout mask per sample, over the dense layer's outputs.
/// Kept entries hold `1 / (1 - rate)`, dropped entries hold 0.
pub type DropoutMasks = Vec<Vec<f64>>;

pub fn sample_dropout_masks<R: Rng + ?Sized>(
    rate: f64,
    batch_len: usize,
    units: usize,
    rng: &mut R,
) -> DropoutMasks {
    let keep = 1.0 / (1.0 - rate);
    (0..batch_len)
        .map(|_| {
            (0..units)
                .map(|_| if rate > 0.0 && rng.gen::<f64>() < rate { 0.0 } else { keep })
                .collect()
        })
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Normalizes `x` over its features, then scales and shifts.
/// Returns the output, the normalized values and `1 / sqrt(var + eps)`.
pub fn layer_norm(x: &[f64], gain: &[f64], shift: &[f64], eps: f64) -> (Vec<f64>, Vec<f64>, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + eps).sqrt();
    let normed: Vec<f64> = x.iter().map(|v| (v - mean) * inv_std).collect();
    let out = normed
        .iter()
        .zip(gain.iter().zip(shift))
        .map(|(v, (g, b))| g * v + b)
        .collect();
    (out, normed, inv_std)
}

#[derive(Debug, Clone)]
pub(super) struct Step {
    pub id: usize,
    pub input: Vec<f64>,
    pub forget: Vec<f64>,
    pub cell: Vec<f64>,
    pub output: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

/// Everything the backward pass needs from one sample's forward pass.
#[derive(Debug, Clone)]
pub(super) struct Trace {
    pub steps: Vec<Step>,
    pub normed: Vec<f64>,
    pub inv_std: f64,
    pub ln_out: Vec<f64>,
    pub dense_pre: Vec<f64>,
    pub dense_out: Vec<f64>,
    pub mask: Option<Vec<f64>>,
    pub probs: Vec<f64>,
}

pub(super) fn check_batch(params: &ModelParams, batch: &[PaddedSequence]) -> Result<(), NetError> {
    let rows = params.embedding.rows();
    for (index, seq) in batch.iter().enumerate() {
        if seq.true_len == 0 {
            return Err(NetError::AllPadding { index });
        }
        if let Some(&id) = seq.ids.iter().find(|&&id| id >= rows) {
            return Err(NetError::IdOutOfRange { index, id, rows });
        }
    }
    Ok(())
}

pub(super) fn trace_sample(
    params: &ModelParams,
    seq: &PaddedSequence,
    mask: Option<&[f64]>,
    eps: f64,
) -> Trace {
    let units = params.u_input.rows();
    let mut steps: Vec<Step> = Vec::with_capacity(seq.true_len);
    let zeros = vec![0.0; units];
    for &id in seq.tokens() {
        let x = params.embedding.row(id);
        let (h_prev, c_prev) = match steps.last() {
            Some(s) => (s.h.as_slice(), s.c.as_slice()),
            None => (zeros.as_slice(), zeros.as_slice()),
        };
        let gate = |w: &Matrix, u: &Matrix, b: &Matrix| {
            let mut z = b.as_slice().to_vec();
            w.accumulate_vec_mul(x, &mut z);
            u.accumulate_vec_mul(h_prev, &mut z);
            z
        };
        let input: Vec<f64> = gate(&params.w_input, &params.u_input, &params.b_input)
            .into_iter()
            .map(sigmoid)
            .collect();
        let forget: Vec<f64> = gate(&params.w_forget, &params.u_forget, &params.b_forget)
            .into_iter()
            .map(sigmoid)
            .collect();
        let cell: Vec<f64> = gate(&params.w_cell, &params.u_cell, &params.b_cell)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let output: Vec<f64> = gate(&params.w_output, &params.u_output, &params.b_output)
            .into_iter()
            .map(sigmoid)
            .collect();
        let c: Vec<f64> = (0..units)
            .map(|k| forget[k] * c_prev[k] + input[k] * cell[k])
            .collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h = (0..units).map(|k| output[k] * tanh_c[k]).collect();
        steps.push(Step {
            id,
            input,
            forget,
            cell,
            output,
            c,
            tanh_c,
            h,
        });
    }

    // Layer norm acts on each timestep independently, so only the readout
    // step's normalized output reaches the dense head.
    let last = &steps.last().expect("non-empty sequence").h;
    let (ln_out, normed, inv_std) = layer_norm(
        last,
        params.ln_gain.as_slice(),
        params.ln_shift.as_slice(),
        eps,
    );

    let mut dense_pre = params.dense_b.as_slice().to_vec();
    params.dense_w.accumulate_vec_mul(&ln_out, &mut dense_pre);
    let mut dense_out: Vec<f64> = dense_pre.iter().map(|v| v.max(0.0)).collect();
    if let Some(mask) = mask {
        for (v, m) in dense_out.iter_mut().zip(mask) {
            *v *= m;
        }
    }

    let mut logits = params.out_b.as_slice().to_vec();
    params.out_w.accumulate_vec_mul(&dense_out, &mut logits);
    let probs = softmax(&logits);

    Trace {
        steps,
        normed,
        inv_std,
        ln_out,
        dense_pre,
        dense_out,
        mask: mask.map(<[f64]>::to_vec),
        probs,
    }
}

/// Forward pass with explicit dropout masks (`None` disables dropout).
pub fn forward_with_masks(
    params: &ModelParams,
    config: &ModelConfig,
    batch: &[PaddedSequence],
    masks: Option<&DropoutMasks>,
) -> Result<Matrix, NetError> {
    check_batch(params, batch)?;
    if let Some(m) = masks {
        if m.len() != batch.len() {
            return Err(NetError::ShapeMismatch(format!(
                "{} dropout masks for {} samples",
                m.len(),
                batch.len()
            )));
        }
    }
    let tags = params.out_b.cols();
    let mut probs = Matrix::zeros(batch.len(), tags);
    for (i, seq) in batch.iter().enumerate() {
        let mask = masks.map(|m| m[i].as_slice());
        let trace = trace_sample(params, seq, mask, config.layer_norm_epsilon);
        probs.row_mut(i).copy_from_slice(&trace.probs);
    }
    Ok(probs)
}

/// Batch of probability rows, one per sequence. Train mode samples fresh
/// dropout masks from `rng`; infer mode never touches it.
pub fn forward<R: Rng + ?Sized>(
    params: &ModelParams,
    config: &ModelConfig,
    batch: &[PaddedSequence],
    mode: Mode,
    rng: &mut R,
) -> Result<Matrix, NetError> {
    match mode {
        Mode::Infer => forward_with_masks(params, config, batch, None),
        Mode::Train => {
            let masks =
                sample_dropout_masks(config.dropout_rate, batch.len(), config.dense_units, rng);
            forward_with_masks(params, config, batch, Some(&masks))
        }
    }
}

/// Inference-mode forward pass.
pub fn predict(
    params: &ModelParams,
    config: &ModelConfig,
    batch: &[PaddedSequence],
) -> Result<Matrix, NetError> {
    forward_with_masks(params, config, batch, None)
}

/// Mean categorical cross-entropy.
pub fn cross_entropy(probs: &Matrix, labels: &[usize]) -> Result<f64, NetError> {
    if probs.rows() != labels.len() {
        return Err(NetError::ShapeMismatch(format!(
            "{} probability rows for {} labels",
            probs.rows(),
            labels.len()
        )));
    }
    if probs.rows() == 0 {
        return Err(NetError::ShapeMismatch("empty batch".into()));
    }
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        if label >= probs.cols() {
            return Err(NetError::ShapeMismatch(format!(
                "label {label} out of range for {} tags",
                probs.cols()
            )));
        }
        total -= probs.get(i, label).max(PROB_FLOOR).ln();
    }
    Ok(total / labels.len() as f64)
}
