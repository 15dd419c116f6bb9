//! Test-only oracles that do not share code with the implementation.

#![allow(dead_code)]

use amity_core::neuralnet::{Architecture, Matrix, ModelConfig, ModelParams};

/// Tiny architecture used by the gradient check.
pub fn tiny_config(vocab_size: usize, emb: usize, lstm: usize, dense: usize, tags: usize) -> ModelConfig {
    Architecture {
        embedding_dim: emb,
        lstm_units: lstm,
        dense_units: dense,
        dropout_rate: 0.5,
        layer_norm_epsilon: 1e-5,
    }
    .config(vocab_size, tags)
}

/// Deterministic, non-random weights: entry `k` of tensor `t` is
/// `0.6 * sin(1.3 * k + 0.7 * t + 0.1)`.
pub fn hand_set_params(config: &ModelConfig) -> ModelParams {
    let mut p = ModelParams::zeros(config);
    for (t, (name, m)) in p.tensors_mut().into_iter().enumerate() {
        for (k, v) in m.as_mut_slice().iter_mut().enumerate() {
            *v = 0.6 * (1.3 * k as f64 + 0.7 * t as f64 + 0.1).sin();
        }
        if name == "ln_gain" {
            for v in m.as_mut_slice() {
                *v += 1.0;
            }
        }
    }
    p.embedding.row_mut(0).fill(0.0);
    p
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Step-by-step scalar evaluation of the network for one sequence of token
/// ids (padding excluded), written directly from the gate equations.
pub fn scalar_forward(p: &ModelParams, ids: &[usize], mask: Option<&[f64]>, eps: f64) -> Vec<f64> {
    let d = p.w_input.rows();
    let u = p.w_input.cols();
    let mut h = vec![0.0; u];
    let mut c = vec![0.0; u];
    for &id in ids {
        let mut h_new = vec![0.0; u];
        let mut c_new = vec![0.0; u];
        for j in 0..u {
            let mut zi = p.b_input.get(0, j);
            let mut zf = p.b_forget.get(0, j);
            let mut zc = p.b_cell.get(0, j);
            let mut zo = p.b_output.get(0, j);
            for k in 0..d {
                let x = p.embedding.get(id, k);
                zi += x * p.w_input.get(k, j);
                zf += x * p.w_forget.get(k, j);
                zc += x * p.w_cell.get(k, j);
                zo += x * p.w_output.get(k, j);
            }
            for k in 0..u {
                zi += h[k] * p.u_input.get(k, j);
                zf += h[k] * p.u_forget.get(k, j);
                zc += h[k] * p.u_cell.get(k, j);
                zo += h[k] * p.u_output.get(k, j);
            }
            let i = sig(zi);
            let f = sig(zf);
            let g = zc.tanh();
            let o = sig(zo);
            c_new[j] = f * c[j] + i * g;
            h_new[j] = o * c_new[j].tanh();
        }
        h = h_new;
        c = c_new;
    }

    let mean = h.iter().sum::<f64>() / u as f64;
    let var = h.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / u as f64;
    let normed: Vec<f64> = (0..u)
        .map(|j| p.ln_gain.get(0, j) * (h[j] - mean) / (var + eps).sqrt() + p.ln_shift.get(0, j))
        .collect();

    let hidden = p.dense_w.cols();
    let mut a = vec![0.0; hidden];
    for m in 0..hidden {
        let mut z = p.dense_b.get(0, m);
        for j in 0..u {
            z += normed[j] * p.dense_w.get(j, m);
        }
        a[m] = if z > 0.0 { z } else { 0.0 };
        if let Some(mask) = mask {
            a[m] *= mask[m];
        }
    }

    let tags = p.out_w.cols();
    let mut logits = vec![0.0; tags];
    for t in 0..tags {
        logits[t] = p.out_b.get(0, t);
        for m in 0..hidden {
            logits[t] += a[m] * p.out_w.get(m, t);
        }
    }
    let top = logits.iter().cloned().fold(f64::MIN, f64::max);
    let z: f64 = logits.iter().map(|l| (l - top).exp()).sum();
    logits.iter().map(|l| (l - top).exp() / z).collect()
}

/// Mean cross-entropy computed from the scalar oracle.
pub fn scalar_loss(p: &ModelParams, batch: &[Vec<usize>], labels: &[usize], masks: Option<&[Vec<f64>]>, eps: f64) -> f64 {
    let mut total = 0.0;
    for (i, ids) in batch.iter().enumerate() {
        let probs = scalar_forward(p, ids, masks.map(|m| m[i].as_slice()), eps);
        total -= probs[labels[i]].max(1e-12).ln();
    }
    total / batch.len() as f64
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
