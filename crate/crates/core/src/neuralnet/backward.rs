use super::forward::{check_batch, cross_entropy, trace_sample, DropoutMasks, Trace, PROB_FLOOR};
use super::params::ModelParams;
use super::tensor::Matrix;
use super::{ModelConfig, NetError};
use crate::textpipe::{PaddedSequence, PAD};

/// Gradients share the parameter layout.
pub type Gradients = ModelParams;

/// Mean cross-entropy over the batch and its exact gradient with respect to
/// every parameter. `masks` fixes the dropout pattern; `None` runs without
/// dropout.
pub fn backward(
    params: &ModelParams,
    config: &ModelConfig,
    batch: &[PaddedSequence],
    labels: &[usize],
    masks: Option<&DropoutMasks>,
) -> Result<(f64, Gradients), NetError> {
    check_batch(params, batch)?;
    if labels.len() != batch.len() {
        return Err(NetError::ShapeMismatch(format!(
            "{} labels for {} samples",
            labels.len(),
            batch.len()
        )));
    }
    if let Some(m) = masks {
        if m.len() != batch.len() {
            return Err(NetError::ShapeMismatch(format!(
                "{} dropout masks for {} samples",
                m.len(),
                batch.len()
            )));
        }
    }

    let scale = 1.0 / batch.len() as f64;
    let mut grads = ModelParams::zeros(config);
    let mut probs = Matrix::zeros(batch.len(), config.num_tags);
    for (i, (seq, &label)) in batch.iter().zip(labels).enumerate() {
        let mask = masks.map(|m| m[i].as_slice());
        let trace = trace_sample(params, seq, mask, config.layer_norm_epsilon);
        probs.row_mut(i).copy_from_slice(&trace.probs);
        if label >= config.num_tags {
            return Err(NetError::ShapeMismatch(format!(
                "label {label} out of range for {} tags",
                config.num_tags
            )));
        }
        backprop_sample(params, &trace, label, scale, &mut grads);
    }
    grads.embedding.row_mut(PAD).fill(0.0);
    let loss = cross_entropy(&probs, labels)?;
    Ok((loss, grads))
}

fn backprop_sample(params: &ModelParams, trace: &Trace, label: usize, scale: f64, g: &mut Gradients) {
    // d loss / d logits. Past the clamp the loss is flat in p, so no signal.
    if trace.probs[label] < PROB_FLOOR {
        return;
    }
    let mut d_logits: Vec<f64> = trace.probs.iter().map(|p| p * scale).collect();
    d_logits[label] -= scale;

    g.out_w.accumulate_outer(&trace.dense_out, &d_logits);
    add(g.out_b.as_mut_slice(), &d_logits);
    let mut d_dense = vec![0.0; trace.dense_out.len()];
    params.out_w.accumulate_mul_vec(&d_logits, &mut d_dense);

    if let Some(mask) = &trace.mask {
        for (d, m) in d_dense.iter_mut().zip(mask) {
            *d *= m;
        }
    }
    for (d, pre) in d_dense.iter_mut().zip(&trace.dense_pre) {
        if *pre <= 0.0 {
            *d = 0.0;
        }
    }
    g.dense_w.accumulate_outer(&trace.ln_out, &d_dense);
    add(g.dense_b.as_mut_slice(), &d_dense);
    let mut d_ln = vec![0.0; trace.ln_out.len()];
    params.dense_w.accumulate_mul_vec(&d_dense, &mut d_ln);

    // layer norm
    let units = d_ln.len();
    let n = units as f64;
    let gain = params.ln_gain.as_slice();
    let mut d_normed = vec![0.0; units];
    for k in 0..units {
        g.ln_gain.as_mut_slice()[k] += d_ln[k] * trace.normed[k];
        g.ln_shift.as_mut_slice()[k] += d_ln[k];
        d_normed[k] = d_ln[k] * gain[k];
    }
    let mean_d = d_normed.iter().sum::<f64>() / n;
    let mean_dn = d_normed.iter().zip(&trace.normed).map(|(d, x)| d * x).sum::<f64>() / n;
    let mut d_h: Vec<f64> = (0..units)
        .map(|k| trace.inv_std * (d_normed[k] - mean_d - trace.normed[k] * mean_dn))
        .collect();

    // backpropagation through time over the unpadded steps
    let zeros = vec![0.0; units];
    let mut d_c_next = vec![0.0; units];
    let mut d_z = [vec![0.0; units], vec![0.0; units], vec![0.0; units], vec![0.0; units]];
    for t in (0..trace.steps.len()).rev() {
        let s = &trace.steps[t];
        let (h_prev, c_prev) = if t == 0 {
            (&zeros, &zeros)
        } else {
            (&trace.steps[t - 1].h, &trace.steps[t - 1].c)
        };
        for k in 0..units {
            let d_o = d_h[k] * s.tanh_c[k];
            let d_c = d_c_next[k] + d_h[k] * s.output[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
            let d_i = d_c * s.cell[k];
            let d_g = d_c * s.input[k];
            let d_f = d_c * c_prev[k];
            d_c_next[k] = d_c * s.forget[k];
            d_z[0][k] = d_i * s.input[k] * (1.0 - s.input[k]);
            d_z[1][k] = d_f * s.forget[k] * (1.0 - s.forget[k]);
            d_z[2][k] = d_g * (1.0 - s.cell[k] * s.cell[k]);
            d_z[3][k] = d_o * s.output[k] * (1.0 - s.output[k]);
        }

        let x = params.embedding.row(s.id);
        let mut d_x = vec![0.0; x.len()];
        let mut d_h_prev = vec![0.0; units];
        let gates = [
            (&params.w_input, &params.u_input, &mut g.w_input, &mut g.u_input, &mut g.b_input),
            (&params.w_forget, &params.u_forget, &mut g.w_forget, &mut g.u_forget, &mut g.b_forget),
            (&params.w_cell, &params.u_cell, &mut g.w_cell, &mut g.u_cell, &mut g.b_cell),
            (&params.w_output, &params.u_output, &mut g.w_output, &mut g.u_output, &mut g.b_output),
        ];
        for ((w, u, gw, gu, gb), dz) in gates.into_iter().zip(&d_z) {
            gw.accumulate_outer(x, dz);
            gu.accumulate_outer(h_prev, dz);
            add(gb.as_mut_slice(), dz);
            w.accumulate_mul_vec(dz, &mut d_x);
            u.accumulate_mul_vec(dz, &mut d_h_prev);
        }
        g.embedding.add_to_row(s.id, &d_x);
        d_h = d_h_prev;
    }
}

fn add(target: &mut [f64], values: &[f64]) {
    for (t, v) in target.iter_mut().zip(values) {
        *t += v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::{init_model, Architecture};
    use crate::textpipe::pad;

    fn tiny() -> (ModelParams, ModelConfig) {
        let arch = Architecture {
            embedding_dim: 3,
            lstm_units: 2,
            dense_units: 4,
            dropout_rate: 0.5,
            layer_norm_epsilon: 1e-5,
        };
        let cfg = arch.config(5, 3);
        (init_model(&cfg, 11), cfg)
    }

    #[test]
    fn unused_rows_and_padding_get_no_gradient() {
        let (p, cfg) = tiny();
        let batch = vec![pad(&[2, 3], 5), pad(&[4], 5)];
        let (_, g) = backward(&p, &cfg, &batch, &[0, 2], None).unwrap();
        for row in [0, 1, 5, 6] {
            assert!(g.embedding.row(row).iter().all(|&v| v == 0.0), "row {row}");
        }
        assert!(g.embedding.row(2).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn saturated_prediction_has_no_gradient() {
        let (mut p, cfg) = tiny();
        // force every sample onto tag 1 with overwhelming confidence
        p.out_w.fill(0.0);
        p.out_b.as_mut_slice().copy_from_slice(&[-60.0, 60.0, -60.0]);
        let batch = vec![pad(&[2, 3], 4), pad(&[5, 6, 1], 4)];
        let (loss, g) = backward(&p, &cfg, &batch, &[1, 1], None).unwrap();
        assert!(loss < 1e-12);
        assert!(g.norm() <= 1e-8, "norm {}", g.norm());
    }

    #[test]
    fn label_count_checked() {
        let (p, cfg) = tiny();
        let batch = vec![pad(&[2], 2)];
        assert!(matches!(
            backward(&p, &cfg, &batch, &[0, 1], None),
            Err(NetError::ShapeMismatch(_))
        ));
    }
}
