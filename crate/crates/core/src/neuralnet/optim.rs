use super::backward::Gradients;
use super::params::ModelParams;
use super::train::TrainConfig;
use super::NetError;
use super::ModelConfig;

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: ModelParams,
    pub v: ModelParams,
}

impl AdamState {
    pub fn new(config: &ModelConfig) -> Self {
        AdamState {
            step: 0,
            m: ModelParams::zeros(config),
            v: ModelParams::zeros(config),
        }
    }
}

/// One bias-corrected Adam step. The padding row of the embedding is never
/// touched. Fails before modifying anything if a gradient is not finite.
pub fn apply_update(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<(), NetError> {
    for (name, g) in grads.tensors() {
        if g.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFiniteGradient { tensor: name });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let correction1 = 1.0 - b1.powi(t);
    let correction2 = 1.0 - b2.powi(t);
    let lr = config.learning_rate;
    let eps = config.epsilon;

    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut());
    for ((((name, p), (_, g)), (_, m)), (_, v)) in tensors {
        // skip the padding row
        let start = if name == "embedding" { p.cols() } else { 0 };
        let p = &mut p.as_mut_slice()[start..];
        let g = &g.as_slice()[start..];
        let m = &mut m.as_mut_slice()[start..];
        let v = &mut v.as_mut_slice()[start..];
        for k in 0..p.len() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let m_hat = m[k] / correction1;
            let v_hat = v[k] / correction2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
