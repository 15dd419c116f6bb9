use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::Matrix;
use super::ModelConfig;

/// Tensor names in the order used for iteration and serialization.
pub const TENSOR_NAMES: [&str; 19] = [
    "embedding",
    "w_input",
    "w_forget",
    "w_cell",
    "w_output",
    "u_input",
    "u_forget",
    "u_cell",
    "u_output",
    "b_input",
    "b_forget",
    "b_cell",
    "b_output",
    "ln_gain",
    "ln_shift",
    "dense_w",
    "dense_b",
    "out_w",
    "out_b",
];

/// Every trainable weight. Input-to-gate matrices are `embedding_dim x
/// lstm_units`, recurrent ones `lstm_units x lstm_units`, and vectors are
/// stored as single-row matrices. Row 0 of the embedding is the padding row
/// and stays zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embedding: Matrix,
    pub w_input: Matrix,
    pub w_forget: Matrix,
    pub w_cell: Matrix,
    pub w_output: Matrix,
    pub u_input: Matrix,
    pub u_forget: Matrix,
    pub u_cell: Matrix,
    pub u_output: Matrix,
    pub b_input: Matrix,
    pub b_forget: Matrix,
    pub b_cell: Matrix,
    pub b_output: Matrix,
    pub ln_gain: Matrix,
    pub ln_shift: Matrix,
    pub dense_w: Matrix,
    pub dense_b: Matrix,
    pub out_w: Matrix,
    pub out_b: Matrix,
}

impl ModelParams {
    /// All-zero parameters with the shapes implied by `config`.
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.embedding_dim;
        let u = config.lstm_units;
        let h = config.dense_units;
        let t = config.num_tags;
        ModelParams {
            embedding: Matrix::zeros(config.embedding_rows(), d),
            w_input: Matrix::zeros(d, u),
            w_forget: Matrix::zeros(d, u),
            w_cell: Matrix::zeros(d, u),
            w_output: Matrix::zeros(d, u),
            u_input: Matrix::zeros(u, u),
            u_forget: Matrix::zeros(u, u),
            u_cell: Matrix::zeros(u, u),
            u_output: Matrix::zeros(u, u),
            b_input: Matrix::zeros(1, u),
            b_forget: Matrix::zeros(1, u),
            b_cell: Matrix::zeros(1, u),
            b_output: Matrix::zeros(1, u),
            ln_gain: Matrix::zeros(1, u),
            ln_shift: Matrix::zeros(1, u),
            dense_w: Matrix::zeros(u, h),
            dense_b: Matrix::zeros(1, h),
            out_w: Matrix::zeros(h, t),
            out_b: Matrix::zeros(1, t),
        }
    }

    pub fn tensors(&self) -> [(&'static str, &Matrix); 19] {
        let names = TENSOR_NAMES;
        [
            (names[0], &self.embedding),
            (names[1], &self.w_input),
            (names[2], &self.w_forget),
            (names[3], &self.w_cell),
            (names[4], &self.w_output),
            (names[5], &self.u_input),
            (names[6], &self.u_forget),
            (names[7], &self.u_cell),
            (names[8], &self.u_output),
            (names[9], &self.b_input),
            (names[10], &self.b_forget),
            (names[11], &self.b_cell),
            (names[12], &self.b_output),
            (names[13], &self.ln_gain),
            (names[14], &self.ln_shift),
            (names[15], &self.dense_w),
            (names[16], &self.dense_b),
            (names[17], &self.out_w),
            (names[18], &self.out_b),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Matrix); 19] {
        let names = TENSOR_NAMES;
        [
            (names[0], &mut self.embedding),
            (names[1], &mut self.w_input),
            (names[2], &mut self.w_forget),
            (names[3], &mut self.w_cell),
            (names[4], &mut self.w_output),
            (names[5], &mut self.u_input),
            (names[6], &mut self.u_forget),
            (names[7], &mut self.u_cell),
            (names[8], &mut self.u_output),
            (names[9], &mut self.b_input),
            (names[10], &mut self.b_forget),
            (names[11], &mut self.b_cell),
            (names[12], &mut self.b_output),
            (names[13], &mut self.ln_gain),
            (names[14], &mut self.ln_shift),
            (names[15], &mut self.dense_w),
            (names[16], &mut self.dense_b),
            (names[17], &mut self.out_w),
            (names[18], &mut self.out_b),
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.as_slice().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, m)| m.as_slice().iter().all(|v| v.is_finite()))
    }

    /// Checks every tensor against the shapes implied by `config`.
    pub fn matches(&self, config: &ModelConfig) -> bool {
        let expected = ModelParams::zeros(config);
        self.tensors()
            .iter()
            .zip(expected.tensors().iter())
            .all(|((_, a), (_, b))| a.shape() == b.shape())
    }

    /// Euclidean norm over all entries.
    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, m)| m.as_slice().iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Glorot/Xavier uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn glorot_fill(m: &mut Matrix, rng: &mut impl Rng) {
    let limit = glorot_limit(m.rows(), m.cols());
    for v in m.as_mut_slice() {
        *v = rng.gen_range(-limit..limit);
    }
}

/// Seeded Glorot-uniform initialization. Biases start at zero except the
/// forget gate (1.0); layer norm starts as the identity (gain 1, shift 0).
pub fn init_model(config: &ModelConfig, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::zeros(config);
    for (name, m) in params.tensors_mut() {
        match name {
            "b_input" | "b_cell" | "b_output" | "ln_shift" | "dense_b" | "out_b" => {}
            "b_forget" | "ln_gain" => m.fill(1.0),
            _ => glorot_fill(m, &mut rng),
        }
    }
    params.embedding.row_mut(crate::textpipe::PAD).fill(0.0);
    params
}
