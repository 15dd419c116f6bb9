//! From-scratch intent classifier.
//!
//! The network is `embedding -> LSTM (all timesteps) -> layer norm ->
//! dense(relu) -> dropout -> dense -> softmax`. The LSTM output at the last
//! non-padded timestep feeds the dense head, so padding never influences a
//! prediction. Everything runs in `f64` on a single thread and is
//! reproducible bit-for-bit from a seed.

mod artifact;
mod backward;
mod eval;
mod forward;
mod optim;
mod params;
mod tensor;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use artifact::{from_bytes, load_model, save_model, to_bytes, ArtifactError, ARTIFACT_FORMAT};
pub use backward::{backward, Gradients};
pub use eval::{evaluate, Classifier, EvalError, EvalReport, TagScore};
pub use forward::{
    cross_entropy, forward, forward_with_masks, layer_norm, predict, sample_dropout_masks, softmax,
    DropoutMasks, Mode, PROB_FLOOR,
};
pub use optim::{apply_update, AdamState};
pub use params::{init_model, glorot_limit, ModelParams, TENSOR_NAMES};
pub use tensor::Matrix;
pub use train::{train, EpochStats, TrainConfig, TrainOutcome, TrainedModel};

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("invalid train config: {0}")]
    InvalidTrainConfig(String),
    #[error("sequence {index} contains only padding")]
    AllPadding { index: usize },
    #[error("token id {id} in sequence {index} is outside the embedding table ({rows} rows)")]
    IdOutOfRange { index: usize, id: usize, rows: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient in {tensor}")]
    NonFiniteGradient { tensor: &'static str },
    #[error("corpus has no usable tokens")]
    EmptyCorpus,
    #[error("pattern {pattern:?} of tag {tag:?} has no tokens")]
    EmptyPattern { tag: String, pattern: String },
}

/// Layer sizes and regularization, independent of the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub embedding_dim: usize,
    pub lstm_units: usize,
    pub dense_units: usize,
    pub dropout_rate: f64,
    pub layer_norm_epsilon: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            embedding_dim: 100,
            lstm_units: 32,
            dense_units: 128,
            dropout_rate: 0.5,
            layer_norm_epsilon: 1e-5,
        }
    }
}

impl Architecture {
    pub fn config(&self, vocab_size: usize, num_tags: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            embedding_dim: self.embedding_dim,
            lstm_units: self.lstm_units,
            dense_units: self.dense_units,
            num_tags,
            dropout_rate: self.dropout_rate,
            layer_norm_epsilon: self.layer_norm_epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub lstm_units: usize,
    pub dense_units: usize,
    pub num_tags: usize,
    pub dropout_rate: f64,
    pub layer_norm_epsilon: f64,
}

impl ModelConfig {
    /// Rows in the embedding table: padding, OOV, then one per real token.
    pub fn embedding_rows(&self) -> usize {
        self.vocab_size + crate::textpipe::RESERVED
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("embedding_dim", self.embedding_dim),
            ("lstm_units", self.lstm_units),
            ("dense_units", self.dense_units),
            ("num_tags", self.num_tags),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(NetError::InvalidConfig(format!("{name} must be at least 1")));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NetError::InvalidConfig(format!(
                "dropout_rate {} not in [0, 1)",
                self.dropout_rate
            )));
        }
        if !(self.layer_norm_epsilon > 0.0 && self.layer_norm_epsilon.is_finite()) {
            return Err(NetError::InvalidConfig("layer_norm_epsilon must be positive".into()));
        }
        Ok(())
    }
}
