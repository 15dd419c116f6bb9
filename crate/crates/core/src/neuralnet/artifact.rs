//! Model artifact: one line of JSON header, the tensors as little-endian
//! `f64` in [`TENSOR_NAMES`] order, then a CRC-32 (little-endian) over every
//! preceding byte.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::params::{ModelParams, TENSOR_NAMES};
use super::train::TrainedModel;
use super::ModelConfig;
use crate::textpipe::Vocabulary;

pub const ARTIFACT_FORMAT: &str = "amity-model";
const ARTIFACT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("artifact version mismatch: {0}")]
    VersionMismatch(String),
    #[error("artifact checksum mismatch (truncated or corrupted file)")]
    ChecksumMismatch,
    #[error("malformed artifact: {0}")]
    Malformed(String),
}

#[derive(Serialize, Deserialize)]
struct TensorSpec {
    name: String,
    shape: [usize; 2],
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u64,
    config: ModelConfig,
    tags: Vec<String>,
    vocab: Vocabulary,
    tensors: Vec<TensorSpec>,
}

pub fn to_bytes(model: &TrainedModel) -> Vec<u8> {
    let header = Header {
        format: ARTIFACT_FORMAT.to_string(),
        version: ARTIFACT_VERSION,
        config: model.config.clone(),
        tags: model.tags.clone(),
        vocab: model.vocab.clone(),
        tensors: model
            .params
            .tensors()
            .iter()
            .map(|(name, m)| TensorSpec {
                name: name.to_string(),
                shape: [m.rows(), m.cols()],
            })
            .collect(),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    for (_, m) in model.params.tensors() {
        for v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<TrainedModel, ArtifactError> {
    if bytes.len() < 4 {
        return Err(ArtifactError::ChecksumMismatch);
    }
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().expect("4 bytes")) {
        return Err(ArtifactError::ChecksumMismatch);
    }
    let newline = body
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| ArtifactError::Malformed("missing header terminator".into()))?;
    let (header_bytes, weights) = (&body[..newline], &body[newline + 1..]);

    let raw: Value = serde_json::from_slice(header_bytes)
        .map_err(|e| ArtifactError::Malformed(format!("header: {e}")))?;
    let format = raw.get("format").and_then(Value::as_str);
    let version = raw.get("version").and_then(Value::as_u64);
    if format != Some(ARTIFACT_FORMAT) || version != Some(ARTIFACT_VERSION) {
        return Err(ArtifactError::VersionMismatch(format!(
            "expected {ARTIFACT_FORMAT} v{ARTIFACT_VERSION}, found {} v{}",
            format.unwrap_or("?"),
            version.map(|v| v.to_string()).unwrap_or_else(|| "?".into())
        )));
    }
    let header: Header = serde_json::from_value(raw)
        .map_err(|e| ArtifactError::Malformed(format!("header: {e}")))?;
    header
        .config
        .validate()
        .map_err(|e| ArtifactError::Malformed(e.to_string()))?;
    if header.tags.len() != header.config.num_tags {
        return Err(ArtifactError::Malformed(format!(
            "{} tags for num_tags {}",
            header.tags.len(),
            header.config.num_tags
        )));
    }
    if header.vocab.vocab_size() != header.config.vocab_size {
        return Err(ArtifactError::Malformed("vocabulary size does not match config".into()));
    }

    let mut params = ModelParams::zeros(&header.config);
    let declared: Vec<(&str, [usize; 2])> = header
        .tensors
        .iter()
        .map(|t| (t.name.as_str(), t.shape))
        .collect();
    let expected: Vec<(&str, [usize; 2])> = params
        .tensors()
        .iter()
        .map(|(n, m)| (*n, [m.rows(), m.cols()]))
        .collect();
    if declared != expected {
        return Err(ArtifactError::Malformed(format!(
            "tensor layout does not match config (expected order {TENSOR_NAMES:?})"
        )));
    }
    if weights.len() != params.parameter_count() * 8 {
        return Err(ArtifactError::Malformed(format!(
            "expected {} weight bytes, found {}",
            params.parameter_count() * 8,
            weights.len()
        )));
    }
    let mut chunks = weights.chunks_exact(8);
    for (_, m) in params.tensors_mut() {
        for v in m.as_mut_slice() {
            let chunk = chunks.next().expect("length checked");
            *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
    }
    if !params.is_finite() {
        return Err(ArtifactError::Malformed("non-finite weight".into()));
    }
    Ok(TrainedModel {
        config: header.config,
        params,
        vocab: header.vocab,
        tags: header.tags,
    })
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<(), ArtifactError> {
    fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel, ArtifactError> {
    from_bytes(&fs::read(path)?)
}
