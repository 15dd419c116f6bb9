//! Deterministic text preprocessing: tokenization, vocabulary fitting,
//! integer encoding and post-padding.
//!
//! Index 0 is reserved for padding and index 1 for out-of-vocabulary
//! tokens; real tokens start at 2.

use std::collections::HashMap;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::corpus::LabeledSample;

pub const PAD: usize = 0;
pub const OOV: usize = 1;
/// Number of reserved indices ahead of the first real token.
pub const RESERVED: usize = 2;

const EDGE_PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':', '\'', '"', '(', ')', '[', ']'];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TextError {
    #[error("no tokens found in the fit corpus")]
    EmptyCorpus,
}

/// Lowercases, splits on whitespace and strips punctuation from token edges.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(EDGE_PUNCTUATION).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Token to index map fitted on a corpus, plus the longest sequence seen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    max_len: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    max_len: usize,
    tokens: Vec<String>,
}

impl Serialize for Vocabulary {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        VocabularyRepr {
            max_len: self.max_len,
            tokens: self.tokens.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = VocabularyRepr::deserialize(deserializer)?;
        Vocabulary::from_tokens(repr.tokens, repr.max_len).map_err(serde::de::Error::custom)
    }
}

impl Vocabulary {
    /// Rebuilds a vocabulary from tokens listed in index order.
    pub fn from_tokens(tokens: Vec<String>, max_len: usize) -> Result<Self, String> {
        if max_len == 0 {
            return Err("max_len must be at least 1".into());
        }
        if tokens.is_empty() {
            return Err("vocabulary has no tokens".into());
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i + RESERVED).is_some() {
                return Err(format!("duplicate token {t:?}"));
            }
        }
        Ok(Vocabulary {
            tokens,
            index,
            max_len,
        })
    }

    /// Fits over raw texts. Indices follow descending frequency, ties broken
    /// by first appearance.
    pub fn fit<'a, I>(texts: I) -> Result<Self, TextError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        // token -> (count, first position)
        let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
        let mut position = 0;
        let mut max_len = 0;
        for text in texts {
            let tokens = tokenize(text);
            max_len = max_len.max(tokens.len());
            for token in tokens {
                counts
                    .entry(token)
                    .and_modify(|(c, _)| *c += 1)
                    .or_insert((1, position));
                position += 1;
            }
        }
        if counts.is_empty() {
            return Err(TextError::EmptyCorpus);
        }
        let mut ranked: Vec<(String, usize, usize)> =
            counts.into_iter().map(|(t, (c, first))| (t, c, first)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        let tokens = ranked.into_iter().map(|(t, _, _)| t).collect();
        Ok(Vocabulary::from_tokens(tokens, max_len).expect("fitted vocabulary is well formed"))
    }

    /// Number of distinct real tokens.
    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Tokens in index order; `tokens()[i]` has index `i + 2`.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

pub fn fit_vocabulary(samples: &[LabeledSample]) -> Result<Vocabulary, TextError> {
    Vocabulary::fit(samples.iter().map(|s| s.text.as_str()))
}

/// Maps each token to its index, unseen tokens to [`OOV`].
pub fn encode(vocab: &Vocabulary, text: &str) -> Vec<usize> {
    tokenize(text)
        .iter()
        .map(|t| vocab.index_of(t).unwrap_or(OOV))
        .collect()
}

/// Fixed-length id sequence with zeros after the first `true_len` positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaddedSequence {
    pub ids: Vec<usize>,
    pub true_len: usize,
}

impl PaddedSequence {
    pub fn max_len(&self) -> usize {
        self.ids.len()
    }

    /// The non-padding prefix.
    pub fn tokens(&self) -> &[usize] {
        &self.ids[..self.true_len]
    }

    /// Same content padded out to a longer length.
    pub fn repadded(&self, max_len: usize) -> PaddedSequence {
        pad(self.tokens(), max_len)
    }
}

/// Post-pads with zeros, truncating to the first `max_len` ids.
pub fn pad(ids: &[usize], max_len: usize) -> PaddedSequence {
    assert!(max_len >= 1, "max_len must be at least 1");
    let true_len = ids.len().min(max_len);
    let mut out = Vec::with_capacity(max_len);
    out.extend_from_slice(&ids[..true_len]);
    out.resize(max_len, PAD);
    PaddedSequence { ids: out, true_len }
}

pub fn encode_batch<S: AsRef<str>>(vocab: &Vocabulary, texts: &[S]) -> Vec<PaddedSequence> {
    texts
        .iter()
        .map(|t| pad(&encode(vocab, t.as_ref()), vocab.max_len()))
        .collect()
}
