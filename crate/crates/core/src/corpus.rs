//! The intent corpus: tagged example utterances paired with candidate
//! replies. Loading validates the whole file up front and rejects
//! anything structurally wrong instead of trying to repair it.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::textpipe::tokenize;

/// Current corpus file format version.
pub const FORMAT_VERSION: &str = "1";

/// Sample corpus shipped with the crate: 72 tags, 246 patterns.
pub const BUNDLED_CORPUS: &str = include_str!("../data/corpus.json");

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("corpus is not valid JSON at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error in {}field `{field}`: {reason}", intent.as_ref().map(|i| format!("intent {i}, ")).unwrap_or_default())]
    Schema {
        field: String,
        intent: Option<String>,
        reason: String,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CorpusError {
    fn schema(field: &str, intent: Option<String>, reason: impl Into<String>) -> Self {
        CorpusError::Schema {
            field: field.to_string(),
            intent,
            reason: reason.into(),
        }
    }
}

/// Coarse grouping of tags used for reporting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Question,
    Greeting,
    #[default]
    Descriptive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intent {
    pub tag: String,
    #[serde(default)]
    pub category: Category,
    pub patterns: Vec<String>,
    pub responses: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IntentCorpus {
    pub version: String,
    pub intents: Vec<Intent>,
}

/// One training row: a pattern and the index of the intent it belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSample {
    pub text: String,
    pub tag_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub tags: usize,
    pub question: usize,
    pub greeting: usize,
    pub descriptive: usize,
    pub pattern_count: usize,
    pub response_count: usize,
    pub max_pattern_tokens: usize,
}

impl IntentCorpus {
    /// Builds a corpus after checking every invariant.
    pub fn new(version: impl Into<String>, intents: Vec<Intent>) -> Result<Self, CorpusError> {
        let corpus = IntentCorpus {
            version: version.into(),
            intents,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn bundled() -> Self {
        parse_corpus(BUNDLED_CORPUS).expect("bundled corpus is valid")
    }

    pub fn tags(&self) -> Vec<String> {
        self.intents.iter().map(|i| i.tag.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.intents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intents.is_empty()
    }

    pub fn intent(&self, tag: &str) -> Option<&Intent> {
        self.intents.iter().find(|i| i.tag == tag)
    }

    fn validate(&self) -> Result<(), CorpusError> {
        if self.version != FORMAT_VERSION {
            return Err(CorpusError::schema(
                "version",
                None,
                format!("unsupported version {:?}, expected {FORMAT_VERSION:?}", self.version),
            ));
        }
        let mut seen = HashSet::new();
        for (idx, intent) in self.intents.iter().enumerate() {
            let label = || Some(format!("#{idx} ({:?})", intent.tag));
            if intent.tag.trim().is_empty() {
                return Err(CorpusError::schema("tag", label(), "tag must be non-empty"));
            }
            if !seen.insert(intent.tag.as_str()) {
                return Err(CorpusError::schema("tag", label(), "duplicate tag"));
            }
            for (field, list) in [("patterns", &intent.patterns), ("responses", &intent.responses)] {
                if list.is_empty() {
                    return Err(CorpusError::schema(field, label(), "list must be non-empty"));
                }
                if let Some(pos) = list.iter().position(|s| s.trim().is_empty()) {
                    return Err(CorpusError::schema(
                        field,
                        label(),
                        format!("entry {pos} is empty"),
                    ));
                }
            }
        }
        if self.intents.len() < 2 {
            return Err(CorpusError::schema(
                "intents",
                None,
                format!("a classifier needs at least 2 tags, found {}", self.intents.len()),
            ));
        }
        Ok(())
    }
}

/// Parses and validates corpus JSON from memory.
pub fn parse_corpus(text: &str) -> Result<IntentCorpus, CorpusError> {
    let root: Value = serde_json::from_str(text).map_err(|e| CorpusError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let Value::Object(mut root) = root else {
        return Err(CorpusError::schema("<root>", None, "expected a JSON object"));
    };
    if let Some(key) = root.keys().find(|k| *k != "version" && *k != "intents") {
        return Err(CorpusError::schema(key, None, "unknown top-level key"));
    }
    let version = match root.remove("version") {
        None => FORMAT_VERSION.to_string(),
        Some(Value::String(v)) => v,
        Some(_) => return Err(CorpusError::schema("version", None, "expected a string")),
    };
    let raw = match root.remove("intents") {
        Some(Value::Array(items)) => items,
        Some(_) => return Err(CorpusError::schema("intents", None, "expected an array")),
        None => return Err(CorpusError::schema("intents", None, "missing")),
    };
    let mut intents = Vec::with_capacity(raw.len());
    for (idx, item) in raw.into_iter().enumerate() {
        let tag = item.get("tag").and_then(Value::as_str).map(str::to_string);
        let intent: Intent = serde_json::from_value(item).map_err(|e| {
            let label = match &tag {
                Some(t) => format!("#{idx} ({t:?})"),
                None => format!("#{idx}"),
            };
            CorpusError::schema(&schema_field(&e.to_string()), Some(label), e.to_string())
        })?;
        intents.push(intent);
    }
    IntentCorpus::new(version, intents)
}

// serde reports the offending field inside backticks.
fn schema_field(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "<intent>".to_string())
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<IntentCorpus, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => CorpusError::FileNotFound(path.to_path_buf()),
        _ => CorpusError::Io(e),
    })?;
    parse_corpus(&text)
}

/// Compact JSON encoding of the corpus, in the file format's key order.
pub fn to_json(corpus: &IntentCorpus) -> String {
    serde_json::to_string(corpus).expect("corpus serializes")
}

pub fn serialize_corpus(corpus: &IntentCorpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    fs::write(path, to_json(corpus))?;
    Ok(())
}

/// One sample per (pattern, intent) pair, in corpus order.
pub fn explode_patterns(corpus: &IntentCorpus) -> Vec<LabeledSample> {
    corpus
        .intents
        .iter()
        .enumerate()
        .flat_map(|(tag_index, intent)| {
            intent.patterns.iter().map(move |p| LabeledSample {
                text: p.clone(),
                tag_index,
            })
        })
        .collect()
}

pub fn corpus_stats(corpus: &IntentCorpus) -> CorpusStats {
    let mut stats = CorpusStats {
        tags: corpus.intents.len(),
        ..CorpusStats::default()
    };
    for intent in &corpus.intents {
        match intent.category {
            Category::Question => stats.question += 1,
            Category::Greeting => stats.greeting += 1,
            Category::Descriptive => stats.descriptive += 1,
        }
        stats.pattern_count += intent.patterns.len();
        stats.response_count += intent.responses.len();
        for p in &intent.patterns {
            stats.max_pattern_tokens = stats.max_pattern_tokens.max(tokenize(p).len());
        }
    }
    stats
}
