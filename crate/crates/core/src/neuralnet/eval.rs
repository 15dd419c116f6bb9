use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use super::train::TrainedModel;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("unknown tag {tag:?} in evaluation item {index}")]
    UnknownTag { tag: String, index: usize },
}

/// Anything that maps an utterance to a tag index.
pub trait Classifier {
    fn tags(&self) -> &[String];
    /// `None` when the utterance cannot be classified at all.
    fn predict(&self, text: &str) -> Option<usize>;
}

impl Classifier for TrainedModel {
    fn tags(&self) -> &[String] {
        &self.tags
    }

    fn predict(&self, text: &str) -> Option<usize> {
        self.classify(text).ok().map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TagScore {
    pub tag: String,
    pub correct: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    /// Tags that appear in the evaluation set, in model tag order.
    pub per_tag: Vec<TagScore>,
    /// `confusion[expected][predicted]`; the extra last column counts
    /// utterances that could not be classified.
    pub confusion: Vec<Vec<usize>>,
}

impl EvalReport {
    /// Overall score, e.g. `20/30 (66.7%)`.
    pub fn summary(&self) -> String {
        format!("{}/{} ({:.1}%)", self.correct, self.total, 100.0 * self.accuracy)
    }

    /// Per-topic score table, one `tag  correct/total` row per evaluated tag.
    pub fn table(&self) -> String {
        let width = self
            .per_tag
            .iter()
            .map(|s| s.tag.chars().count())
            .max()
            .unwrap_or(0)
            .max("topic".len());
        let mut out = format!("{:<width$}  score\n", "topic");
        for s in &self.per_tag {
            let _ = writeln!(out, "{:<width$}  {}/{}", s.tag, s.correct, s.total);
        }
        out
    }
}

/// Scores argmax predictions against expected tags.
pub fn evaluate<C: Classifier + ?Sized, S: AsRef<str>>(
    model: &C,
    evalset: &[(S, S)],
) -> Result<EvalReport, EvalError> {
    if evalset.is_empty() {
        return Err(EvalError::EmptyEvalSet);
    }
    let tags = model.tags();
    let expected: Vec<usize> = evalset
        .iter()
        .enumerate()
        .map(|(index, (_, tag))| {
            tags.iter()
                .position(|t| t == tag.as_ref())
                .ok_or_else(|| EvalError::UnknownTag {
                    tag: tag.as_ref().to_string(),
                    index,
                })
        })
        .collect::<Result<_, _>>()?;

    let t = tags.len();
    let mut confusion = vec![vec![0; t + 1]; t];
    let mut scores = vec![(0usize, 0usize); t];
    for ((text, _), &want) in evalset.iter().zip(&expected) {
        let got = model.predict(text.as_ref());
        confusion[want][got.unwrap_or(t)] += 1;
        scores[want].1 += 1;
        if got == Some(want) {
            scores[want].0 += 1;
        }
    }
    let correct: usize = scores.iter().map(|s| s.0).sum();
    let total = evalset.len();
    let per_tag = scores
        .iter()
        .enumerate()
        .filter(|(_, s)| s.1 > 0)
        .map(|(i, &(correct, total))| TagScore {
            tag: tags[i].clone(),
            correct,
            total,
        })
        .collect();
    Ok(EvalReport {
        correct,
        total,
        accuracy: correct as f64 / total as f64,
        per_tag,
        confusion,
    })
}
