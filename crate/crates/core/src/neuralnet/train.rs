use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backward::backward;
use super::forward::{predict, sample_dropout_masks};
use super::optim::{apply_update, AdamState};
use super::params::{init_model, ModelParams};
use super::{Architecture, ModelConfig, NetError};
use crate::corpus::{explode_patterns, IntentCorpus};
use crate::textpipe::{encode, fit_vocabulary, pad, PaddedSequence, TextError, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 25,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: 7,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.batch_size == 0 {
            return Err(NetError::InvalidTrainConfig("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NetError::InvalidTrainConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Weights together with everything needed to serve them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub vocab: Vocabulary,
    pub tags: Vec<String>,
}

impl TrainedModel {
    /// Encodes and pads an utterance to the model's sequence length.
    pub fn encode(&self, text: &str) -> Result<PaddedSequence, NetError> {
        let seq = pad(&encode(&self.vocab, text), self.vocab.max_len());
        if seq.true_len == 0 {
            return Err(NetError::AllPadding { index: 0 });
        }
        Ok(seq)
    }

    pub fn probabilities(&self, text: &str) -> Result<Vec<f64>, NetError> {
        let seq = self.encode(text)?;
        let probs = predict(&self.params, &self.config, std::slice::from_ref(&seq))?;
        Ok(probs.row(0).to_vec())
    }

    /// Index of the most probable tag (lowest index on ties) and its probability.
    pub fn classify(&self, text: &str) -> Result<(usize, f64), NetError> {
        Ok(argmax(&self.probabilities(text)?))
    }

    /// Inference-mode accuracy on pre-encoded sequences.
    pub fn accuracy(&self, seqs: &[PaddedSequence], labels: &[usize]) -> Result<f64, NetError> {
        accuracy(&self.params, &self.config, seqs, labels)
    }
}

pub(crate) fn argmax(row: &[f64]) -> (usize, f64) {
    let mut best = (0, row[0]);
    for (i, &p) in row.iter().enumerate().skip(1) {
        if p > best.1 {
            best = (i, p);
        }
    }
    best
}

fn accuracy(
    params: &ModelParams,
    config: &ModelConfig,
    seqs: &[PaddedSequence],
    labels: &[usize],
) -> Result<f64, NetError> {
    let probs = predict(params, config, seqs)?;
    let correct = labels
        .iter()
        .enumerate()
        .filter(|(i, &label)| argmax(probs.row(*i)).0 == label)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Per-epoch training record. `loss` is the mean mini-batch loss with
/// dropout active; `accuracy` is measured afterwards in inference mode over
/// the whole training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub history: Vec<EpochStats>,
}

impl TrainOutcome {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.history.last().map(|e| e.accuracy)
    }
}

/// Fits the vocabulary and trains with shuffled mini-batch Adam.
/// Identical inputs and seed give bit-identical results.
pub fn train(
    corpus: &IntentCorpus,
    arch: &Architecture,
    train_config: &TrainConfig,
) -> Result<TrainOutcome, NetError> {
    train_config.validate()?;
    let samples = explode_patterns(corpus);
    let vocab = fit_vocabulary(&samples).map_err(|e| match e {
        TextError::EmptyCorpus => NetError::EmptyCorpus,
    })?;
    let config = arch.config(vocab.vocab_size(), corpus.len());
    config.validate()?;

    let mut seqs = Vec::with_capacity(samples.len());
    let mut labels = Vec::with_capacity(samples.len());
    for s in &samples {
        let seq = pad(&encode(&vocab, &s.text), vocab.max_len());
        if seq.true_len == 0 {
            return Err(NetError::EmptyPattern {
                tag: corpus.intents[s.tag_index].tag.clone(),
                pattern: s.text.clone(),
            });
        }
        seqs.push(seq);
        labels.push(s.tag_index);
    }

    let mut params = init_model(&config, train_config.seed);
    let mut adam = AdamState::new(&config);
    // separate stream from the one used for initialization
    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    rng.set_stream(1);

    let mut order: Vec<usize> = (0..seqs.len()).collect();
    let mut history = Vec::with_capacity(train_config.epochs);
    for epoch in 1..=train_config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(train_config.batch_size) {
            let batch: Vec<PaddedSequence> = chunk.iter().map(|&i| seqs[i].clone()).collect();
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let masks =
                sample_dropout_masks(config.dropout_rate, batch.len(), config.dense_units, &mut rng);
            let (loss, grads) = backward(&params, &config, &batch, &batch_labels, Some(&masks))?;
            apply_update(&mut params, &grads, &mut adam, train_config)?;
            loss_sum += loss * batch.len() as f64;
        }
        history.push(EpochStats {
            epoch,
            loss: loss_sum / seqs.len() as f64,
            accuracy: accuracy(&params, &config, &seqs, &labels)?,
        });
    }

    Ok(TrainOutcome {
        model: TrainedModel {
            config,
            params,
            vocab,
            tags: corpus.tags(),
        },
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Category, Intent};

    fn small_corpus() -> IntentCorpus {
        let mk = |tag: &str, patterns: &[&str]| Intent {
            tag: tag.into(),
            category: Category::Descriptive,
            patterns: patterns.iter().map(|s| s.to_string()).collect(),
            responses: vec!["ok".into()],
        };
        IntentCorpus::new(
            "1",
            vec![
                mk("greeting", &["Hi", "Hello there"]),
                mk("sad", &["I feel sad", "I am unhappy"]),
                mk("sleep", &["I can't sleep", "insomnia again"]),
            ],
        )
        .unwrap()
    }

    fn small_arch() -> Architecture {
        Architecture {
            embedding_dim: 8,
            lstm_units: 6,
            dense_units: 10,
            ..Architecture::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let corpus = small_corpus();
        let tc = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let out = train(&corpus, &small_arch(), &tc).unwrap();
        assert!(out.history.is_empty());
        assert_eq!(out.model.params, init_model(&out.model.config, tc.seed));
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = small_corpus();
        let tc = TrainConfig { epochs: 3, batch_size: 2, ..TrainConfig::default() };
        let a = train(&corpus, &small_arch(), &tc).unwrap();
        let b = train(&corpus, &small_arch(), &tc).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn small_corpus_is_learned() {
        let corpus = small_corpus();
        let tc = TrainConfig {
            epochs: 60,
            batch_size: 2,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let out = train(&corpus, &small_arch(), &tc).unwrap();
        assert_eq!(out.final_accuracy(), Some(1.0));
        assert_eq!(out.model.classify("I feel sad").unwrap().0, 1);
    }

    #[test]
    fn bad_train_config() {
        let tc = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        assert!(matches!(
            train(&small_corpus(), &small_arch(), &tc),
            Err(NetError::InvalidTrainConfig(_))
        ));
    }

    #[test]
    fn punctuation_only_pattern_rejected() {
        let mut corpus = small_corpus();
        corpus.intents[0].patterns.push("?!".into());
        let err = train(&corpus, &small_arch(), &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, NetError::EmptyPattern { ref tag, .. } if tag == "greeting"));
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.25, 0.25, 0.5]), (2, 0.5));
        assert_eq!(argmax(&[0.4, 0.2, 0.4]), (0, 0.4));
    }
}
