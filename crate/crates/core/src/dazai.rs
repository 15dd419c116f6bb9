//! Dazai, the chatbot conversation layer: classify an utterance, pick a
//! reply from the matching intent, and keep the session transcript.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::corpus::IntentCorpus;
use crate::neuralnet::{NetError, TrainedModel};

/// Replies below this confidence fall back to [`FALLBACK_REPLY`].
pub const DEFAULT_THRESHOLD: f64 = 0.40;

pub const FALLBACK_REPLY: &str =
    "I'm not sure I understood. Could you tell me more about how you're feeling?";

#[derive(Debug, Error, PartialEq)]
pub enum DazaiError {
    #[error("model and corpus do not match: {0}")]
    VersionMismatch(String),
    #[error("no chatbot model is loaded")]
    ModelUnavailable,
    #[error("utterance contains no words")]
    AllPadding,
    #[error(transparent)]
    Net(NetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    Bot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    pub tag: Option<String>,
    pub confidence: Option<f64>,
    /// Milliseconds since the Unix epoch, strictly increasing per session.
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatSession {
    pub session_id: String,
    pub email: String,
    pub turns: Vec<Turn>,
}

impl ChatSession {
    pub fn new(email: impl Into<String>) -> Self {
        ChatSession {
            session_id: Uuid::new_v4().to_string(),
            email: email.into(),
            turns: Vec::new(),
        }
    }

    /// Earliest timestamp a new turn may carry given the clock reading `now`.
    pub fn next_timestamp(&self, now: i64) -> i64 {
        match self.turns.last() {
            Some(t) if t.timestamp >= now => t.timestamp + 1,
            _ => now,
        }
    }

    /// Appends a turn, bumping its timestamp if needed to keep the order strict.
    pub fn push(&mut self, mut turn: Turn) -> &Turn {
        turn.timestamp = self.next_timestamp(turn.timestamp);
        self.turns.push(turn);
        self.turns.last().expect("just pushed")
    }
}

pub fn new_session(email: &str) -> ChatSession {
    ChatSession::new(email)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BotReply {
    /// `None` only when the utterance had no recognizable words.
    pub tag: Option<String>,
    pub confidence: f64,
    pub reply: String,
    pub fallback: bool,
}

/// A trained model paired with the response pools of the corpus it was
/// trained on.
#[derive(Debug, Clone)]
pub struct Dazai {
    model: TrainedModel,
    responses: Vec<Vec<String>>,
    threshold: f64,
}

impl Dazai {
    /// Fails with `VersionMismatch` unless the corpus tags are exactly the
    /// model's tags, in the same order.
    pub fn new(model: TrainedModel, corpus: &IntentCorpus) -> Result<Self, DazaiError> {
        let tags = corpus.tags();
        if tags.len() != model.config.num_tags {
            return Err(DazaiError::VersionMismatch(format!(
                "model has {} tags, corpus has {}",
                model.config.num_tags,
                tags.len()
            )));
        }
        if tags != model.tags {
            return Err(DazaiError::VersionMismatch(
                "model tag list differs from corpus tags".into(),
            ));
        }
        Ok(Dazai {
            responses: corpus.intents.iter().map(|i| i.responses.clone()).collect(),
            model,
            threshold: DEFAULT_THRESHOLD,
        })
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn model(&self) -> &TrainedModel {
        &self.model
    }

    pub fn responses(&self, tag: &str) -> Option<&[String]> {
        let idx = self.model.tags.iter().position(|t| t == tag)?;
        Some(&self.responses[idx])
    }

    /// Most probable tag and its probability.
    pub fn classify(&self, text: &str) -> Result<(String, f64), DazaiError> {
        match self.model.classify(text) {
            Ok((idx, conf)) => Ok((self.model.tags[idx].clone(), conf)),
            Err(NetError::AllPadding { .. }) => Err(DazaiError::AllPadding),
            Err(e) => Err(DazaiError::Net(e)),
        }
    }

    /// Answers `text`, appending the user turn and the bot turn to `session`.
    pub fn respond<R: Rng + ?Sized>(
        &self,
        session: &mut ChatSession,
        text: &str,
        rng: &mut R,
        now: i64,
    ) -> BotReply {
        let reply = match self.model.classify(text) {
            Ok((idx, confidence)) if confidence >= self.threshold => {
                let pool = &self.responses[idx];
                BotReply {
                    tag: Some(self.model.tags[idx].clone()),
                    confidence,
                    reply: pool[rng.gen_range(0..pool.len())].clone(),
                    fallback: false,
                }
            }
            Ok((idx, confidence)) => BotReply {
                tag: Some(self.model.tags[idx].clone()),
                confidence,
                reply: FALLBACK_REPLY.to_string(),
                fallback: true,
            },
            Err(_) => BotReply {
                tag: None,
                confidence: 0.0,
                reply: FALLBACK_REPLY.to_string(),
                fallback: true,
            },
        };
        session.push(Turn {
            speaker: Speaker::User,
            text: text.to_string(),
            tag: None,
            confidence: None,
            timestamp: now,
        });
        session.push(Turn {
            speaker: Speaker::Bot,
            text: reply.reply.clone(),
            tag: reply.tag.clone(),
            confidence: Some(reply.confidence),
            timestamp: now,
        });
        reply
    }
}

/// [`Dazai::respond`] for a server that may not have a model loaded.
pub fn respond<R: Rng + ?Sized>(
    bot: Option<&Dazai>,
    session: &mut ChatSession,
    text: &str,
    rng: &mut R,
    now: i64,
) -> Result<BotReply, DazaiError> {
    let bot = bot.ok_or(DazaiError::ModelUnavailable)?;
    Ok(bot.respond(session, text, rng, now))
}
