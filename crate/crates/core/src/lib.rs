//! Core of the Amity wellness platform: the intent corpus, the text
//! pipeline that turns utterances into padded id sequences, the
//! from-scratch LSTM intent classifier, and the Dazai conversation layer.

pub mod corpus;
pub mod dazai;
pub mod neuralnet;
pub mod textpipe;

pub use corpus::{Category, CorpusStats, Intent, IntentCorpus, LabeledSample};
pub use dazai::{BotReply, ChatSession, Dazai, Speaker, Turn};
pub use neuralnet::{ModelConfig, ModelParams, TrainConfig, TrainedModel};
pub use textpipe::{PaddedSequence, Vocabulary};
