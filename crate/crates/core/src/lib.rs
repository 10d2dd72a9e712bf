//! Rule-augmented character-level tagging of method (M) and dataset (D)
//! entities in scientific text, and mining of per-year method co-occurrence
//! networks from the tagged output.
//!
//! The pipeline runs from labeled character data ([`corpus`]) and gazetteer
//! lists ([`lexicon`]) through a CNN + BiLSTM + attention network ([`model`])
//! with a linear-chain CRF head ([`crf`]), trained by [`training`] on the
//! reverse-mode tensor substrate in [`numerics`]. [`miner`] applies a trained
//! tagger to document corpora and builds co-occurrence graphs ranked by
//! betweenness centrality.

pub mod corpus;
pub mod crf;
pub mod lexicon;
pub mod miner;
pub mod model;
pub mod numerics;
pub mod training;

pub use corpus::{
    EntitySpan, EntityType, LabeledSentence, SplitSpec, Tag, Vocabulary, DEFAULT_MAX_LEN,
};
pub use crf::CrfParams;
pub use lexicon::{Lexicon, RuleTag};
pub use miner::{MentionRecord, MethodGraph};
pub use model::{Batch, MderConfig, MderParams, Tagger};
pub use numerics::{Tape, Tensor, Var};
pub use training::{Metrics, TrainConfig};
