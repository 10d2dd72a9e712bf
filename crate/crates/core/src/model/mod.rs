//! The tagging network: character and rule embeddings feed a CNN branch and a
//! two-layer BiLSTM in parallel; their outputs are concatenated, passed through
//! a self-attention layer and projected to per-character tag emissions for
//! the CRF head.

mod batch;
mod checkpoint;
mod network;
mod params;
mod tagger;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Tag;
use crate::crf::CrfError;
use crate::lexicon::RuleTag;
use crate::numerics::NumericsError;

pub use batch::Batch;
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use network::{attention, bilstm, cnn_branch, emissions, mean_nll, sentence_nlls};
pub use params::{init_params, CnnParams, LstmDirection, LstmLayer, MderParams};
pub use tagger::Tagger;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("batch: {0}")]
    Batch(String),
    #[error("rule id {0} out of range")]
    UnknownRuleId(usize),
    #[error("sentence {0} has no unmasked positions")]
    AllMasked(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Crf(#[from] CrfError),
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MderConfig {
    pub char_emb_dim: usize,
    pub rule_emb_dim: usize,
    /// Hidden units per direction.
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub cnn_filters: usize,
    /// Stride of the 1x1 convolution along the feature axis.
    pub feature_stride: usize,
    pub attn_in: usize,
    pub attn_out: usize,
    pub n_tags: usize,
    pub max_len: usize,
    pub use_rule: bool,
    pub use_cnn: bool,
}

impl Default for MderConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl MderConfig {
    /// 200 + 40 input, 2 x 240 BiLSTM, 30 filters, 510 x 480 attention.
    pub fn full() -> Self {
        Self {
            char_emb_dim: 200,
            rule_emb_dim: 40,
            lstm_hidden: 240,
            lstm_layers: 2,
            cnn_filters: 30,
            feature_stride: 2,
            attn_in: 510,
            attn_out: 480,
            n_tags: Tag::COUNT,
            max_len: crate::corpus::DEFAULT_MAX_LEN,
            use_rule: true,
            use_cnn: true,
        }
    }

    /// BiLSTM + attention + CRF without rule embeddings or the CNN branch.
    pub fn baseline() -> Self {
        Self::full().with_ablation(false, false)
    }

    /// Every width divided by 8 (rounded up), for fast test runs.
    pub fn debug_small() -> Self {
        let full = Self::full();
        let d = |v: usize| v.div_ceil(8);
        Self {
            char_emb_dim: d(full.char_emb_dim),
            rule_emb_dim: d(full.rule_emb_dim),
            lstm_hidden: d(full.lstm_hidden),
            cnn_filters: d(full.cnn_filters),
            attn_out: d(full.attn_out),
            ..full
        }
        .with_ablation(true, true)
    }

    /// Sets the ablation flags and recomputes `attn_in`.
    pub fn with_ablation(mut self, use_rule: bool, use_cnn: bool) -> Self {
        self.use_rule = use_rule;
        self.use_cnn = use_cnn;
        self.attn_in = self.expected_attn_in();
        self
    }

    pub fn input_width(&self) -> usize {
        self.char_emb_dim + if self.use_rule { self.rule_emb_dim } else { 0 }
    }

    fn expected_attn_in(&self) -> usize {
        2 * self.lstm_hidden + if self.use_cnn { self.cnn_filters } else { 0 }
    }

    /// Width of the strided feature view each filter scans.
    pub fn cnn_positions(&self) -> usize {
        self.input_width().div_ceil(self.feature_stride)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Config(m));
        if self.n_tags != Tag::COUNT {
            return err(format!("n_tags must be {}, got {}", Tag::COUNT, self.n_tags));
        }
        if self.attn_in != self.expected_attn_in() {
            return err(format!(
                "attn_in {} != 2 * {} + {}",
                self.attn_in,
                self.lstm_hidden,
                if self.use_cnn { self.cnn_filters } else { 0 }
            ));
        }
        let positive = [
            ("char_emb_dim", self.char_emb_dim),
            ("lstm_hidden", self.lstm_hidden),
            ("lstm_layers", self.lstm_layers),
            ("feature_stride", self.feature_stride),
            ("attn_out", self.attn_out),
            ("max_len", self.max_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return err(format!("{name} must be positive"));
            }
        }
        if self.use_rule && self.rule_emb_dim == 0 {
            return err("rule_emb_dim must be positive when rules are used".into());
        }
        if self.use_cnn && self.cnn_filters == 0 {
            return err("cnn_filters must be positive when the CNN is used".into());
        }
        Ok(())
    }
}

pub(crate) const RULE_VOCAB: usize = RuleTag::COUNT;
