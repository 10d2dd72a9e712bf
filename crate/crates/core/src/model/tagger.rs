use super::{emissions, init_params, Batch, MderConfig, MderParams, ModelError};
use crate::corpus::{Tag, Vocabulary};
use crate::crf;
use crate::lexicon::Lexicon;
use crate::numerics::{Tape, Tensor};

/// Sentences per inference batch.
const PREDICT_BATCH: usize = 16;

/// A network together with everything needed to run it on raw text.
#[derive(Clone, Debug, PartialEq)]
pub struct Tagger {
    pub config: MderConfig,
    pub vocab: Vocabulary,
    pub lexicon: Lexicon,
    pub params: MderParams,
}

impl Tagger {
    pub fn new(
        config: MderConfig,
        vocab: Vocabulary,
        lexicon: Lexicon,
        seed: u64,
    ) -> Result<Self, ModelError> {
        let params = init_params(&config, vocab.len(), seed)?;
        Ok(Self {
            config,
            vocab,
            lexicon,
            params,
        })
    }

    pub fn batch(&self, sentences: &[&[char]], gold: Option<&[&[Tag]]>) -> Result<Batch, ModelError> {
        Batch::from_sentences(sentences, gold, &self.vocab, &self.lexicon, self.config.max_len)
    }

    /// Emissions `[B, T, 5]` without recording gradients.
    pub fn emissions(&self, batch: &Batch) -> Result<Tensor, ModelError> {
        let tape = Tape::new();
        let vars = self.params.map(|_, t| tape.constant(t.clone()));
        let em = emissions(&vars, batch, &self.config)?;
        let value = em.value().clone();
        Ok(value)
    }

    /// Viterbi tags for each sentence, truncated to `max_len` characters.
    pub fn predict(&self, sentences: &[&[char]]) -> Result<Vec<Vec<Tag>>, ModelError> {
        let mut out = Vec::with_capacity(sentences.len());
        for chunk in sentences.chunks(PREDICT_BATCH) {
            let nonempty: Vec<&[char]> = chunk.iter().copied().filter(|s| !s.is_empty()).collect();
            let mut decoded = if nonempty.is_empty() {
                Vec::new()
            } else {
                let batch = self.batch(&nonempty, None)?;
                self.decode(&batch)?
            }
            .into_iter();
            for s in chunk {
                out.push(if s.is_empty() {
                    Vec::new()
                } else {
                    decoded.next().expect("one result per non-empty sentence")
                });
            }
        }
        Ok(out)
    }

    fn decode(&self, batch: &Batch) -> Result<Vec<Vec<Tag>>, ModelError> {
        let em = self.emissions(batch)?;
        let t = batch.seq_len;
        let width = crf::NUM_TAGS;
        batch
            .lengths()
            .iter()
            .enumerate()
            .map(|(i, &len)| {
                let start = i * t * width;
                let rows = Tensor::new(vec![len, width], em.data()[start..start + len * width].to_vec())?;
                Ok(crf::viterbi(&rows, &self.params.crf)?.0)
            })
            .collect()
    }
}
