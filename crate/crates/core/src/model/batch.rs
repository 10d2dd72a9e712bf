use super::{ModelError, RULE_VOCAB};
use crate::corpus::{Tag, Vocabulary};
use crate::lexicon::Lexicon;

/// A padded block of `batch_size` sentences of `seq_len` positions each.
/// All arrays are row-major `B x T`; padding carries id 0, mask 0 and tag `O`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub batch_size: usize,
    pub seq_len: usize,
    pub char_ids: Vec<usize>,
    pub rule_ids: Vec<usize>,
    pub mask: Vec<f64>,
    pub gold: Option<Vec<Tag>>,
}

impl Batch {
    pub fn new(
        batch_size: usize,
        seq_len: usize,
        char_ids: Vec<usize>,
        rule_ids: Vec<usize>,
        mask: Vec<f64>,
        gold: Option<Vec<Tag>>,
    ) -> Result<Self, ModelError> {
        let n = batch_size * seq_len;
        if n == 0 {
            return Err(ModelError::Batch("empty batch".into()));
        }
        if char_ids.len() != n || rule_ids.len() != n || mask.len() != n {
            return Err(ModelError::Batch(format!(
                "expected {n} entries, got ids {} rules {} mask {}",
                char_ids.len(),
                rule_ids.len(),
                mask.len()
            )));
        }
        if gold.as_ref().is_some_and(|g| g.len() != n) {
            return Err(ModelError::Batch("gold tags have the wrong length".into()));
        }
        if let Some(&bad) = rule_ids.iter().find(|&&r| r >= RULE_VOCAB) {
            return Err(ModelError::UnknownRuleId(bad));
        }
        for b in 0..batch_size {
            let row = &mask[b * seq_len..(b + 1) * seq_len];
            if row.iter().any(|&m| m != 0.0 && m != 1.0) {
                return Err(ModelError::Batch("mask entries must be 0 or 1".into()));
            }
            if row.windows(2).any(|w| w[0] < w[1]) {
                return Err(ModelError::Batch(format!("mask row {b} is not 1s then 0s")));
            }
            if row[0] == 0.0 {
                return Err(ModelError::AllMasked(b));
            }
        }
        Ok(Self {
            batch_size,
            seq_len,
            char_ids,
            rule_ids,
            mask,
            gold,
        })
    }

    /// Pads `sentences` to the longest one (capped at `max_len`), computing
    /// rule tags from `lexicon`.
    pub fn from_sentences(
        sentences: &[&[char]],
        gold: Option<&[&[Tag]]>,
        vocab: &Vocabulary,
        lexicon: &Lexicon,
        max_len: usize,
    ) -> Result<Self, ModelError> {
        let b = sentences.len();
        let t = sentences
            .iter()
            .map(|s| s.len().min(max_len))
            .max()
            .unwrap_or(0);
        let mut char_ids = vec![crate::corpus::PAD; b * t];
        let mut rule_ids = vec![crate::lexicon::RuleTag::Unknown.index(); b * t];
        let mut mask = vec![0.0; b * t];
        let mut tags = gold.map(|_| vec![Tag::Outside; b * t]);
        for (i, s) in sentences.iter().enumerate() {
            let s = &s[..s.len().min(max_len)];
            let rules = lexicon.rule_tags(s);
            for (j, &c) in s.iter().enumerate() {
                char_ids[i * t + j] = vocab.id(c);
                rule_ids[i * t + j] = rules[j].index();
                mask[i * t + j] = 1.0;
            }
            if let (Some(tags), Some(g)) = (tags.as_mut(), gold) {
                if g[i].len() < s.len() {
                    return Err(ModelError::Batch(format!("sentence {i} has too few tags")));
                }
                tags[i * t..i * t + s.len()].copy_from_slice(&g[i][..s.len()]);
            }
        }
        Self::new(b, t, char_ids, rule_ids, mask, tags)
    }

    /// Number of real positions per sentence.
    pub fn lengths(&self) -> Vec<usize> {
        self.mask
            .chunks(self.seq_len)
            .map(|row| row.iter().filter(|&&m| m == 1.0).count())
            .collect()
    }

    pub fn has_padding(&self) -> bool {
        self.mask.contains(&0.0)
    }

    pub fn gold_row(&self, b: usize) -> Option<&[Tag]> {
        let len = self.lengths()[b];
        self.gold
            .as_ref()
            .map(|g| &g[b * self.seq_len..b * self.seq_len + len])
    }
}
