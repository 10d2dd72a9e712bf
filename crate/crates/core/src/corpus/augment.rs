//! Entity-substitution augmentation.
//!
//! Stage A adds, for every sentence whose entities are all datasets, one copy
//! with each dataset replaced by a different dataset name. Stage B then adds,
//! for every sentence present after stage A, one copy in which every entity is
//! replaced by a lowercased name of the same type. Stage B doubles the count.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CorpusError, EntityType, LabeledSentence, Tag};

/// Reads an entity list: one entry per line, `#` lines and blank lines ignored,
/// surrounding whitespace trimmed.
pub fn read_pool(path: impl AsRef<Path>) -> Result<Vec<String>, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    Ok(parse_pool(&text))
}

pub(crate) fn parse_pool(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

pub fn augment(
    sentences: &[LabeledSentence],
    method_pool: &[String],
    dataset_pool: &[String],
    seed: u64,
) -> Result<Vec<LabeledSentence>, CorpusError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<LabeledSentence> = sentences.to_vec();

    for s in sentences {
        let spans = s.spans();
        if spans.is_empty() || spans.iter().any(|sp| sp.kind != EntityType::Dataset) {
            continue;
        }
        let copy = substitute(s, |kind, current| {
            let choices: Vec<&String> = dataset_pool.iter().filter(|d| *d != current).collect();
            choices
                .choose(&mut rng)
                .map(|d| (*d).clone())
                .ok_or_else(|| CorpusError::PoolTooSmall {
                    kind,
                    current: current.to_string(),
                })
        })?;
        out.push(copy);
    }

    let after_a = out.len();
    for i in 0..after_a {
        let copy = substitute(&out[i], |kind, current| {
            let pool = match kind {
                EntityType::Method => method_pool,
                EntityType::Dataset => dataset_pool,
            };
            if pool.is_empty() {
                return Err(CorpusError::PoolTooSmall {
                    kind,
                    current: current.to_string(),
                });
            }
            Ok(pool[rng.gen_range(0..pool.len())].to_lowercase())
        })?;
        out.push(copy);
    }
    Ok(out)
}

/// Copies `s` with every entity span replaced by `pick(kind, current_text)`,
/// re-tagging replaced spans as `B-X I-X*`.
fn substitute(
    s: &LabeledSentence,
    mut pick: impl FnMut(EntityType, &str) -> Result<String, CorpusError>,
) -> Result<LabeledSentence, CorpusError> {
    let mut chars = Vec::with_capacity(s.len());
    let mut tags = Vec::with_capacity(s.len());
    let mut pos = 0;
    for span in s.spans() {
        chars.extend_from_slice(&s.chars()[pos..span.start]);
        tags.extend_from_slice(&s.tags()[pos..span.start]);
        let current: String = s.chars()[span.start..span.end].iter().collect();
        let replacement = pick(span.kind, &current)?;
        for (j, c) in replacement.chars().enumerate() {
            chars.push(c);
            tags.push(if j == 0 {
                Tag::begin(span.kind)
            } else {
                Tag::inside(span.kind)
            });
        }
        pos = span.end;
    }
    chars.extend_from_slice(&s.chars()[pos..]);
    tags.extend_from_slice(&s.tags()[pos..]);
    let mut out = LabeledSentence::new(chars, tags)?;
    out.doc_id = s.doc_id.clone();
    Ok(out)
}
