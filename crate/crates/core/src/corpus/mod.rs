//! Labeled sentences, documents, vocabulary, splitting and augmentation.

mod augment;
mod conll;
mod document;
mod split;
mod vocab;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use augment::{augment, read_pool};
pub use conll::{parse_conll, read_conll, read_conll_with, write_conll, write_conll_to};
pub use document::{read_documents, Document};
pub use split::{split, SplitSpec};
pub use vocab::{encode, Vocabulary, PAD, UNK_CHAR};

/// Hard cap on sentence length in characters.
pub const DEFAULT_MAX_LEN: usize = 600;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `<char>\\t<tag>`, got {text:?}")]
    MalformedLine { line: usize, text: String },
    #[error("line {line}: unknown tag {tag:?}")]
    UnknownTag { line: usize, tag: String },
    #[error("line {line}: {tag} does not continue an entity of the same type")]
    BioViolation { line: usize, tag: Tag },
    #[error("position {position}: {tag} does not continue an entity of the same type")]
    InvalidTagSequence { position: usize, tag: Tag },
    #[error("sentence has {chars} characters but {tags} tags")]
    LengthMismatch { chars: usize, tags: usize },
    #[error("empty input")]
    Empty,
    #[error("invalid split weights {0:?}")]
    InvalidSplit([f64; 3]),
    #[error("{kind} pool needs an entry different from {current:?}")]
    PoolTooSmall { kind: EntityType, current: String },
    #[error("line {line}: {message}")]
    Document { line: usize, message: String },
}

impl CorpusError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Entity type: method or dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityType {
    #[serde(rename = "M")]
    Method,
    #[serde(rename = "D")]
    Dataset,
}

impl EntityType {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Method => "M",
            EntityType::Dataset => "D",
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Gold/decoded character tag. Index order is fixed: it addresses emission
/// columns and CRF transition rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    BeginMethod,
    InsideMethod,
    BeginDataset,
    InsideDataset,
    Outside,
}

impl Tag {
    pub const COUNT: usize = 5;
    pub const ALL: [Tag; 5] = [
        Tag::BeginMethod,
        Tag::InsideMethod,
        Tag::BeginDataset,
        Tag::InsideDataset,
        Tag::Outside,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Tag> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::BeginMethod => "B-M",
            Tag::InsideMethod => "I-M",
            Tag::BeginDataset => "B-D",
            Tag::InsideDataset => "I-D",
            Tag::Outside => "O",
        }
    }

    pub fn begin(kind: EntityType) -> Tag {
        match kind {
            EntityType::Method => Tag::BeginMethod,
            EntityType::Dataset => Tag::BeginDataset,
        }
    }

    pub fn inside(kind: EntityType) -> Tag {
        match kind {
            EntityType::Method => Tag::InsideMethod,
            EntityType::Dataset => Tag::InsideDataset,
        }
    }

    pub fn entity_type(self) -> Option<EntityType> {
        match self {
            Tag::BeginMethod | Tag::InsideMethod => Some(EntityType::Method),
            Tag::BeginDataset | Tag::InsideDataset => Some(EntityType::Dataset),
            Tag::Outside => None,
        }
    }

    pub fn is_inside(self) -> bool {
        matches!(self, Tag::InsideMethod | Tag::InsideDataset)
    }

    /// Whether `self` may directly follow `prev` (`None` = sentence start).
    pub fn can_follow(self, prev: Option<Tag>) -> bool {
        if !self.is_inside() {
            return true;
        }
        match prev {
            Some(p) => p.entity_type() == self.entity_type(),
            None => false,
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Tag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// First position at which `tags` breaks the BIO scheme.
pub fn first_bio_violation(tags: &[Tag]) -> Option<usize> {
    let mut prev = None;
    for (i, &t) in tags.iter().enumerate() {
        if !t.can_follow(prev) {
            return Some(i);
        }
        prev = Some(t);
    }
    None
}

pub fn is_bio_valid(tags: &[Tag]) -> bool {
    first_bio_violation(tags).is_none()
}

/// A character sequence with one tag per character.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledSentence {
    chars: Vec<char>,
    tags: Vec<Tag>,
    pub doc_id: Option<String>,
}

impl LabeledSentence {
    pub fn new(chars: Vec<char>, tags: Vec<Tag>) -> Result<Self, CorpusError> {
        if chars.len() != tags.len() {
            return Err(CorpusError::LengthMismatch {
                chars: chars.len(),
                tags: tags.len(),
            });
        }
        if let Some(position) = first_bio_violation(&tags) {
            return Err(CorpusError::InvalidTagSequence {
                position,
                tag: tags[position],
            });
        }
        Ok(Self {
            chars,
            tags,
            doc_id: None,
        })
    }

    /// Builds a sentence from text and `(type, start, end)` character spans.
    pub fn from_spans(text: &str, spans: &[EntitySpan]) -> Result<Self, CorpusError> {
        let chars: Vec<char> = text.chars().collect();
        let mut tags = vec![Tag::Outside; chars.len()];
        for s in spans {
            if s.start >= s.end || s.end > chars.len() {
                return Err(CorpusError::LengthMismatch {
                    chars: chars.len(),
                    tags: s.end,
                });
            }
            tags[s.start] = Tag::begin(s.kind);
            for t in &mut tags[s.start + 1..s.end] {
                *t = Tag::inside(s.kind);
            }
        }
        Self::new(chars, tags)
    }

    pub fn with_doc_id(mut self, id: impl Into<String>) -> Self {
        self.doc_id = Some(id.into());
        self
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn text(&self) -> String {
        self.chars.iter().collect()
    }

    pub fn spans(&self) -> Vec<EntitySpan> {
        extract_spans(&self.tags).expect("tags validated on construction")
    }

    /// Keeps the first `max_len` characters. A prefix of a valid tag
    /// sequence is valid.
    pub fn truncate(&mut self, max_len: usize) {
        self.chars.truncate(max_len);
        self.tags.truncate(max_len);
    }
}

/// An entity as a half-open character range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntitySpan {
    pub kind: EntityType,
    pub start: usize,
    pub end: usize,
}

impl EntitySpan {
    pub fn new(kind: EntityType, start: usize, end: usize) -> Self {
        Self { kind, start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Maximal `B-X (I-X)*` runs as spans.
pub fn extract_spans(tags: &[Tag]) -> Result<Vec<EntitySpan>, CorpusError> {
    if let Some(position) = first_bio_violation(tags) {
        return Err(CorpusError::InvalidTagSequence {
            position,
            tag: tags[position],
        });
    }
    let mut spans = Vec::new();
    let mut open: Option<(EntityType, usize)> = None;
    for (i, &t) in tags.iter().enumerate() {
        if t.is_inside() {
            continue;
        }
        if let Some((kind, start)) = open.take() {
            spans.push(EntitySpan::new(kind, start, i));
        }
        if let Some(kind) = t.entity_type() {
            open = Some((kind, i));
        }
    }
    if let Some((kind, start)) = open {
        spans.push(EntitySpan::new(kind, start, tags.len()));
    }
    Ok(spans)
}

/// Replaces tabs, carriage returns and newlines with a single space each.
pub fn normalize_text(text: &str) -> String {
    text.chars()
        .map(|c| if matches!(c, '\t' | '\n' | '\r') { ' ' } else { c })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use EntityType::*;
    use Tag::*;

    #[test]
    fn five_gold_tags() {
        assert_eq!(Tag::ALL.len(), 5);
        for (i, t) in Tag::ALL.iter().enumerate() {
            assert_eq!(t.index(), i);
            assert_eq!(t.as_str().parse::<Tag>().unwrap(), *t);
        }
        assert!("B-X".parse::<Tag>().is_err());
    }

    #[test]
    fn spans_of_single_run() {
        let spans = extract_spans(&[BeginMethod, InsideMethod, InsideMethod, Outside]).unwrap();
        assert_eq!(spans, vec![EntitySpan::new(Method, 0, 3)]);
    }

    #[test]
    fn spans_of_outside_only() {
        assert!(extract_spans(&[Outside, Outside]).unwrap().is_empty());
    }

    #[test]
    fn adjacent_spans_split_at_begin() {
        let spans = extract_spans(&[BeginMethod, BeginDataset, InsideDataset]).unwrap();
        assert_eq!(
            spans,
            vec![EntitySpan::new(Method, 0, 1), EntitySpan::new(Dataset, 1, 3)]
        );
    }

    #[test]
    fn spans_reject_invalid_bio() {
        assert!(extract_spans(&[Outside, InsideMethod]).is_err());
        assert!(extract_spans(&[BeginMethod, InsideDataset]).is_err());
    }

    #[test]
    fn sentence_rejects_length_mismatch() {
        assert!(matches!(
            LabeledSentence::new(vec!['a'], vec![]),
            Err(CorpusError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn from_spans_round_trips() {
        let s = LabeledSentence::from_spans(
            "We test SVM on Douban",
            &[EntitySpan::new(Method, 8, 11), EntitySpan::new(Dataset, 15, 21)],
        )
        .unwrap();
        assert_eq!(s.spans().len(), 2);
        assert_eq!(s.tags()[8], BeginMethod);
        assert_eq!(s.tags()[20], InsideDataset);
    }
}
