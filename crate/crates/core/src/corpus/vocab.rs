use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{CorpusError, LabeledSentence};

pub const PAD: usize = 0;
pub const UNK_CHAR: usize = 1;

/// Character to index map. Indices 0 and 1 are reserved for padding and
/// unseen characters; real characters follow in first-occurrence order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<char>", into = "Vec<char>")]
pub struct Vocabulary {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl From<Vec<char>> for Vocabulary {
    fn from(chars: Vec<char>) -> Self {
        let mut v = Vocabulary {
            chars: Vec::with_capacity(chars.len()),
            index: HashMap::new(),
        };
        for c in chars {
            v.insert(c);
        }
        v
    }
}

impl From<Vocabulary> for Vec<char> {
    fn from(v: Vocabulary) -> Self {
        v.chars
    }
}

impl Vocabulary {
    pub fn build(sentences: &[LabeledSentence]) -> Result<Self, CorpusError> {
        if sentences.is_empty() {
            return Err(CorpusError::Empty);
        }
        Ok(Self::from_chars(sentences.iter().flat_map(|s| s.chars().iter().copied())))
    }

    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Self {
        let mut v = Vocabulary {
            chars: Vec::new(),
            index: HashMap::new(),
        };
        for c in chars {
            v.insert(c);
        }
        v
    }

    fn insert(&mut self, c: char) {
        if !self.index.contains_key(&c) {
            self.index.insert(c, self.chars.len() + 2);
            self.chars.push(c);
        }
    }

    /// Total size including the two reserved entries.
    pub fn len(&self) -> usize {
        self.chars.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(UNK_CHAR)
    }

    pub fn get(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn char_at(&self, id: usize) -> Option<char> {
        id.checked_sub(2).and_then(|i| self.chars.get(i)).copied()
    }

    /// Real characters in index order.
    pub fn chars(&self) -> &[char] {
        &self.chars
    }
}

/// Fixed-length ids and mask for one sentence: truncated or padded to `max_len`.
pub fn encode(chars: &[char], vocab: &Vocabulary, max_len: usize) -> (Vec<usize>, Vec<u8>) {
    assert!(max_len >= 1, "max_len must be positive");
    let mut ids = vec![PAD; max_len];
    let mut mask = vec![0u8; max_len];
    for (i, &c) in chars.iter().take(max_len).enumerate() {
        ids[i] = vocab.id(c);
        mask[i] = 1;
    }
    (ids, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Tag;

    fn plain(text: &str) -> LabeledSentence {
        LabeledSentence::new(text.chars().collect(), vec![Tag::Outside; text.chars().count()])
            .unwrap()
    }

    #[test]
    fn first_occurrence_order() {
        let v = Vocabulary::build(&[plain("ab"), plain("ba")]).unwrap();
        assert_eq!(v.id('a'), 2);
        assert_eq!(v.id('b'), 3);
        assert_eq!(v.len(), 4);
    }

    #[test]
    fn repeated_char() {
        assert_eq!(Vocabulary::build(&[plain("aaa")]).unwrap().len(), 3);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(Vocabulary::build(&[]), Err(CorpusError::Empty)));
    }

    #[test]
    fn encode_pads() {
        let v = Vocabulary::from_chars("ab".chars());
        let (ids, mask) = encode(&['a', 'b'], &v, 4);
        assert_eq!(ids, vec![2, 3, 0, 0]);
        assert_eq!(mask, vec![1, 1, 0, 0]);
    }

    #[test]
    fn encode_unknown() {
        let v = Vocabulary::from_chars("ab".chars());
        let (ids, _) = encode(&['a', 'b', 'c'], &v, 3);
        assert_eq!(ids, vec![2, 3, UNK_CHAR]);
    }

    #[test]
    fn encode_truncates_at_600() {
        let v = Vocabulary::from_chars("x".chars());
        let chars = vec!['x'; 700];
        let (ids, mask) = encode(&chars, &v, 600);
        assert_eq!(ids.len(), 600);
        assert!(mask.iter().all(|&m| m == 1));
    }

    #[test]
    fn serde_round_trip() {
        let v = Vocabulary::from_chars("héllo wörld".chars());
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }
}
