//! Gazetteer lists and the rule labeler.
//!
//! Rule tags are computed per character from a method whitelist, a dataset
//! whitelist and a blacklist of general words, and are fed to the network as
//! an extra embedded input.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{read_pool, CorpusError, EntityType};

/// Longest entry, in whitespace-separated words, considered by the matcher.
pub const MAX_NGRAM: usize = 5;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error(transparent)]
    Io(#[from] CorpusError),
    #[error("entry {entry:?} appears in both the {first} and the {second}")]
    Overlap {
        entry: String,
        first: &'static str,
        second: &'static str,
    },
    #[error("empty entry in the {0}")]
    EmptyEntry(&'static str),
}

/// Per-character rule tag. `Unknown` is the default for characters not
/// covered by any list, whitespace included.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum RuleTag {
    BeginMethod,
    InsideMethod,
    BeginDataset,
    InsideDataset,
    Outside,
    #[default]
    Unknown,
}

impl RuleTag {
    pub const COUNT: usize = 6;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RuleTag::BeginMethod => "B-M",
            RuleTag::InsideMethod => "I-M",
            RuleTag::BeginDataset => "B-D",
            RuleTag::InsideDataset => "I-D",
            RuleTag::Outside => "O",
            RuleTag::Unknown => "<unk>",
        }
    }
}

impl fmt::Display for RuleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Method whitelist, dataset whitelist and blacklist. Immutable once built.
///
/// Whitelist matching is case-sensitive. Blacklist entries are stored
/// lowercased and matched case-insensitively.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    methods: BTreeSet<String>,
    datasets: BTreeSet<String>,
    blacklist: BTreeSet<String>,
}

fn normalize_entry(entry: &str) -> String {
    entry.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl Lexicon {
    pub fn new<I, S>(methods: I, datasets: I, blacklist: I) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let collect = |items: I, name: &'static str, lower: bool| {
            items
                .into_iter()
                .map(|s| {
                    let e = normalize_entry(s.as_ref());
                    if e.is_empty() {
                        Err(LexiconError::EmptyEntry(name))
                    } else if lower {
                        Ok(e.to_lowercase())
                    } else {
                        Ok(e)
                    }
                })
                .collect::<Result<BTreeSet<String>, _>>()
        };
        let methods = collect(methods, "method whitelist", false)?;
        let datasets = collect(datasets, "dataset whitelist", false)?;
        let blacklist = collect(blacklist, "blacklist", true)?;

        if let Some(e) = methods.intersection(&datasets).next() {
            return Err(LexiconError::Overlap {
                entry: e.clone(),
                first: "method whitelist",
                second: "dataset whitelist",
            });
        }
        for (list, name) in [(&methods, "method whitelist"), (&datasets, "dataset whitelist")] {
            if let Some(e) = list.iter().find(|e| blacklist.contains(&e.to_lowercase())) {
                return Err(LexiconError::Overlap {
                    entry: e.clone(),
                    first: name,
                    second: "blacklist",
                });
            }
        }
        Ok(Self {
            methods,
            datasets,
            blacklist,
        })
    }

    pub fn load(
        method_path: impl AsRef<Path>,
        dataset_path: impl AsRef<Path>,
        blacklist_path: impl AsRef<Path>,
    ) -> Result<Self, LexiconError> {
        Self::new(
            read_pool(method_path)?,
            read_pool(dataset_path)?,
            read_pool(blacklist_path)?,
        )
    }

    /// Loads `methods.txt`, `datasets.txt` and `blacklist.txt` from `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, LexiconError> {
        let dir = dir.as_ref();
        Self::load(
            dir.join("methods.txt"),
            dir.join("datasets.txt"),
            dir.join("blacklist.txt"),
        )
    }

    pub fn methods(&self) -> &BTreeSet<String> {
        &self.methods
    }

    pub fn datasets(&self) -> &BTreeSet<String> {
        &self.datasets
    }

    pub fn blacklist(&self) -> &BTreeSet<String> {
        &self.blacklist
    }

    pub fn is_empty(&self) -> bool {
        self.methods.is_empty() && self.datasets.is_empty() && self.blacklist.is_empty()
    }

    fn classify(&self, candidate: &str) -> Option<Option<EntityType>> {
        if self.methods.contains(candidate) {
            Some(Some(EntityType::Method))
        } else if self.datasets.contains(candidate) {
            Some(Some(EntityType::Dataset))
        } else if self.blacklist.contains(&candidate.to_lowercase()) {
            Some(None)
        } else {
            None
        }
    }

    /// Rule tag for every character of `chars`.
    ///
    /// Words are maximal non-whitespace runs. Scanning left to right, the
    /// longest n-gram (n <= 5, words joined by single spaces) found in any
    /// list is tagged and skipped; ties in length go to methods, then
    /// datasets, then the blacklist.
    pub fn rule_tags(&self, chars: &[char]) -> Vec<RuleTag> {
        let mut tags = vec![RuleTag::Unknown; chars.len()];
        if self.is_empty() {
            return tags;
        }
        let words = word_bounds(chars);
        let mut i = 0;
        while i < words.len() {
            let longest = MAX_NGRAM.min(words.len() - i);
            let mut matched = 0;
            for n in (1..=longest).rev() {
                let candidate = words[i..i + n]
                    .iter()
                    .map(|&(s, e)| chars[s..e].iter().collect::<String>())
                    .collect::<Vec<_>>()
                    .join(" ");
                if let Some(class) = self.classify(&candidate) {
                    let (start, end) = (words[i].0, words[i + n - 1].1);
                    for (k, t) in tags[start..end].iter_mut().enumerate() {
                        *t = match (class, k) {
                            (None, _) => RuleTag::Outside,
                            (Some(EntityType::Method), 0) => RuleTag::BeginMethod,
                            (Some(EntityType::Method), _) => RuleTag::InsideMethod,
                            (Some(EntityType::Dataset), 0) => RuleTag::BeginDataset,
                            (Some(EntityType::Dataset), _) => {
                                RuleTag::InsideDataset
                            }
                        };
                    }
                    matched = n;
                    break;
                }
            }
            i += matched.max(1);
        }
        tags
    }
}

fn word_bounds(chars: &[char]) -> Vec<(usize, usize)> {
    let mut words = Vec::new();
    let mut start = None;
    for (i, c) in chars.iter().enumerate() {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                words.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        words.push((s, chars.len()));
    }
    words
}
