//! Mention extraction over document corpora and per-year method
//! co-occurrence analysis.

mod centrality;
mod export;
mod graph;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use centrality::{
    betweenness, betweenness_with, top_k, yearly_rankings, BetweennessOptions, Ranking,
};
pub use export::{
    dot, edge_csv, export_graph, export_rankings, graphml, parse_dot, rank_csv, ExportFormat,
};
pub use graph::{build_graphs, filter_edges, MethodGraph};

use crate::corpus::Document;
use crate::corpus::{extract_spans, CorpusError, EntityType};
use crate::model::{ModelError, Tagger};

#[derive(Debug, Error)]
pub enum MinerError {
    #[error("cannot canonicalize an empty surface string")]
    EmptySurface,
    #[error("{path} line {line}: expected `from,to`")]
    AliasLine { path: String, line: usize },
    #[error("unknown export format {0:?} (expected dot, graphml, edge-csv or rank-csv)")]
    UnknownFormat(String),
    #[error("{0} cannot encode a single graph")]
    WrongFormat(ExportFormat),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

impl MinerError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// One predicted entity occurrence in a document.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionRecord {
    pub doc_id: String,
    pub year: i32,
    #[serde(rename = "type")]
    pub kind: EntityType,
    pub surface: String,
    pub canonical: String,
    /// Sentence index within the document and character offsets within it.
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
}

/// Exact canonical-to-canonical rewrites applied after case folding.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AliasTable(BTreeMap<String, String>);

impl AliasTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Both sides are canonicalized on insertion.
    pub fn insert(&mut self, from: &str, to: &str) -> Result<(), MinerError> {
        self.0.insert(canonicalize(from, None)?, canonicalize(to, None)?);
        Ok(())
    }

    pub fn get(&self, canonical: &str) -> Option<&str> {
        self.0.get(canonical).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Reads a two-column `from,to` CSV. A leading `from,to` header, blank
    /// lines and `#` comments are skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, MinerError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| MinerError::io(path, e))?;
        let mut table = Self::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (n == 0 && line == "from,to") {
                continue;
            }
            let bad = || MinerError::AliasLine {
                path: path.display().to_string(),
                line: n + 1,
            };
            let (from, to) = line.split_once(',').ok_or_else(bad)?;
            if from.trim().is_empty() || to.trim().is_empty() {
                return Err(bad());
            }
            table.insert(from, to)?;
        }
        Ok(table)
    }
}

/// Trims, collapses internal whitespace to single spaces and lowercases,
/// then applies `aliases` once.
pub fn canonicalize(surface: &str, aliases: Option<&AliasTable>) -> Result<String, MinerError> {
    let folded = surface
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    if folded.is_empty() {
        return Err(MinerError::EmptySurface);
    }
    Ok(match aliases.and_then(|a| a.get(&folded)) {
        Some(to) => to.to_string(),
        None => folded,
    })
}

/// Tags every sentence of `doc` and returns one record per predicted span.
pub fn predict_doc(
    tagger: &Tagger,
    doc: &Document,
    aliases: Option<&AliasTable>,
) -> Result<Vec<MentionRecord>, MinerError> {
    let sentences: Vec<Vec<char>> = doc
        .sentences
        .iter()
        .map(|s| s.chars().take(tagger.config.max_len).collect())
        .collect();
    let refs: Vec<&[char]> = sentences.iter().map(Vec::as_slice).collect();
    let tags = tagger.predict(&refs)?;
    let mut out = Vec::new();
    for (si, (chars, tags)) in sentences.iter().zip(&tags).enumerate() {
        for span in extract_spans(tags)? {
            let surface: String = chars[span.start..span.end].iter().collect();
            // spans of pure whitespace carry no name
            let Ok(canonical) = canonicalize(&surface, aliases) else {
                continue;
            };
            out.push(MentionRecord {
                doc_id: doc.id.clone(),
                year: doc.year,
                kind: span.kind,
                surface,
                canonical,
                sentence: si,
                start: span.start,
                end: span.end,
            });
        }
    }
    Ok(out)
}

/// [`predict_doc`] over a corpus, parallel across documents on the current
/// rayon pool. Output order follows the input.
pub fn predict_corpus(
    tagger: &Tagger,
    docs: &[Document],
    aliases: Option<&AliasTable>,
) -> Result<Vec<MentionRecord>, MinerError> {
    let per_doc: Vec<Vec<MentionRecord>> = docs
        .par_iter()
        .map(|d| predict_doc(tagger, d, aliases))
        .collect::<Result<_, _>>()?;
    Ok(per_doc.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_forms() {
        assert_eq!(canonicalize(" SVM ", None).unwrap(), "svm");
        assert_eq!(
            canonicalize("Support  Vector Machine", None).unwrap(),
            "support vector machine"
        );
        assert!(matches!(canonicalize("  ", None), Err(MinerError::EmptySurface)));
    }

    #[test]
    fn alias_applied_after_folding() {
        let mut a = AliasTable::new();
        a.insert("support vector machine", "svm").unwrap();
        assert_eq!(canonicalize("Support Vector Machine", Some(&a)).unwrap(), "svm");
        assert_eq!(canonicalize("KNN", Some(&a)).unwrap(), "knn");
    }

    #[test]
    fn alias_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("aliases.csv");
        fs::write(&p, "from,to\nSupport Vector Machine, SVM\n\n# note\nk-NN,knn\n").unwrap();
        let a = AliasTable::load(&p).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a.get("k-nn"), Some("knn"));
        fs::write(&p, "only-one-column\n").unwrap();
        assert!(matches!(AliasTable::load(&p), Err(MinerError::AliasLine { line: 1, .. })));
    }
}
