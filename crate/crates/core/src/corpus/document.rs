use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{normalize_text, CorpusError};

/// An unlabeled paper: one JSON object per line in a corpus file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub year: i32,
    pub venue: String,
    pub sentences: Vec<String>,
}

impl Document {
    pub const YEAR_RANGE: std::ops::RangeInclusive<i32> = 1900..=2100;
}

/// Reads a JSON Lines corpus. Blank lines are skipped; ids must be unique and
/// years within 1900..=2100. Sentence text is whitespace-normalized.
pub fn read_documents(path: impl AsRef<Path>) -> Result<Vec<Document>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut seen = HashSet::new();
    let mut docs = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| CorpusError::Document {
            line: n + 1,
            message,
        };
        let mut doc: Document = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        if !Document::YEAR_RANGE.contains(&doc.year) {
            return Err(err(format!("year {} outside 1900..=2100", doc.year)));
        }
        if !seen.insert(doc.id.clone()) {
            return Err(err(format!("duplicate document id {:?}", doc.id)));
        }
        for s in &mut doc.sentences {
            *s = normalize_text(s);
        }
        docs.push(doc);
    }
    Ok(docs)
}
