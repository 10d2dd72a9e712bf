//! One character per line as `<char>\t<tag>`; a blank line ends a sentence.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{CorpusError, LabeledSentence, Tag, DEFAULT_MAX_LEN};

pub fn read_conll(path: impl AsRef<Path>) -> Result<Vec<LabeledSentence>, CorpusError> {
    read_conll_with(path, DEFAULT_MAX_LEN)
}

/// Reads a labeled file, truncating sentences longer than `max_len`.
pub fn read_conll_with(
    path: impl AsRef<Path>,
    max_len: usize,
) -> Result<Vec<LabeledSentence>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut sentences = parse_conll(BufReader::new(file)).map_err(|e| match e {
        CorpusError::Io { source, .. } => CorpusError::io(path, source),
        other => other,
    })?;
    for s in &mut sentences {
        s.truncate(max_len);
    }
    Ok(sentences)
}

pub fn parse_conll(reader: impl BufRead) -> Result<Vec<LabeledSentence>, CorpusError> {
    let mut out = Vec::new();
    let mut chars = Vec::new();
    let mut tags: Vec<Tag> = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| CorpusError::Io {
            path: String::new(),
            source: e,
        })?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            if !chars.is_empty() {
                out.push(LabeledSentence::new(
                    std::mem::take(&mut chars),
                    std::mem::take(&mut tags),
                )?);
            }
            continue;
        }
        let mut it = line.chars();
        let c = it.next().expect("non-empty line");
        let rest = it.as_str();
        let Some(tag_str) = rest.strip_prefix('\t') else {
            return Err(CorpusError::MalformedLine {
                line: lineno,
                text: line.to_string(),
            });
        };
        let tag: Tag = tag_str.parse().map_err(|tag| CorpusError::UnknownTag {
            line: lineno,
            tag,
        })?;
        if !tag.can_follow(tags.last().copied()) {
            return Err(CorpusError::BioViolation { line: lineno, tag });
        }
        chars.push(if c == '\t' { ' ' } else { c });
        tags.push(tag);
    }
    if !chars.is_empty() {
        out.push(LabeledSentence::new(chars, tags)?);
    }
    Ok(out)
}

pub fn write_conll(sentences: &[LabeledSentence], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_conll_to(sentences, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CorpusError::io(path, e))
}

pub fn write_conll_to(sentences: &[LabeledSentence], w: &mut impl Write) -> std::io::Result<()> {
    for s in sentences {
        for (c, t) in s.chars().iter().zip(s.tags()) {
            writeln!(w, "{c}\t{t}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
