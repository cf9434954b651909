//! Labelled sentence files: one `label<TAB>text` record per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use mgnc_core::data::{tokenize, Example, LabelSet, TokenizeMode};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub examples: Vec<Example>,
    /// Lines whose text had no tokens.
    pub skipped: usize,
}

/// Reads a TSV corpus. Labels are interned into `labels` in order of first
/// appearance, so several files can share one label set.
pub fn load_tsv(path: &Path, labels: &mut LabelSet, mode: TokenizeMode) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut corpus = Corpus::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let number = i + 1;
        let line = line.map_err(|e| match e.kind() {
            std::io::ErrorKind::InvalidData => {
                Error::format(path, format!("line {number}"), "not valid UTF-8")
            }
            _ => Error::io(path, e),
        })?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let (label, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(path, format!("line {number}"), "expected label<TAB>text"))?;
        let label = label.trim();
        if label.is_empty() {
            return Err(Error::format(path, format!("line {number}"), "empty label"));
        }
        let tokens = tokenize(text, mode);
        if tokens.is_empty() {
            corpus.skipped += 1;
            continue;
        }
        corpus.examples.push(Example {
            tokens,
            label: labels.intern(label),
        });
    }
    Ok(corpus)
}

/// Writes examples as TSV, joining tokens with single spaces.
pub fn write_tsv(path: &Path, examples: &[Example], labels: &LabelSet) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        for e in examples {
            let label = labels.name(e.label).unwrap_or("?");
            writeln!(out, "{label}\t{}", e.tokens.join(" "))?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}
