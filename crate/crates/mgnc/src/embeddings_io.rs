//! Readers and writers for pre-trained embedding files.
//!
//! Files are streamed record by record; only vectors for words of the task
//! vocabulary are kept.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use mgnc_core::embedding::{EmbeddingBuilder, EmbeddingGroup};
use mgnc_core::vocab::Vocabulary;
use mgnc_core::{Real, Rng};

use crate::error::{Error, Result};

/// Longest token accepted in a binary file.
const MAX_TOKEN_BYTES: usize = 1 << 16;
const MAX_HEADER_BYTES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingFormat {
    Word2vec,
    Text,
}

impl EmbeddingFormat {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "word2vec" | "bin" => Some(Self::Word2vec),
            "text" | "txt" | "glove" => Some(Self::Text),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Word2vec => "word2vec",
            Self::Text => "text",
        }
    }
}

/// Where a group's vectors come from.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSource<'a> {
    pub name: &'a str,
    pub path: &'a Path,
    pub format: EmbeddingFormat,
    pub trainable: bool,
}

pub fn load_embedding<F: Real>(
    source: &EmbeddingSource<'_>,
    vocab: &Vocabulary,
    rng: &mut Rng,
) -> Result<EmbeddingGroup<F>> {
    let mut group = match source.format {
        EmbeddingFormat::Word2vec => load_word2vec_binary(source.path, source.name, vocab, rng)?,
        EmbeddingFormat::Text => load_text_vectors(source.path, source.name, vocab, rng)?,
    };
    group.set_trainable(source.trainable);
    Ok(group)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(|f| BufReader::with_capacity(1 << 20, f))
        .map_err(|e| Error::io(path, e))
}

/// Byte reader that knows its position.
struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: BufRead> Cursor<R> {
    fn byte(&mut self) -> io::Result<Option<u8>> {
        let byte = match self.inner.fill_buf()?.first() {
            Some(&b) => b,
            None => return Ok(None),
        };
        self.inner.consume(1);
        self.offset += 1;
        Ok(Some(byte))
    }

    fn peek(&mut self) -> io::Result<Option<u8>> {
        Ok(self.inner.fill_buf()?.first().copied())
    }

    /// Fills `buf` completely; returns how many bytes were available.
    fn exact(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let mut filled = 0;
        while filled < buf.len() {
            match self.inner.read(&mut buf[filled..])? {
                0 => break,
                n => filled += n,
            }
        }
        self.offset += filled as u64;
        Ok(filled)
    }
}

/// Reads the word2vec binary format: an ASCII header `"<count> <dim>\n"`,
/// then per record the token, a space, `dim` little-endian `f32` values
/// and an optional newline.
///
/// Words missing from the file get random vectors; see
/// [`EmbeddingBuilder::finish`].
pub fn load_word2vec_binary<F: Real>(
    path: &Path,
    name: &str,
    vocab: &Vocabulary,
    rng: &mut Rng,
) -> Result<EmbeddingGroup<F>> {
    let mut cur = Cursor {
        inner: open(path)?,
        offset: 0,
    };
    let io_err = |e| Error::io(path, e);
    let at = |offset: u64| format!("byte {offset}");

    let mut header = Vec::new();
    loop {
        match cur.byte().map_err(io_err)? {
            Some(b'\n') => break,
            Some(b) if header.len() < MAX_HEADER_BYTES => header.push(b),
            Some(_) => return Err(Error::format(path, at(0), "header line is too long")),
            None => return Err(Error::format(path, at(cur.offset), "missing header line")),
        }
    }
    let header = String::from_utf8_lossy(&header);
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (count, dim) = match fields[..] {
        [c, d] => match (c.parse::<u64>(), d.parse::<i64>()) {
            (Ok(c), Ok(d)) => (c, d),
            _ => return Err(Error::format(path, at(0), format!("malformed header {header:?}"))),
        },
        _ => return Err(Error::format(path, at(0), format!("malformed header {header:?}"))),
    };
    if dim <= 0 {
        return Err(Error::format(
            path,
            at(0),
            format!("dimension must be positive, got {dim}"),
        ));
    }
    let dim = dim as usize;
    let mut builder = EmbeddingBuilder::<F>::new(name, vocab, dim)?;
    let mut token = Vec::new();
    let mut raw = vec![0u8; dim * 4];
    let mut values = vec![0f32; dim];

    for record in 0..count {
        let start = cur.offset;
        let truncated = |offset| {
            Error::format(
                path,
                at(offset),
                format!("file ends inside record {} of {count}", record + 1),
            )
        };
        token.clear();
        loop {
            match cur.byte().map_err(io_err)? {
                Some(b' ') => break,
                Some(b'\n') if token.is_empty() => {}
                Some(b) if token.len() < MAX_TOKEN_BYTES => token.push(b),
                Some(_) => return Err(Error::format(path, at(start), "token is too long")),
                None => return Err(truncated(cur.offset)),
            }
        }
        let word = std::str::from_utf8(&token)
            .map_err(|_| Error::format(path, at(start), "token is not valid UTF-8"))?;
        let vector_start = cur.offset;
        if cur.exact(&mut raw).map_err(io_err)? < raw.len() {
            return Err(Error::format(
                path,
                at(vector_start),
                format!(
                    "file ends inside the vector of record {} of {count} ({word:?})",
                    record + 1
                ),
            ));
        }
        if builder.wants(word) {
            for (v, chunk) in values.iter_mut().zip(raw.chunks_exact(4)) {
                *v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            }
            builder.insert(word, &values)?;
        }
        if cur.peek().map_err(io_err)? == Some(b'\n') {
            cur.byte().map_err(io_err)?;
        }
    }
    Ok(builder.finish(true, rng)?)
}

/// Reads whitespace-separated text vectors, one `token v1 ... vd` record per
/// line. A first line holding exactly two integers is taken as a
/// `count dim` header and skipped.
pub fn load_text_vectors<F: Real>(
    path: &Path,
    name: &str,
    vocab: &Vocabulary,
    rng: &mut Rng,
) -> Result<EmbeddingGroup<F>> {
    let mut reader = open(path)?;
    let mut line = String::new();
    let mut number = 0usize;
    let mut builder: Option<EmbeddingBuilder<'_, F>> = None;
    let mut values: Vec<f32> = Vec::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(|e| Error::io(path, e))? == 0 {
            break;
        }
        number += 1;
        let at = || format!("line {number}");
        let trimmed = line.trim_end_matches(['\n', '\r']);
        let mut fields = trimmed.split([' ', '\t']).filter(|f| !f.is_empty());
        let Some(word) = fields.next() else {
            continue;
        };
        let rest: Vec<&str> = fields.collect();
        if number == 1 && rest.len() == 1 {
            if let (Ok(_), Ok(dim)) = (word.parse::<u64>(), rest[0].parse::<i64>()) {
                if dim <= 0 {
                    return Err(Error::format(
                        path,
                        at(),
                        format!("dimension must be positive, got {dim}"),
                    ));
                }
                builder = Some(EmbeddingBuilder::new(name, vocab, dim as usize)?);
                continue;
            }
        }
        if rest.is_empty() {
            return Err(Error::format(
                path,
                at(),
                format!("record for {word:?} has no values"),
            ));
        }
        if builder.is_none() {
            builder = Some(EmbeddingBuilder::new(name, vocab, rest.len())?);
        }
        let b = builder.as_mut().expect("builder was just set");
        if rest.len() != b.dim() {
            return Err(Error::format(
                path,
                at(),
                format!("expected {} values, found {}", b.dim(), rest.len()),
            ));
        }
        values.clear();
        for field in &rest {
            let v = field
                .parse::<f32>()
                .map_err(|_| Error::format(path, at(), format!("cannot parse {field:?} as a number")))?;
            values.push(v);
        }
        if b.wants(word) {
            b.insert(word, &values)?;
        }
    }
    let builder = builder.ok_or_else(|| Error::format(path, "line 1", "file holds no vectors"))?;
    Ok(builder.finish(true, rng)?)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes vectors in the word2vec binary format, optionally ending each
/// record with a newline byte.
pub fn write_word2vec_binary(path: &Path, records: &[(String, Vec<f32>)], newline: bool) -> Result<()> {
    let dim = records.first().map_or(0, |r| r.1.len());
    let mut out = create(path)?;
    let mut write = || -> io::Result<()> {
        writeln!(out, "{} {}", records.len(), dim)?;
        for (token, vector) in records {
            out.write_all(token.as_bytes())?;
            out.write_all(b" ")?;
            for v in vector {
                out.write_all(&v.to_le_bytes())?;
            }
            if newline {
                out.write_all(b"\n")?;
            }
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Writes vectors as text, with a `count dim` header line if requested.
/// Values use the shortest representation that parses back exactly.
pub fn write_text_vectors(path: &Path, records: &[(String, Vec<f32>)], header: bool) -> Result<()> {
    let mut out = create(path)?;
    let mut write = || -> io::Result<()> {
        if header {
            let dim = records.first().map_or(0, |r| r.1.len());
            writeln!(out, "{} {}", records.len(), dim)?;
        }
        for (token, vector) in records {
            out.write_all(token.as_bytes())?;
            for v in vector {
                write!(out, " {v}")?;
            }
            out.write_all(b"\n")?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}
