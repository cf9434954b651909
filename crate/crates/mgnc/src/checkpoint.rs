//! Versioned binary model checkpoints.
//!
//! Layout: the 8-byte magic `MGNCCKPT`, a little-endian `u32` format
//! version, a little-endian `u64` header length, the JSON header, every
//! tensor as little-endian `f64` values in header order, and finally the
//! SHA-256 digest of all preceding bytes. Both precisions store `f64`, so
//! a write/read round trip is bit-exact.

use std::path::Path;

use mgnc_core::data::{LabelSet, TokenizeMode};
use mgnc_core::embedding::EmbeddingGroup;
use mgnc_core::math::Matrix;
use mgnc_core::model::{Activation, Classifier, FilterBank, HeightFilters, ModelConfig, ModelParams};
use mgnc_core::vocab::Vocabulary;
use mgnc_core::Real;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::output::write_atomic;

const MAGIC: &[u8; 8] = b"MGNCCKPT";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

/// A trained model with everything needed to apply it to new text.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<F> {
    pub params: ModelParams<F>,
    pub vocab: Vocabulary,
    pub labels: LabelSet,
    pub tokenize: TokenizeMode,
}

/// A checkpoint in the precision it was saved with.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyCheckpoint {
    F32(Checkpoint<f32>),
    F64(Checkpoint<f64>),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    precision: String,
    heights: Vec<usize>,
    maps: usize,
    activation: String,
    dropout: f64,
    classes: usize,
    tokenize: String,
    labels: Vec<String>,
    vocabulary: Vec<String>,
    groups: Vec<GroupHeader>,
    tensors: Vec<TensorHeader>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupHeader {
    name: String,
    dim: usize,
    trainable: bool,
    oov_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct TensorHeader {
    name: String,
    rows: usize,
    cols: usize,
}

pub fn tokenize_name(mode: TokenizeMode) -> &'static str {
    match mode {
        TokenizeMode::Whitespace => "whitespace",
        TokenizeMode::Cleaned => "cleaned",
    }
}

pub fn parse_tokenize(name: &str) -> Option<TokenizeMode> {
    match name {
        "whitespace" => Some(TokenizeMode::Whitespace),
        "cleaned" => Some(TokenizeMode::Cleaned),
        _ => None,
    }
}

/// Tensors in storage order with their names and shapes.
fn tensors<F: Real>(params: &ModelParams<F>) -> Vec<(TensorHeader, Vec<f64>)> {
    let mut out = Vec::new();
    let mut push = |name: String, rows: usize, cols: usize, data: &[F]| {
        out.push((
            TensorHeader { name, rows, cols },
            data.iter().map(|v| v.as_f64()).collect(),
        ));
    };
    for (l, g) in params.groups().iter().enumerate() {
        let t = g.table();
        push(format!("embedding/{l}"), t.rows(), t.cols(), t.data());
    }
    for (l, bank) in params.banks().iter().enumerate() {
        for hf in &bank.heights {
            let w = &hf.weights;
            push(
                format!("filters/{l}/{}/weights", hf.height),
                w.rows(),
                w.cols(),
                w.data(),
            );
            push(
                format!("filters/{l}/{}/biases", hf.height),
                1,
                hf.biases.len(),
                &hf.biases,
            );
        }
    }
    let c = params.classifier();
    push(
        "classifier/weights".into(),
        c.weights.rows(),
        c.weights.cols(),
        c.weights.data(),
    );
    push("classifier/biases".into(), 1, c.bias.len(), &c.bias);
    out
}

pub fn encode<F: Real>(checkpoint: &Checkpoint<F>) -> Result<Vec<u8>> {
    let params = &checkpoint.params;
    let config = params.config();
    let tensors = tensors(params);
    let header = Header {
        precision: F::NAME.into(),
        heights: config.heights.clone(),
        maps: config.maps,
        activation: config.activation.name().into(),
        dropout: config.dropout,
        classes: config.classes,
        tokenize: tokenize_name(checkpoint.tokenize).into(),
        labels: checkpoint.labels.names().to_vec(),
        vocabulary: checkpoint.vocab.tokens().map(String::from).collect(),
        groups: params
            .groups()
            .iter()
            .map(|g| GroupHeader {
                name: g.name().into(),
                dim: g.dim(),
                trainable: g.trainable(),
                oov_count: g.oov_count(),
            })
            .collect(),
        tensors: tensors.iter().map(|(h, _)| h.clone()).collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Config(e.to_string()))?;
    let mut bytes = Vec::with_capacity(json.len() + 64);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for (_, data) in &tensors {
        for v in data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&bytes);
    bytes.extend_from_slice(&digest);
    Ok(bytes)
}

pub fn write_checkpoint<F: Real>(path: &Path, checkpoint: &Checkpoint<F>) -> Result<()> {
    write_atomic(path, &encode(checkpoint)?)
}

pub fn read_checkpoint(path: &Path) -> Result<AnyCheckpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(path, &bytes)
}

/// Parses checkpoint bytes; `path` only labels errors.
pub fn decode(path: &Path, bytes: &[u8]) -> Result<AnyCheckpoint> {
    let bad = |offset: usize, message: &str| Error::format(path, format!("byte {offset}"), message);
    if bytes.len() < MAGIC.len() + 12 + DIGEST_LEN || &bytes[..8] != MAGIC {
        return Err(bad(0, "not a model checkpoint"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(bad(
            body.len(),
            "checksum mismatch, the file is corrupt or truncated",
        ));
    }
    let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(bad(8, &format!("unsupported format version {version}")));
    }
    let header_len = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
    let header_end = 20usize
        .checked_add(header_len)
        .filter(|&end| end <= body.len())
        .ok_or_else(|| bad(12, "header length exceeds the file"))?;
    let header: Header = serde_json::from_slice(&body[20..header_end])
        .map_err(|e| bad(20, &format!("malformed header: {e}")))?;
    let mut payload = &body[header_end..];
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for t in &header.tensors {
        let n = t.rows * t.cols;
        if payload.len() < n * 8 {
            return Err(bad(
                body.len() - payload.len(),
                &format!("tensor {} is truncated", t.name),
            ));
        }
        let (data, rest) = payload.split_at(n * 8);
        tensors.push(
            data.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect::<Vec<f64>>(),
        );
        payload = rest;
    }
    if !payload.is_empty() {
        return Err(bad(
            body.len() - payload.len(),
            "trailing bytes after the last tensor",
        ));
    }
    let invalid = |message: String| Error::format(path, "header", message);
    match header.precision.as_str() {
        "32" => Ok(AnyCheckpoint::F32(assemble(&header, tensors).map_err(invalid)?)),
        "64" => Ok(AnyCheckpoint::F64(assemble(&header, tensors).map_err(invalid)?)),
        other => Err(invalid(format!("unknown precision {other:?}"))),
    }
}

fn assemble<F: Real>(header: &Header, tensors: Vec<Vec<f64>>) -> std::result::Result<Checkpoint<F>, String> {
    let config = ModelConfig {
        heights: header.heights.clone(),
        maps: header.maps,
        activation: Activation::parse(&header.activation)
            .ok_or_else(|| format!("unknown activation {:?}", header.activation))?,
        dropout: header.dropout,
        classes: header.classes,
    };
    let vocab = Vocabulary::from_tokens(&header.vocabulary).map_err(|e| e.to_string())?;
    let labels = LabelSet::from_names(&header.labels);
    let tokenize =
        parse_tokenize(&header.tokenize).ok_or_else(|| format!("unknown tokenizer {:?}", header.tokenize))?;
    let m = header.groups.len();
    let expected = m + m * 2 * config.heights.len() + 2;
    if tensors.len() != expected {
        return Err(format!("expected {expected} tensors, found {}", tensors.len()));
    }
    let mut shapes = header.tensors.iter();
    let mut data = tensors.into_iter();
    let mut next = || -> std::result::Result<Matrix<F>, String> {
        let shape = shapes.next().expect("count checked");
        let values = data.next().expect("count checked");
        Matrix::new(shape.rows, shape.cols, values.into_iter().map(F::of).collect())
            .map_err(|e| format!("tensor {}: {e}", shape.name))
    };
    let mut groups = Vec::with_capacity(m);
    for g in &header.groups {
        let table = next()?;
        let group = EmbeddingGroup::new(g.name.clone(), table, g.trainable, &vocab)
            .map_err(|e| e.to_string())?
            .with_oov_count(g.oov_count);
        groups.push(group);
    }
    let mut banks = Vec::with_capacity(m);
    for g in &header.groups {
        let mut heights = Vec::with_capacity(config.heights.len());
        for &h in &config.heights {
            let weights = next()?;
            let biases = next()?.into_data();
            heights.push(HeightFilters {
                height: h,
                weights,
                biases,
            });
        }
        banks.push(FilterBank {
            group: g.name.clone(),
            dim: g.dim,
            heights,
        });
    }
    let weights = next()?;
    let bias = next()?.into_data();
    let mut offset = 0;
    let boundaries = banks
        .iter()
        .map(|b| {
            let range = offset..offset + b.features();
            offset = range.end;
            range
        })
        .collect();
    let classifier = Classifier {
        weights,
        bias,
        boundaries,
    };
    let params = ModelParams::from_parts(config, groups, banks, classifier).map_err(|e| e.to_string())?;
    Ok(Checkpoint {
        params,
        vocab,
        labels,
        tokenize,
    })
}
