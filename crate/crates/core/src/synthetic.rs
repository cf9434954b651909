//! Small generated corpora with known structure, used as learnability
//! checks in place of the real benchmark corpora.
//!
//! Every sentence mixes filler tokens with one or two indicator tokens of
//! its class. Class 0 uses indicators `k0_*`, class 1 uses `k1_*`; indicator
//! `k0_i` and `k1_i` are twins. Lengths, positions and fillers are drawn the
//! same way for both classes, so only indicator identity carries the label.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{Example, LabelSet};
use crate::embedding::{EmbeddingBuilder, EmbeddingGroup};
use crate::error::{ensure, usage};
use crate::vocab::Vocabulary;
use crate::{Real, Result, Rng};

pub const INDICATORS_PER_CLASS: usize = 10;
pub const FILLERS: usize = 40;
pub const MIN_LEN: usize = 6;
pub const MAX_LEN: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticTask {
    /// Every group embeds every token with an independent random vector;
    /// indicator vectors are ten times wider than filler vectors.
    Separable,
    /// Group 0 places the two classes' indicators on opposite sides of a
    /// random direction; every other group gives twin indicators the same
    /// random vector and is frozen, so it carries no label information.
    GroupInformative,
}

impl SyntheticTask {
    pub fn name(self) -> &'static str {
        match self {
            SyntheticTask::Separable => "separable",
            SyntheticTask::GroupInformative => "group_informative",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    /// One embedding group per entry, with that dimensionality.
    pub dims: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEmbedding {
    pub name: String,
    pub trainable: bool,
    pub dim: usize,
    /// Vectors in token order (indicators, then fillers).
    pub vectors: Vec<(String, Vec<f32>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
    pub labels: LabelSet,
    pub embeddings: Vec<SyntheticEmbedding>,
}

impl SyntheticData {
    /// Vocabulary over train, dev and test in that order.
    pub fn vocabulary(&self) -> Result<Vocabulary> {
        Vocabulary::build(
            self.train
                .iter()
                .chain(&self.dev)
                .chain(&self.test)
                .map(|e| e.tokens.iter()),
        )
    }

    /// Embedding groups aligned to `vocab`.
    pub fn groups<F: Real>(&self, vocab: &Vocabulary) -> Result<Vec<EmbeddingGroup<F>>> {
        // Every vocabulary token has a vector, so no OOV draws happen.
        let mut unused = Rng::new(0);
        self.embeddings
            .iter()
            .map(|emb| {
                let mut builder = EmbeddingBuilder::new(emb.name.clone(), vocab, emb.dim)?;
                for (token, v) in &emb.vectors {
                    builder.insert(token, v)?;
                }
                builder.finish(emb.trainable, &mut unused)
            })
            .collect()
    }
}

/// Indicator token `i` of class `class`.
pub fn indicator(class: usize, i: usize) -> String {
    format!("k{class}_{i}")
}

pub fn filler(i: usize) -> String {
    format!("f{i}")
}

/// Class implied by a token, if it is an indicator.
pub fn indicator_class(token: &str) -> Option<usize> {
    match token.split_once('_') {
        Some(("k0", _)) => Some(0),
        Some(("k1", _)) => Some(1),
        _ => None,
    }
}

fn sentence(rng: &mut Rng) -> Example {
    let label = rng.below(2);
    let len = MIN_LEN + rng.below(MAX_LEN - MIN_LEN + 1);
    let mut tokens: Vec<String> = (0..len).map(|_| filler(rng.below(FILLERS))).collect();
    let cues = 1 + rng.below(2);
    for _ in 0..cues {
        let pos = rng.below(len);
        tokens[pos] = indicator(label, rng.below(INDICATORS_PER_CLASS));
    }
    Example { tokens, label }
}

fn uniform_vec(dim: usize, half_width: f64, rng: &mut Rng) -> Vec<f32> {
    (0..dim)
        .map(|_| rng.uniform_in(-half_width, half_width) as f32)
        .collect()
}

fn all_tokens() -> Vec<String> {
    let mut tokens = Vec::new();
    for class in 0..2 {
        tokens.extend((0..INDICATORS_PER_CLASS).map(|i| indicator(class, i)));
    }
    tokens.extend((0..FILLERS).map(filler));
    tokens
}

fn embeddings(task: SyntheticTask, dims: &[usize], rng: &mut Rng) -> Vec<SyntheticEmbedding> {
    let tokens = all_tokens();
    dims.iter()
        .enumerate()
        .map(|(l, &dim)| match (task, l) {
            (SyntheticTask::Separable, _) => SyntheticEmbedding {
                name: format!("rand{l}"),
                trainable: true,
                dim,
                vectors: tokens
                    .iter()
                    .map(|t| {
                        let width = if indicator_class(t).is_some() { 1.0 } else { 0.1 };
                        (t.clone(), uniform_vec(dim, width, rng))
                    })
                    .collect(),
            },
            (SyntheticTask::GroupInformative, 0) => {
                let direction = uniform_vec(dim, 1.0, rng);
                let vectors = tokens
                    .iter()
                    .map(|t| {
                        let noise = uniform_vec(dim, 0.05, rng);
                        let v = match indicator_class(t) {
                            Some(class) => {
                                let sign = if class == 0 { 1.0 } else { -1.0 };
                                direction.iter().zip(&noise).map(|(d, n)| sign * d + n).collect()
                            }
                            None => uniform_vec(dim, 0.1, rng),
                        };
                        (t.clone(), v)
                    })
                    .collect();
                SyntheticEmbedding {
                    name: "informative".into(),
                    trainable: true,
                    dim,
                    vectors,
                }
            }
            (SyntheticTask::GroupInformative, _) => {
                let twins: Vec<Vec<f32>> = (0..INDICATORS_PER_CLASS)
                    .map(|_| uniform_vec(dim, 1.0, rng))
                    .collect();
                let vectors = tokens
                    .iter()
                    .map(|t| {
                        let v = match indicator_class(t) {
                            Some(_) => {
                                let i: usize = t.rsplit('_').next().and_then(|s| s.parse().ok()).unwrap_or(0);
                                twins[i].clone()
                            }
                            None => uniform_vec(dim, 1.0, rng),
                        };
                        (t.clone(), v)
                    })
                    .collect();
                SyntheticEmbedding {
                    name: format!("noise{l}"),
                    trainable: false,
                    dim,
                    vectors,
                }
            }
        })
        .collect()
}

pub fn make_synthetic(task: SyntheticTask, sizes: &SyntheticSizes, rng: &mut Rng) -> Result<SyntheticData> {
    ensure!(
        sizes.train > 0 && sizes.dev > 0 && sizes.test > 0,
        "synthetic split sizes must be positive"
    );
    ensure!(!sizes.dims.is_empty(), "at least one embedding group is required");
    ensure!(
        sizes.dims.iter().all(|&d| d > 0),
        "embedding dimensions must be positive"
    );
    let embeddings = embeddings(task, &sizes.dims, rng);
    let mut draw = |n: usize| (0..n).map(|_| sentence(rng)).collect::<Vec<_>>();
    let train = draw(sizes.train);
    let dev = draw(sizes.dev);
    let test = draw(sizes.test);
    Ok(SyntheticData {
        train,
        dev,
        test,
        labels: LabelSet::from_names(&["class0", "class1"]),
        embeddings,
    })
}
