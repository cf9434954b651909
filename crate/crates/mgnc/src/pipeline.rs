//! Turns a resolved configuration into indexed splits, embedding groups
//! and an [`Experiment`].

use mgnc_core::data::{
    index_all, make_splits, select, undersample_majority, Example, IndexedExample, LabelSet, SplitStrategy,
};
use mgnc_core::embedding::EmbeddingGroup;
use mgnc_core::experiment::Experiment;
use mgnc_core::vocab::Vocabulary;
use mgnc_core::{Real, Rng};

use crate::config::Resolved;
use crate::corpus::load_tsv;
use crate::embeddings_io::{load_embedding, EmbeddingSource};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Splits {
    /// Train, dev and test; missing files are carved out of the training file.
    Holdout,
    /// Everything from the training file in `train`, for cross-validation.
    Whole,
}

#[derive(Debug, Clone)]
pub struct Prepared<F> {
    pub labels: LabelSet,
    pub vocab: Vocabulary,
    pub train: Vec<IndexedExample>,
    pub dev: Vec<IndexedExample>,
    pub test: Vec<IndexedExample>,
    pub groups: Vec<EmbeddingGroup<F>>,
    /// Human-readable notes about the data (skipped lines, OOV counts).
    pub notes: Vec<String>,
}

fn carve(examples: Vec<Example>, fractions: [f64; 3], seed: u64) -> Result<[Vec<Example>; 3]> {
    let [train, dev, test] = fractions;
    let plan = make_splits(examples.len(), SplitStrategy::Fixed { train, dev, test }, seed)?;
    let fold = &plan.folds[0];
    Ok([
        select(&examples, &fold.train),
        select(&examples, &fold.dev),
        select(&examples, &fold.test),
    ])
}

/// Raw examples of each split before indexing.
#[derive(Debug, Clone, Default)]
pub struct RawSplits {
    pub labels: LabelSet,
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
    pub notes: Vec<String>,
}

/// Loads the corpus files and carves any missing split out of the
/// training file, deterministically from the seed.
pub fn load_splits(r: &Resolved, splits: Splits) -> Result<RawSplits> {
    let data = &r.raw.data;
    let mut labels = LabelSet::new();
    let mut notes = Vec::new();
    let mut load = |path: &std::path::Path, labels: &mut LabelSet| -> Result<Vec<Example>> {
        let corpus = load_tsv(path, labels, r.tokenize)?;
        if corpus.skipped > 0 {
            notes.push(format!(
                "{}: skipped {} lines with empty text",
                path.display(),
                corpus.skipped
            ));
        }
        Ok(corpus.examples)
    };
    let train_path = data
        .train
        .as_deref()
        .ok_or_else(|| Error::Config("data.train is required".into()))?;
    let mut train = load(train_path, &mut labels)?;
    let dev = data.dev.as_deref().map(|p| load(p, &mut labels)).transpose()?;
    let test = data.test.as_deref().map(|p| load(p, &mut labels)).transpose()?;
    if train.is_empty() {
        return Err(Error::Config(format!(
            "data.train: {} holds no examples",
            train_path.display()
        )));
    }
    if data.undersample {
        train = undersample_majority(&train, &mut Rng::new(r.raw.seed))?;
    }
    let [h_train, h_dev, h_test] = data.holdout;
    let (train, dev, test) = match (splits, dev, test) {
        (Splits::Whole, dev, test) => {
            if dev.is_some() || test.is_some() {
                notes.push(
                    "cross-validation uses only the training file; dev and test files are ignored".into(),
                );
            }
            (train, Vec::new(), Vec::new())
        }
        (Splits::Holdout, Some(dev), Some(test)) => (train, dev, test),
        (Splits::Holdout, None, None) => {
            let [a, b, c] = carve(train, data.holdout, r.raw.seed)?;
            (a, b, c)
        }
        (Splits::Holdout, None, Some(test)) => {
            let s = h_train + h_dev;
            let [a, b, _] = carve(train, [h_train / s, h_dev / s, 0.0], r.raw.seed)?;
            (a, b, test)
        }
        (Splits::Holdout, Some(dev), None) => {
            let s = h_train + h_test;
            let [a, _, c] = carve(train, [h_train / s, 0.0, h_test / s], r.raw.seed)?;
            (a, dev, c)
        }
    };
    Ok(RawSplits {
        labels,
        train,
        dev,
        test,
        notes,
    })
}

pub fn prepare<F: Real>(r: &Resolved, splits: Splits) -> Result<Prepared<F>> {
    let RawSplits {
        labels,
        train,
        dev,
        test,
        mut notes,
    } = load_splits(r, splits)?;
    if labels.len() < 2 {
        return Err(Error::Config(
            "the corpus needs at least two distinct labels".into(),
        ));
    }
    let vocab = Vocabulary::build(train.iter().chain(&dev).chain(&test).map(|e| e.tokens.iter()))?;
    let mut rng = Rng::new(r.raw.seed);
    let mut groups = Vec::with_capacity(r.raw.embeddings.len());
    for e in &r.raw.embeddings {
        let source = EmbeddingSource {
            name: &e.name,
            path: &e.path,
            format: e.format,
            trainable: e.trainable,
        };
        let group = load_embedding::<F>(&source, &vocab, &mut rng)?;
        notes.push(format!(
            "embedding {}: dim {}, {} of {} words randomly initialised",
            e.name,
            group.dim(),
            group.oov_count(),
            vocab.len() - 1
        ));
        groups.push(group);
    }
    Ok(Prepared {
        train: index_all(&train, &vocab)?,
        dev: index_all(&dev, &vocab)?,
        test: index_all(&test, &vocab)?,
        labels,
        vocab,
        groups,
        notes,
    })
}

pub fn experiment<F: Real>(r: &Resolved, prepared: &Prepared<F>) -> Result<Experiment<F>> {
    let mut e = Experiment::new(
        r.variant,
        prepared.groups.clone(),
        r.train.clone(),
        prepared.labels.len(),
    )?;
    e.target = r.target;
    e.dropout = r.raw.dropout;
    e.min_train_len = r.raw.data.min_train_len;
    Ok(e)
}
