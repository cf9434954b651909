//! Labelled sentences, preprocessing rules, splits and mini-batches.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{ensure, usage};
use crate::vocab::{Vocabulary, PAD};
use crate::{Result, Rng};

/// A tokenized sentence with its class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub tokens: Vec<String>,
    pub label: usize,
}

/// A sentence mapped through a [`Vocabulary`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedExample {
    pub ids: Vec<u32>,
    pub label: usize,
}

/// Common view over sentences for the preprocessing rules.
pub trait Labeled {
    fn label(&self) -> usize;
    /// Sentence length before padding.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Labeled for Example {
    fn label(&self) -> usize {
        self.label
    }
    fn len(&self) -> usize {
        self.tokens.len()
    }
}

impl Labeled for IndexedExample {
    fn label(&self) -> usize {
        self.label
    }
    fn len(&self) -> usize {
        self.ids.len()
    }
}

impl Example {
    pub fn new<T: ToString>(tokens: &[T], label: usize) -> Self {
        Self {
            tokens: tokens.iter().map(ToString::to_string).collect(),
            label,
        }
    }

    pub fn index(&self, vocab: &Vocabulary) -> Result<IndexedExample> {
        Ok(IndexedExample {
            ids: vocab.encode(&self.tokens)?,
            label: self.label,
        })
    }
}

/// Maps every example through `vocab`.
pub fn index_all(examples: &[Example], vocab: &Vocabulary) -> Result<Vec<IndexedExample>> {
    examples.iter().map(|e| e.index(vocab)).collect()
}

/// Class names in index order, assigned on first occurrence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelSet {
    names: Vec<String>,
}

impl LabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<T: ToString>(names: &[T]) -> Self {
        Self {
            names: names.iter().map(ToString::to_string).collect(),
        }
    }

    /// Index of `name`, registering it if unseen.
    pub fn intern(&mut self, name: &str) -> usize {
        match self.get(name) {
            Some(i) => i,
            None => {
                self.names.push(name.to_string());
                self.names.len() - 1
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TokenizeMode {
    /// Split on runs of whitespace.
    #[default]
    Whitespace,
    /// Lowercase and split off `, . ! ? ' " ( )` as separate tokens.
    Cleaned,
}

const SEPARATED: [char; 8] = [',', '.', '!', '?', '\'', '"', '(', ')'];

pub fn tokenize(text: &str, mode: TokenizeMode) -> Vec<String> {
    match mode {
        TokenizeMode::Whitespace => text.split_whitespace().map(ToString::to_string).collect(),
        TokenizeMode::Cleaned => {
            let mut spaced = String::with_capacity(text.len() * 2);
            for ch in text.chars() {
                if SEPARATED.contains(&ch) {
                    spaced.push(' ');
                    spaced.push(ch);
                    spaced.push(' ');
                } else {
                    spaced.extend(ch.to_lowercase());
                }
            }
            spaced.split_whitespace().map(ToString::to_string).collect()
        }
    }
}

/// Drops sentences shorter than `min_len`. Meant for training portions only.
pub fn filter_short<T: Labeled + Clone>(examples: &[T], min_len: usize) -> Result<Vec<T>> {
    ensure!(min_len >= 1, "minimum sentence length must be at least 1");
    Ok(examples.iter().filter(|e| e.len() >= min_len).cloned().collect())
}

/// Randomly subsamples the majority class of a binary dataset down to the
/// minority size, then shuffles the result.
pub fn undersample_majority<T: Labeled + Clone>(examples: &[T], rng: &mut Rng) -> Result<Vec<T>> {
    let mut classes: Vec<(usize, Vec<usize>)> = Vec::new();
    for (i, e) in examples.iter().enumerate() {
        match classes.iter_mut().find(|(label, _)| *label == e.label()) {
            Some((_, members)) => members.push(i),
            None => classes.push((e.label(), vec![i])),
        }
    }
    ensure!(
        classes.len() <= 2,
        "undersampling needs binary labels, found {} classes",
        classes.len()
    );
    ensure!(classes.len() == 2, "undersampling needs both classes present");
    classes.sort_by_key(|(label, _)| *label);
    let minority = classes[0].1.len().min(classes[1].1.len());
    let mut keep = Vec::with_capacity(2 * minority);
    for (_, members) in &mut classes {
        if members.len() > minority {
            rng.shuffle(members);
            members.truncate(minority);
            members.sort_unstable();
        }
        keep.extend_from_slice(members);
    }
    keep.sort_unstable();
    rng.shuffle(&mut keep);
    Ok(keep.into_iter().map(|i| examples[i].clone()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitStrategy {
    /// One train/dev/test partition by fractions summing to one.
    Fixed { train: f64, dev: f64, test: f64 },
    /// `k` folds; each fold's training portion loses `dev_fraction` of its
    /// items to a nested development set.
    KFold { k: usize, dev_fraction: f64 },
}

impl SplitStrategy {
    pub const fn kfold(k: usize) -> Self {
        Self::KFold { k, dev_fraction: 0.1 }
    }
}

/// Index lists of one train/dev/test partition.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Fold {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

impl Fold {
    /// Training portion including its nested dev set.
    pub fn full_train(&self) -> Vec<usize> {
        let mut all = [self.train.as_slice(), self.dev.as_slice()].concat();
        all.sort_unstable();
        all
    }
}

/// Disjoint partitions of `0..n`; one fold for a fixed split, `k` for
/// cross-validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub folds: Vec<Fold>,
}

pub fn make_splits(n: usize, strategy: SplitStrategy, seed: u64) -> Result<SplitPlan> {
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut order);
    let sorted = |mut v: Vec<usize>| {
        v.sort_unstable();
        v
    };
    match strategy {
        SplitStrategy::Fixed { train, dev, test } => {
            ensure!(
                train >= 0.0 && dev >= 0.0 && test >= 0.0 && ((train + dev + test) - 1.0).abs() < 1e-9,
                "split fractions must be non-negative and sum to 1"
            );
            ensure!(n > 0, "cannot split an empty dataset");
            let n_test = round_count(n as f64 * test).min(n);
            let n_dev = round_count(n as f64 * dev).min(n - n_test);
            ensure!(n_test + n_dev < n, "split leaves no training examples");
            Ok(SplitPlan {
                folds: vec![Fold {
                    test: sorted(order[..n_test].to_vec()),
                    dev: sorted(order[n_test..n_test + n_dev].to_vec()),
                    train: sorted(order[n_test + n_dev..].to_vec()),
                }],
            })
        }
        SplitStrategy::KFold { k, dev_fraction } => {
            ensure!(k >= 2, "k-fold cross-validation needs k >= 2");
            ensure!(n >= k, "cannot make {k} folds from {n} examples");
            ensure!(
                (0.0..1.0).contains(&dev_fraction),
                "dev fraction must be in [0, 1)"
            );
            let mut folds = Vec::with_capacity(k);
            let mut start = 0;
            for f in 0..k {
                let size = n / k + usize::from(f < n % k);
                let test = order[start..start + size].to_vec();
                let rest: Vec<usize> = order[..start]
                    .iter()
                    .chain(&order[start + size..])
                    .copied()
                    .collect();
                let n_dev = round_count(rest.len() as f64 * dev_fraction).min(rest.len() - 1);
                folds.push(Fold {
                    test: sorted(test),
                    dev: sorted(rest[..n_dev].to_vec()),
                    train: sorted(rest[n_dev..].to_vec()),
                });
                start += size;
            }
            Ok(SplitPlan { folds })
        }
    }
}

fn round_count(x: f64) -> usize {
    num_traits::Float::round(x) as usize
}

/// Picks the examples at `indices`.
pub fn select<T: Clone>(items: &[T], indices: &[usize]) -> Vec<T> {
    indices.iter().map(|&i| items[i].clone()).collect()
}

/// Zero-padded index matrix for a group of sentences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    ids: Vec<u32>,
    seq_len: usize,
    lengths: Vec<usize>,
    labels: Vec<usize>,
}

impl Batch {
    /// Pads every sentence to `max(longest sentence, min_len)`.
    pub fn new(examples: &[&IndexedExample], min_len: usize) -> Self {
        let seq_len = examples
            .iter()
            .map(|e| e.ids.len())
            .max()
            .unwrap_or(0)
            .max(min_len);
        let mut ids = vec![PAD; examples.len() * seq_len];
        for (row, e) in ids.chunks_mut(seq_len.max(1)).zip(examples) {
            row[..e.ids.len()].copy_from_slice(&e.ids);
        }
        Self {
            ids,
            seq_len,
            lengths: examples.iter().map(|e| e.ids.len()).collect(),
            labels: examples.iter().map(|e| e.label).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.ids[i * self.seq_len..(i + 1) * self.seq_len]
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// Iterator over shuffled mini-batches of one epoch.
#[derive(Debug)]
pub struct Batches<'a> {
    examples: &'a [IndexedExample],
    order: Vec<usize>,
    batch_size: usize,
    min_len: usize,
    pos: usize,
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let members: Vec<&IndexedExample> = self.order[self.pos..end]
            .iter()
            .map(|&i| &self.examples[i])
            .collect();
        self.pos = end;
        Some(Batch::new(&members, self.min_len))
    }
}

/// Shuffles `examples` with `rng` and yields batches of `batch_size`
/// (the last one may be smaller), each padded to at least `h_max`.
pub fn batch_iter<'a>(
    examples: &'a [IndexedExample],
    batch_size: usize,
    h_max: usize,
    rng: &mut Rng,
) -> Result<Batches<'a>> {
    ensure!(batch_size >= 1, "batch size must be at least 1");
    let mut order: Vec<usize> = (0..examples.len()).collect();
    rng.shuffle(&mut order);
    Ok(Batches {
        examples,
        order,
        batch_size,
        min_len: h_max,
        pos: 0,
    })
}
