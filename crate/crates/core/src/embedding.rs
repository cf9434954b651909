//! Embedding tables aligned to a task vocabulary.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{ensure, usage};
use crate::math::Matrix;
use crate::vocab::{Vocabulary, PAD};
use crate::{Real, Result, Rng};

/// Half-width of the uniform range used for words missing from a
/// pre-trained file.
pub const OOV_RANGE: f64 = 0.25;

/// One embedding set: a `|V| x dim` table whose row `i` embeds token `i`.
/// Row 0 (padding) is zero and is never updated.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingGroup<F> {
    name: String,
    table: Matrix<F>,
    trainable: bool,
    oov_count: usize,
}

impl<F: Real> EmbeddingGroup<F> {
    pub fn new(
        name: impl Into<String>,
        table: Matrix<F>,
        trainable: bool,
        vocab: &Vocabulary,
    ) -> Result<Self> {
        let name = name.into();
        ensure!(table.cols() > 0, "embedding group {name:?} has zero dimensions");
        ensure!(
            table.rows() == vocab.len(),
            "embedding group {name:?} has {} rows but the vocabulary has {} entries",
            table.rows(),
            vocab.len()
        );
        ensure!(
            table.row(PAD as usize).iter().all(|v| v.is_zero()),
            "embedding group {name:?} has a non-zero padding row"
        );
        Ok(Self {
            name,
            table,
            trainable,
            oov_count: 0,
        })
    }

    pub fn with_oov_count(mut self, oov_count: usize) -> Self {
        self.oov_count = oov_count;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.table.rows()
    }

    pub fn table(&self) -> &Matrix<F> {
        &self.table
    }

    /// Mutable access to the table. Callers must keep the padding row zero.
    pub fn table_mut(&mut self) -> &mut Matrix<F> {
        &mut self.table
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        self.trainable = trainable;
    }

    /// Rows that were randomly initialised because the source lacked them.
    pub fn oov_count(&self) -> usize {
        self.oov_count
    }

    pub fn cast<G: Real>(&self) -> EmbeddingGroup<G> {
        EmbeddingGroup {
            name: self.name.clone(),
            table: self.table.cast(),
            trainable: self.trainable,
            oov_count: self.oov_count,
        }
    }
}

/// Random vector for a word absent from a pre-trained file: each component
/// uniform on `[-0.25, 0.25)`.
pub fn init_oov<F: Real>(dim: usize, rng: &mut Rng) -> Result<Vec<F>> {
    ensure!(dim > 0, "embedding dimension must be positive");
    Ok((0..dim)
        .map(|_| F::of(rng.uniform_in(-OOV_RANGE, OOV_RANGE)))
        .collect())
}

/// Incrementally fills an embedding table from a stream of `(token, vector)`
/// records, keeping only tokens of the task vocabulary.
#[derive(Debug)]
pub struct EmbeddingBuilder<'v, F> {
    name: String,
    vocab: &'v Vocabulary,
    table: Matrix<F>,
    filled: Vec<bool>,
}

impl<'v, F: Real> EmbeddingBuilder<'v, F> {
    pub fn new(name: impl Into<String>, vocab: &'v Vocabulary, dim: usize) -> Result<Self> {
        ensure!(dim > 0, "embedding dimension must be positive");
        Ok(Self {
            name: name.into(),
            vocab,
            table: Matrix::zeros(vocab.len(), dim),
            filled: vec![false; vocab.len()],
        })
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    /// Whether a record for `token` would be kept. The first record for a
    /// token wins.
    pub fn wants(&self, token: &str) -> bool {
        self.vocab.get(token).is_some_and(|id| !self.filled[id as usize])
    }

    /// Stores the vector for `token` if it belongs to the vocabulary.
    /// Returns whether the record was kept.
    pub fn insert(&mut self, token: &str, values: &[f32]) -> Result<bool> {
        ensure!(
            values.len() == self.dim(),
            "vector for {token:?} has {} components, expected {}",
            values.len(),
            self.dim()
        );
        let Some(id) = self.vocab.get(token) else {
            return Ok(false);
        };
        let id = id as usize;
        if self.filled[id] {
            return Ok(false);
        }
        for (dst, &src) in self.table.row_mut(id).iter_mut().zip(values) {
            *dst = F::of(f64::from(src));
        }
        self.filled[id] = true;
        Ok(true)
    }

    /// Initialises the remaining rows with [`init_oov`] in index order.
    pub fn finish(mut self, trainable: bool, rng: &mut Rng) -> Result<EmbeddingGroup<F>> {
        let dim = self.dim();
        let mut oov = 0;
        for id in 1..self.vocab.len() {
            if !self.filled[id] {
                let row = init_oov::<F>(dim, rng)?;
                self.table.row_mut(id).copy_from_slice(&row);
                oov += 1;
            }
        }
        Ok(EmbeddingGroup::new(self.name, self.table, trainable, self.vocab)?.with_oov_count(oov))
    }
}

/// Concatenates several groups over the same vocabulary into one group
/// whose row `v` is `[g1 row v | g2 row v | ...]`.
pub fn make_ccnn_group<F: Real>(groups: &[EmbeddingGroup<F>]) -> Result<EmbeddingGroup<F>> {
    ensure!(
        groups.len() >= 2,
        "concatenation needs at least two embedding groups, got {}",
        groups.len()
    );
    let rows = groups[0].vocab_size();
    ensure!(
        groups.iter().all(|g| g.vocab_size() == rows),
        "embedding groups are aligned to different vocabularies"
    );
    let dim: usize = groups.iter().map(EmbeddingGroup::dim).sum();
    let mut data = Vec::with_capacity(rows * dim);
    for r in 0..rows {
        for g in groups {
            data.extend_from_slice(g.table.row(r));
        }
    }
    let name = groups
        .iter()
        .map(EmbeddingGroup::name)
        .collect::<Vec<_>>()
        .join("+");
    Ok(EmbeddingGroup {
        name,
        table: Matrix::new(rows, dim, data)?,
        trainable: groups.iter().any(EmbeddingGroup::trainable),
        oov_count: groups.iter().map(EmbeddingGroup::oov_count).max().unwrap_or(0),
    })
}
