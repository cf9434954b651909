//! Convolutional sentence classifier over one or more embedding groups.
//!
//! Each group owns a [`FilterBank`]: for every configured height `h` there
//! are `maps` filters of shape `h x d_l`, slid over the group's sentence
//! matrix, passed through the activation and 1-max pooled. The pooled
//! values of all groups are concatenated (group by group, height by height)
//! into the feature vector fed to a softmax [`Classifier`].
//!
//! A single group gives the basic CNN; a single concatenated group built by
//! [`make_ccnn_group`](crate::embedding::make_ccnn_group) gives C-CNN; two or
//! more groups give MG-CNN and MGNC-CNN, which differ only in how the
//! classifier is regularised.

mod layers;
mod pass;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

pub use layers::{activate, convolve, max_pool_1, Activation};
pub use pass::{sample_dropout_mask, ForwardTrace, Gradients, GroupTrace, Mode};

use crate::embedding::EmbeddingGroup;
use crate::error::{ensure, usage};
use crate::math::Matrix;
use crate::{Real, Result, Rng};

/// Half-width of the uniform filter initialisation range.
pub const FILTER_INIT_RANGE: f64 = 0.01;

/// Architecture hyper-parameters shared by all groups.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub heights: Vec<usize>,
    pub maps: usize,
    pub activation: Activation,
    /// Probability of dropping a pooled feature during training. Test-time
    /// logits use classifier weights scaled by `1 - dropout`.
    pub dropout: f64,
    pub classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            heights: vec![3, 4, 5],
            maps: 100,
            activation: Activation::Relu,
            dropout: 0.5,
            classes: 2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.heights.is_empty(), "at least one filter height is required");
        ensure!(
            self.heights.iter().all(|&h| h >= 1),
            "filter heights must be positive"
        );
        ensure!(self.maps >= 1, "feature maps per height must be positive");
        ensure!(self.classes >= 2, "at least two classes are required");
        ensure!(
            (0.0..1.0).contains(&self.dropout),
            "dropout must be in [0, 1), got {}",
            self.dropout
        );
        Ok(())
    }

    pub fn max_height(&self) -> usize {
        self.heights.iter().copied().max().unwrap_or(1)
    }

    /// Pooled features contributed by one group.
    pub fn features_per_group(&self) -> usize {
        self.heights.len() * self.maps
    }
}

/// Filters of one height: row `i` of `weights` is filter `i` flattened
/// row-major from `height x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightFilters<F> {
    pub height: usize,
    pub weights: Matrix<F>,
    pub biases: Vec<F>,
}

impl<F: Real> HeightFilters<F> {
    pub fn maps(&self) -> usize {
        self.weights.rows()
    }

    /// Filter `i` as an `height x dim` matrix.
    pub fn filter(&self, i: usize) -> Matrix<F> {
        let dim = self.weights.cols() / self.height;
        Matrix::new(self.height, dim, self.weights.row(i).to_vec()).expect("filter shape")
    }
}

/// All filters applied to one embedding group.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank<F> {
    pub group: String,
    pub dim: usize,
    pub heights: Vec<HeightFilters<F>>,
}

impl<F: Real> FilterBank<F> {
    fn init(group: &EmbeddingGroup<F>, config: &ModelConfig, rng: &mut Rng) -> Self {
        let dim = group.dim();
        let heights = config
            .heights
            .iter()
            .map(|&h| HeightFilters {
                height: h,
                weights: Matrix::from_fn(config.maps, h * dim, |_, _| {
                    F::of(rng.uniform_in(-FILTER_INIT_RANGE, FILTER_INIT_RANGE))
                }),
                biases: vec![F::zero(); config.maps],
            })
            .collect();
        Self {
            group: group.name().into(),
            dim,
            heights,
        }
    }

    pub fn features(&self) -> usize {
        self.heights.iter().map(HeightFilters::maps).sum()
    }
}

/// Softmax layer over the concatenated feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier<F> {
    /// `classes x k` weights.
    pub weights: Matrix<F>,
    pub bias: Vec<F>,
    /// Column ranges owned by each group, contiguous and covering `0..k`.
    pub boundaries: Vec<Range<usize>>,
}

impl<F: Real> Classifier<F> {
    pub fn features(&self) -> usize {
        self.weights.cols()
    }
}

/// Every trainable tensor of a model plus its frozen embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    config: ModelConfig,
    groups: Vec<EmbeddingGroup<F>>,
    banks: Vec<FilterBank<F>>,
    classifier: Classifier<F>,
}

/// Identifies one parameter tensor in [`ModelParams::tensors_mut`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TensorId {
    Embedding { group: usize },
    FilterWeights { group: usize, height: usize },
    FilterBias { group: usize, height: usize },
    ClassifierWeights,
    ClassifierBias,
}

impl TensorId {
    /// Coarse class used when reporting gradient checks.
    pub fn class(self) -> &'static str {
        match self {
            TensorId::Embedding { .. } => "embeddings",
            TensorId::FilterWeights { .. } => "filter_weights",
            TensorId::FilterBias { .. } => "filter_biases",
            TensorId::ClassifierWeights => "classifier_weights",
            TensorId::ClassifierBias => "classifier_bias",
        }
    }
}

impl<F: Real> ModelParams<F> {
    /// Fresh parameters: filters uniform in `[-0.01, 0.01)`, filter biases
    /// and the whole classifier zero.
    pub fn init(groups: Vec<EmbeddingGroup<F>>, config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        ensure!(!groups.is_empty(), "at least one embedding group is required");
        let vocab = groups[0].vocab_size();
        ensure!(
            groups.iter().all(|g| g.vocab_size() == vocab),
            "embedding groups are aligned to different vocabularies"
        );
        let banks: Vec<FilterBank<F>> = groups.iter().map(|g| FilterBank::init(g, &config, rng)).collect();
        let per_group = config.features_per_group();
        let k = per_group * groups.len();
        let classifier = Classifier {
            weights: Matrix::zeros(config.classes, k),
            bias: vec![F::zero(); config.classes],
            boundaries: (0..groups.len())
                .map(|l| l * per_group..(l + 1) * per_group)
                .collect(),
        };
        Ok(Self {
            config,
            groups,
            banks,
            classifier,
        })
    }

    /// Reassembles parameters, checking that every shape agrees.
    pub fn from_parts(
        config: ModelConfig,
        groups: Vec<EmbeddingGroup<F>>,
        banks: Vec<FilterBank<F>>,
        classifier: Classifier<F>,
    ) -> Result<Self> {
        config.validate()?;
        ensure!(!groups.is_empty(), "at least one embedding group is required");
        ensure!(
            banks.len() == groups.len(),
            "one filter bank per group is required"
        );
        let mut offset = 0;
        for (l, (g, bank)) in groups.iter().zip(&banks).enumerate() {
            ensure!(
                bank.dim == g.dim(),
                "filter bank {l} width does not match its group"
            );
            ensure!(
                bank.heights.len() == config.heights.len(),
                "filter bank {l} has the wrong number of heights"
            );
            for (hf, &h) in bank.heights.iter().zip(&config.heights) {
                ensure!(
                    hf.height == h
                        && hf.weights.rows() == config.maps
                        && hf.weights.cols() == h * g.dim()
                        && hf.biases.len() == config.maps,
                    "filter bank {l} height {h} has inconsistent shapes"
                );
            }
            ensure!(
                classifier.boundaries.get(l) == Some(&(offset..offset + bank.features())),
                "classifier boundary {l} does not match its filter bank"
            );
            offset += bank.features();
        }
        ensure!(
            classifier.boundaries.len() == groups.len()
                && classifier.weights.cols() == offset
                && classifier.weights.rows() == config.classes
                && classifier.bias.len() == config.classes,
            "classifier shape does not match the filter banks"
        );
        Ok(Self {
            config,
            groups,
            banks,
            classifier,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn groups(&self) -> &[EmbeddingGroup<F>] {
        &self.groups
    }

    pub fn groups_mut(&mut self) -> &mut [EmbeddingGroup<F>] {
        &mut self.groups
    }

    pub fn banks(&self) -> &[FilterBank<F>] {
        &self.banks
    }

    pub fn banks_mut(&mut self) -> &mut [FilterBank<F>] {
        &mut self.banks
    }

    pub fn classifier(&self) -> &Classifier<F> {
        &self.classifier
    }

    pub fn classifier_mut(&mut self) -> &mut Classifier<F> {
        &mut self.classifier
    }

    /// Length of the concatenated feature vector `o`.
    pub fn features(&self) -> usize {
        self.classifier.features()
    }

    pub fn vocab_size(&self) -> usize {
        self.groups[0].vocab_size()
    }

    /// Sets the dropout probability used by training and test-time scaling.
    pub fn set_dropout(&mut self, p: f64) -> Result<()> {
        ensure!((0.0..1.0).contains(&p), "dropout must be in [0, 1), got {p}");
        self.config.dropout = p;
        Ok(())
    }

    /// Identifiers of the tensors yielded by [`Self::tensors_mut`].
    pub fn tensor_ids(&self) -> Vec<TensorId> {
        let mut ids = Vec::new();
        for (l, (g, bank)) in self.groups.iter().zip(&self.banks).enumerate() {
            if g.trainable() {
                ids.push(TensorId::Embedding { group: l });
            }
            for h in 0..bank.heights.len() {
                ids.push(TensorId::FilterWeights { group: l, height: h });
                ids.push(TensorId::FilterBias { group: l, height: h });
            }
        }
        ids.push(TensorId::ClassifierWeights);
        ids.push(TensorId::ClassifierBias);
        ids
    }

    /// Trainable tensors in a fixed order shared with
    /// [`Gradients::tensors`]. Frozen embedding tables are skipped.
    pub fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut out: Vec<&mut [F]> = Vec::new();
        for (g, bank) in self.groups.iter_mut().zip(&mut self.banks) {
            if g.trainable() {
                out.push(g.table_mut().data_mut());
            }
            for hf in &mut bank.heights {
                out.push(hf.weights.data_mut());
                out.push(&mut hf.biases);
            }
        }
        out.push(self.classifier.weights.data_mut());
        out.push(&mut self.classifier.bias);
        out
    }

    /// Converts every tensor to another precision.
    pub fn cast<G: Real>(&self) -> ModelParams<G> {
        ModelParams {
            config: self.config.clone(),
            groups: self.groups.iter().map(EmbeddingGroup::cast).collect(),
            banks: self
                .banks
                .iter()
                .map(|b| FilterBank {
                    group: b.group.clone(),
                    dim: b.dim,
                    heights: b
                        .heights
                        .iter()
                        .map(|hf| HeightFilters {
                            height: hf.height,
                            weights: hf.weights.cast(),
                            biases: hf.biases.iter().map(|v| G::of(v.as_f64())).collect(),
                        })
                        .collect(),
                })
                .collect(),
            classifier: Classifier {
                weights: self.classifier.weights.cast(),
                bias: self.classifier.bias.iter().map(|v| G::of(v.as_f64())).collect(),
                boundaries: self.classifier.boundaries.clone(),
            },
        }
    }
}
