use alloc::vec;
use alloc::vec::Vec;

use super::{HeightFilters, ModelParams};
use crate::error::{ensure, usage};
use crate::math::{axpy, cross_entropy, dot, softmax_in_place, Matrix};
use crate::regularization::{clip_segments, Lambda};
use crate::vocab::PAD;
use crate::{Real, Result, Rng};

/// How a forward pass treats the feature vector `o`.
#[derive(Debug, Clone, Copy)]
pub enum Mode<'a, F> {
    /// No dropout; logits use classifier weights scaled by `1 - dropout`.
    Test,
    Train {
        /// 0/1 keep-mask over `o`; `None` keeps everything.
        mask: Option<&'a [F]>,
        /// Max-norm bound applied to the masked feature vector before the
        /// classifier (activation-target constraints).
        limit: Option<&'a Lambda>,
    },
}

/// Intermediates of one group in a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupTrace<F> {
    /// `s x d_l` sentence matrix.
    pub sentence: Matrix<F>,
    /// Per height, a `maps x (s - h + 1)` matrix of pre-activation feature
    /// maps.
    pub maps: Vec<Matrix<F>>,
    /// Per pooled feature of this group: window index of the maximum.
    pub argmax: Vec<usize>,
    /// Per pooled feature: pre-activation value at the argmax window.
    pub pre_max: Vec<F>,
}

/// Everything backward needs from one forward pass over one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<F> {
    pub ids: Vec<u32>,
    pub groups: Vec<GroupTrace<F>>,
    /// Concatenated pooled features `o = o_1 ⊕ ... ⊕ o_m`.
    pub features: Vec<F>,
    pub mask: Option<Vec<F>>,
    /// Factors applied by an activation-target constraint, one per segment.
    /// Empty when no such constraint was active.
    pub scales: Vec<F>,
    /// Vector multiplied by the classifier weights.
    pub classifier_input: Vec<F>,
    pub logits: Vec<F>,
    pub probs: Vec<F>,
    pub train: bool,
}

impl<F: Real> ForwardTrace<F> {
    /// Pooled features of group `l`.
    pub fn group_features<'a>(&'a self, params: &ModelParams<F>, l: usize) -> &'a [F] {
        &self.features[params.classifier().boundaries[l].clone()]
    }

    pub fn predicted_class(&self) -> usize {
        super::layers::first_max(&self.probs).1
    }
}

/// Parameter gradients laid out like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    /// `None` for frozen groups.
    pub embeddings: Vec<Option<Matrix<F>>>,
    pub filters: Vec<Vec<HeightFilters<F>>>,
    pub classifier_weights: Matrix<F>,
    pub classifier_bias: Vec<F>,
}

impl<F: Real> Gradients<F> {
    pub fn zeros_for(params: &ModelParams<F>) -> Self {
        Self {
            embeddings: params
                .groups()
                .iter()
                .map(|g| g.trainable().then(|| Matrix::zeros(g.vocab_size(), g.dim())))
                .collect(),
            filters: params
                .banks()
                .iter()
                .map(|b| {
                    b.heights
                        .iter()
                        .map(|hf| HeightFilters {
                            height: hf.height,
                            weights: Matrix::zeros(hf.weights.rows(), hf.weights.cols()),
                            biases: vec![F::zero(); hf.biases.len()],
                        })
                        .collect()
                })
                .collect(),
            classifier_weights: Matrix::zeros(
                params.classifier().weights.rows(),
                params.classifier().weights.cols(),
            ),
            classifier_bias: vec![F::zero(); params.classifier().bias.len()],
        }
    }

    pub fn clear(&mut self) {
        for t in self.tensors_mut() {
            t.fill(F::zero());
        }
    }

    /// Tensors in [`ModelParams::tensors_mut`] order.
    pub fn tensors(&self) -> Vec<&[F]> {
        let mut out: Vec<&[F]> = Vec::new();
        for (emb, heights) in self.embeddings.iter().zip(&self.filters) {
            if let Some(e) = emb {
                out.push(e.data());
            }
            for hf in heights {
                out.push(hf.weights.data());
                out.push(&hf.biases);
            }
        }
        out.push(self.classifier_weights.data());
        out.push(&self.classifier_bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut out: Vec<&mut [F]> = Vec::new();
        for (emb, heights) in self.embeddings.iter_mut().zip(&mut self.filters) {
            if let Some(e) = emb {
                out.push(e.data_mut());
            }
            for hf in heights {
                out.push(hf.weights.data_mut());
                out.push(&mut hf.biases);
            }
        }
        out.push(self.classifier_weights.data_mut());
        out.push(&mut self.classifier_bias);
        out
    }

    fn matches(&self, params: &ModelParams<F>) -> bool {
        self.embeddings.len() == params.groups().len()
            && self
                .embeddings
                .iter()
                .zip(params.groups())
                .all(|(e, g)| e.is_some() == g.trainable())
            && self.classifier_weights.cols() == params.features()
            && self.classifier_bias.len() == params.config().classes
    }
}

/// Keep-mask for dropout: each entry is 0 with probability `p`, else 1.
pub fn sample_dropout_mask<F: Real>(len: usize, p: f64, rng: &mut Rng) -> Vec<F> {
    (0..len)
        .map(|_| if rng.bernoulli(p) { F::zero() } else { F::one() })
        .collect()
}

impl<F: Real> ModelParams<F> {
    /// Runs one sentence through the network. `ids` must already be padded
    /// to at least the largest filter height.
    pub fn forward(&self, ids: &[u32], mode: Mode<'_, F>) -> Result<ForwardTrace<F>> {
        let vocab = self.vocab_size();
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= vocab) {
            return Err(usage!("token index {bad} out of range for vocabulary of {vocab}"));
        }
        let h_max = self.config().max_height();
        ensure!(
            ids.len() >= h_max,
            "sentence of length {} is shorter than the largest filter height {h_max}",
            ids.len()
        );
        let activation = self.config().activation;
        let k = self.features();
        let mut features = Vec::with_capacity(k);
        let mut groups = Vec::with_capacity(self.groups().len());
        for (group, bank) in self.groups().iter().zip(self.banks()) {
            let table = group.table();
            let dim = group.dim();
            let mut sentence = Matrix::zeros(ids.len(), dim);
            for (t, &id) in ids.iter().enumerate() {
                sentence.row_mut(t).copy_from_slice(table.row(id as usize));
            }
            let mut maps = Vec::with_capacity(bank.heights.len());
            let mut argmax = Vec::with_capacity(bank.features());
            let mut pre_max = Vec::with_capacity(bank.features());
            for hf in &bank.heights {
                let h = hf.height;
                let windows = ids.len() - h + 1;
                let mut fm = Matrix::zeros(hf.maps(), windows);
                for i in 0..hf.maps() {
                    let w = hf.weights.row(i);
                    let b = hf.biases[i];
                    let row = fm.row_mut(i);
                    let mut best = (F::neg_infinity(), 0, F::zero());
                    for (j, slot) in row.iter_mut().enumerate() {
                        let c = b + dot(w, sentence.row_block(j, h));
                        *slot = c;
                        let a = activation.apply(c);
                        if a > best.0 || j == 0 {
                            best = (a, j, c);
                        }
                    }
                    features.push(best.0);
                    argmax.push(best.1);
                    pre_max.push(best.2);
                }
                maps.push(fm);
            }
            groups.push(GroupTrace {
                sentence,
                maps,
                argmax,
                pre_max,
            });
        }

        let classifier = self.classifier();
        let (train, mask, input, scales) = match mode {
            Mode::Test => (false, None, features.clone(), Vec::new()),
            Mode::Train { mask, limit } => {
                let mut input = features.clone();
                if let Some(mask) = mask {
                    ensure!(
                        mask.len() == k,
                        "dropout mask has {} entries for {k} features",
                        mask.len()
                    );
                    for (x, &m) in input.iter_mut().zip(mask) {
                        *x *= m;
                    }
                }
                let scales = match limit {
                    Some(lambda) => clip_segments(&mut input, &classifier.boundaries, lambda)?,
                    None => Vec::new(),
                };
                (true, mask.map(<[F]>::to_vec), input, scales)
            }
        };
        let keep = F::one() - F::of(self.config().dropout);
        let mut logits = Vec::with_capacity(self.config().classes);
        for c in 0..self.config().classes {
            let z = dot(classifier.weights.row(c), &input);
            logits.push(if train { z } else { z * keep } + classifier.bias[c]);
        }
        let mut probs = logits.clone();
        softmax_in_place(&mut probs);
        Ok(ForwardTrace {
            ids: ids.to_vec(),
            groups,
            features,
            mask,
            scales,
            classifier_input: input,
            logits,
            probs,
            train,
        })
    }

    /// Test-mode class probabilities for an unpadded sentence.
    pub fn predict(&self, ids: &[u32]) -> Result<Vec<F>> {
        let h_max = self.config().max_height();
        let trace = if ids.len() >= h_max {
            self.forward(ids, Mode::Test)?
        } else {
            let mut padded = ids.to_vec();
            padded.resize(h_max, PAD);
            self.forward(&padded, Mode::Test)?
        };
        Ok(trace.probs)
    }

    /// Adds `scale` times the cross-entropy gradient of one training trace
    /// into `grads` and returns the unscaled loss.
    ///
    /// Gradient reaches each filter only through its argmax window, and
    /// reaches embedding rows only for tokens inside those windows. The
    /// padding row never receives gradient.
    pub fn backward(
        &self,
        trace: &ForwardTrace<F>,
        label: usize,
        scale: F,
        grads: &mut Gradients<F>,
    ) -> Result<F> {
        ensure!(trace.train, "backward needs a training-mode trace");
        ensure!(
            trace.features.len() == self.features() && trace.groups.len() == self.groups().len(),
            "trace does not match the model shape"
        );
        ensure!(
            grads.matches(self),
            "gradient buffer does not match the model shape"
        );
        let loss = cross_entropy(&trace.probs, label)?;

        let mut dz = trace.probs.clone();
        dz[label] -= F::one();
        for d in &mut dz {
            *d *= scale;
        }
        let classifier = self.classifier();
        let k = self.features();
        let mut dx = vec![F::zero(); k];
        for (c, &g) in dz.iter().enumerate() {
            axpy(g, &trace.classifier_input, grads.classifier_weights.row_mut(c));
            grads.classifier_bias[c] += g;
            axpy(g, classifier.weights.row(c), &mut dx);
        }

        if !trace.scales.is_empty() {
            let whole = 0..k;
            let segments = if trace.scales.len() == 1 {
                core::slice::from_ref(&whole)
            } else {
                &classifier.boundaries[..]
            };
            for (range, &s) in segments.iter().zip(&trace.scales) {
                if s == F::one() {
                    continue;
                }
                // x = s * y with s = λ / |y|:  dy = s * (dx - y (y·dx) / |y|²)
                let y: Vec<F> = match &trace.mask {
                    Some(m) => range.clone().map(|i| trace.features[i] * m[i]).collect(),
                    None => trace.features[range.clone()].to_vec(),
                };
                let seg = &mut dx[range.clone()];
                let coef = dot(&y, seg) / dot(&y, &y);
                for (d, &yi) in seg.iter_mut().zip(&y) {
                    *d = s * (*d - yi * coef);
                }
            }
        }
        if let Some(mask) = &trace.mask {
            for (d, &m) in dx.iter_mut().zip(mask) {
                *d *= m;
            }
        }

        let activation = self.config().activation;
        for (l, (bank, gtrace)) in self.banks().iter().zip(&trace.groups).enumerate() {
            let dim = bank.dim;
            let offset = classifier.boundaries[l].start;
            let mut feature = 0;
            for (hi, hf) in bank.heights.iter().enumerate() {
                let h = hf.height;
                for i in 0..hf.maps() {
                    let f = feature;
                    feature += 1;
                    let upstream = dx[offset + f];
                    if upstream.is_zero() {
                        continue;
                    }
                    let d = upstream * activation.derivative(gtrace.pre_max[f]);
                    if d.is_zero() {
                        continue;
                    }
                    let j = gtrace.argmax[f];
                    let gh = &mut grads.filters[l][hi];
                    axpy(d, gtrace.sentence.row_block(j, h), gh.weights.row_mut(i));
                    gh.biases[i] += d;
                    if let Some(emb) = &mut grads.embeddings[l] {
                        let w = hf.weights.row(i);
                        for r in 0..h {
                            let token = trace.ids[j + r];
                            if token != PAD {
                                axpy(d, &w[r * dim..(r + 1) * dim], emb.row_mut(token as usize));
                            }
                        }
                    }
                }
            }
        }
        Ok(loss)
    }
}
