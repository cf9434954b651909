//! Analytic gradients versus central finite differences on a tiny random
//! model, in 64-bit precision.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::embedding::EmbeddingGroup;
use crate::error::{ensure, usage};
use crate::math::{finite_difference_gradient, Matrix};
use crate::model::{sample_dropout_mask, Activation, Gradients, Mode, ModelConfig, ModelParams, TensorId};
use crate::regularization::{ConstraintTarget, Lambda};
use crate::vocab::{Vocabulary, PAD};
use crate::{Result, Rng};

/// Denominator floor of the relative error, so that gradients that are
/// zero up to rounding noise compare as equal.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    pub dims: Vec<usize>,
    pub heights: Vec<usize>,
    pub maps: usize,
    /// Vocabulary size including the padding slot.
    pub vocab: usize,
    pub seq_len: usize,
    pub classes: usize,
    /// Sentences in the checked mini-batch.
    pub examples: usize,
    pub activation: Activation,
    pub dropout: f64,
    pub target: ConstraintTarget,
    pub step: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            dims: vec![4, 5],
            heights: vec![2, 3],
            maps: 3,
            vocab: 20,
            seq_len: 7,
            classes: 3,
            examples: 3,
            activation: Activation::Relu,
            dropout: 0.5,
            target: ConstraintTarget::ClassifierWeights,
            step: 1e-5,
            tolerance: 1e-4,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorReport {
    pub id: TensorId,
    pub max_rel_error: f64,
    /// Flat index of the worst element.
    pub worst_index: usize,
    pub checked: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorReport>,
    /// Largest analytic gradient magnitude on a padding row (must be zero).
    pub pad_gradient: f64,
    /// Whether the activation constraint actually rescaled some feature
    /// segment (activation target only).
    pub constraint_active: bool,
    pub tolerance: f64,
}

impl GradCheckReport {
    /// Largest relative error per tensor class.
    pub fn by_class(&self) -> BTreeMap<&'static str, f64> {
        let mut out = BTreeMap::new();
        for t in &self.tensors {
            let e = out.entry(t.id.class()).or_insert(0.0f64);
            *e = e.max(t.max_rel_error);
        }
        out
    }

    pub fn failures(&self) -> Vec<&TensorReport> {
        self.tensors
            .iter()
            .filter(|t| t.max_rel_error.is_nan() || t.max_rel_error > self.tolerance)
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty() && self.pad_gradient == 0.0
    }

    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// A fixed mini-batch with fixed dropout masks, so the loss is a
/// deterministic function of the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckProblem {
    pub params: ModelParams<f64>,
    pub sentences: Vec<(Vec<u32>, usize)>,
    pub masks: Vec<Option<Vec<f64>>>,
    pub limit: Option<Lambda>,
}

impl CheckProblem {
    /// Mean cross-entropy over the batch.
    pub fn loss(&self, params: &ModelParams<f64>) -> Result<f64> {
        let mut total = 0.0;
        for ((ids, label), mask) in self.sentences.iter().zip(&self.masks) {
            let trace = params.forward(
                ids,
                Mode::Train {
                    mask: mask.as_deref(),
                    limit: self.limit.as_ref(),
                },
            )?;
            total += crate::math::cross_entropy(&trace.probs, *label)?;
        }
        Ok(total / self.sentences.len() as f64)
    }

    pub fn analytic(&self) -> Result<Gradients<f64>> {
        let mut grads = Gradients::zeros_for(&self.params);
        let scale = 1.0 / self.sentences.len() as f64;
        for ((ids, label), mask) in self.sentences.iter().zip(&self.masks) {
            let trace = self.params.forward(
                ids,
                Mode::Train {
                    mask: mask.as_deref(),
                    limit: self.limit.as_ref(),
                },
            )?;
            self.params.backward(&trace, *label, scale, &mut grads)?;
        }
        Ok(grads)
    }

    /// Smallest distance of any pooled value, argmax competitor or ReLU
    /// input from a non-differentiable point.
    fn kink_margin(&self) -> Result<f64> {
        let act = self.params.config().activation;
        let mut margin = f64::INFINITY;
        for ((ids, _), mask) in self.sentences.iter().zip(&self.masks) {
            let trace = self.params.forward(
                ids,
                Mode::Train {
                    mask: mask.as_deref(),
                    limit: self.limit.as_ref(),
                },
            )?;
            for g in &trace.groups {
                for fm in &g.maps {
                    for i in 0..fm.rows() {
                        let mut vals: Vec<f64> = fm.row(i).iter().map(|&c| act.apply(c)).collect();
                        if act == Activation::Relu {
                            margin = fm.row(i).iter().fold(margin, |m, c| m.min(c.abs()));
                        }
                        vals.sort_by(|a, b| b.total_cmp(a));
                        if vals.len() > 1 && vals[0] > 0.0 {
                            margin = margin.min(vals[0] - vals[1]);
                        }
                    }
                }
            }
            if let Some(lambda) = &self.limit {
                let bounds = self.params.classifier().boundaries.clone();
                for (range, &bound) in bounds.iter().zip(lambda.values()) {
                    let y: f64 = range
                        .clone()
                        .map(|i| {
                            let m = mask.as_ref().map_or(1.0, |m| m[i]);
                            let v = trace.features[i] * m;
                            v * v
                        })
                        .sum::<f64>();
                    let y = Float::sqrt(y);
                    margin = margin.min((y - bound).abs());
                }
            }
        }
        Ok(margin)
    }
}

fn random_problem(config: &GradCheckConfig, rng: &mut Rng) -> Result<CheckProblem> {
    let tokens: Vec<String> = (1..config.vocab).map(|i| alloc::format!("w{i}")).collect();
    let vocab = Vocabulary::from_tokens(&tokens)?;
    let groups = config
        .dims
        .iter()
        .enumerate()
        .map(|(l, &d)| {
            let mut table = Matrix::from_fn(config.vocab, d, |_, _| rng.uniform_in(-1.0, 1.0));
            table.row_mut(PAD as usize).fill(0.0);
            EmbeddingGroup::new(alloc::format!("g{l}"), table, true, &vocab)
        })
        .collect::<Result<Vec<_>>>()?;
    let model = ModelConfig {
        heights: config.heights.clone(),
        maps: config.maps,
        activation: config.activation,
        dropout: config.dropout,
        classes: config.classes,
    };
    let mut params = ModelParams::init(groups, model, rng)?;
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = rng.uniform_in(-0.5, 0.5);
        }
    }
    for g in params.groups_mut() {
        g.table_mut().row_mut(PAD as usize).fill(0.0);
    }
    let k = params.features();
    let max_h = config.heights.iter().copied().max().unwrap_or(1);
    let mut sentences = Vec::new();
    let mut masks = Vec::new();
    for e in 0..config.examples {
        // Varying true lengths so some windows cover padding.
        let len = (config.seq_len - (e % 3)).max(max_h.min(config.seq_len)).max(1);
        let mut ids: Vec<u32> = (0..len).map(|_| 1 + rng.below(config.vocab - 1) as u32).collect();
        ids.resize(config.seq_len, PAD);
        sentences.push((ids, e % config.classes));
        masks.push((config.dropout > 0.0).then(|| sample_dropout_mask(k, config.dropout, rng)));
    }
    let mut problem = CheckProblem {
        params,
        sentences,
        masks,
        limit: None,
    };
    if config.target == ConstraintTarget::Activations {
        // One bound that always binds and one that never does.
        let mut norms = vec![Vec::new(); config.dims.len()];
        for ((ids, _), mask) in problem.sentences.iter().zip(&problem.masks) {
            let trace = problem.params.forward(
                ids,
                Mode::Train {
                    mask: mask.as_deref(),
                    limit: None,
                },
            )?;
            for (l, range) in problem.params.classifier().boundaries.iter().enumerate() {
                let n = Float::sqrt(
                    range
                        .clone()
                        .map(|i| trace.classifier_input[i] * trace.classifier_input[i])
                        .sum::<f64>(),
                );
                norms[l].push(n);
            }
        }
        let bounds = norms
            .iter()
            .enumerate()
            .map(|(l, ns)| {
                if l % 2 == 0 {
                    0.6 * ns.iter().copied().filter(|&n| n > 0.0).fold(1.0, f64::min)
                } else {
                    1.5 * ns.iter().copied().fold(0.0, f64::max) + 0.1
                }
            })
            .collect();
        problem.limit = Some(Lambda::PerGroup(bounds));
    }
    Ok(problem)
}

/// Builds a random problem whose parameters sit safely away from pooling
/// ties, ReLU kinks and the constraint boundary, so central differences
/// with the configured step are valid.
pub fn build_problem(config: &GradCheckConfig) -> Result<CheckProblem> {
    ensure!(config.step > 0.0, "finite-difference step must be positive");
    ensure!(config.vocab >= 2, "gradient check needs at least one real token");
    let mut rng = Rng::new(config.seed);
    for _ in 0..1000 {
        let problem = random_problem(config, &mut rng)?;
        if problem.kink_margin()? > 1e3 * config.step {
            return Ok(problem);
        }
    }
    Err(usage!("no kink-free random model found for this configuration"))
}

/// Compares analytic and numeric gradients of every trainable tensor.
/// Padding rows are frozen, so they are checked for an exactly zero
/// analytic gradient instead.
pub fn check_problem(problem: &CheckProblem, step: f64, tolerance: f64) -> Result<GradCheckReport> {
    compare(problem, &problem.analytic()?, step, tolerance)
}

fn compare(
    problem: &CheckProblem,
    analytic: &Gradients<f64>,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let ids = problem.params.tensor_ids();
    let mut work = problem.params.clone();
    let mut tensors = Vec::with_capacity(ids.len());
    let mut pad_gradient = 0.0f64;
    for (t, id) in ids.iter().enumerate() {
        let a = analytic.tensors()[t].to_vec();
        let theta = problem.params.clone().tensors_mut()[t].to_vec();
        let mut failure = None;
        let numeric = finite_difference_gradient(
            |point: &[f64]| {
                work.tensors_mut()[t].copy_from_slice(point);
                problem.loss(&work).unwrap_or_else(|e| {
                    failure = Some(e);
                    f64::NAN
                })
            },
            &theta,
            step,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let numeric = numeric?;
        work.tensors_mut()[t].copy_from_slice(&theta);

        let skip_pad = |i: usize| match id {
            TensorId::Embedding { group } => i / problem.params.groups()[*group].dim() == PAD as usize,
            _ => false,
        };
        let mut report = TensorReport {
            id: *id,
            max_rel_error: 0.0,
            worst_index: 0,
            checked: 0,
        };
        for (i, (&ai, &ni)) in a.iter().zip(&numeric).enumerate() {
            if skip_pad(i) {
                pad_gradient = pad_gradient.max(ai.abs());
                continue;
            }
            let err = relative_error(ai, ni);
            report.checked += 1;
            if err > report.max_rel_error || err.is_nan() {
                report.max_rel_error = err;
                report.worst_index = i;
            }
        }
        tensors.push(report);
    }
    let constraint_active = match &problem.limit {
        None => false,
        Some(_) => problem
            .sentences
            .iter()
            .zip(&problem.masks)
            .any(|((ids, _), mask)| {
                problem
                    .params
                    .forward(
                        ids,
                        Mode::Train {
                            mask: mask.as_deref(),
                            limit: problem.limit.as_ref(),
                        },
                    )
                    .is_ok_and(|t| t.scales.iter().any(|&s| s < 1.0))
            }),
    };
    Ok(GradCheckReport {
        tensors,
        pad_gradient,
        constraint_active,
        tolerance,
    })
}

/// Builds the configured problem and checks it.
pub fn gradient_check(config: &GradCheckConfig) -> Result<GradCheckReport> {
    let problem = build_problem(config)?;
    check_problem(&problem, config.step, config.tolerance)
}
