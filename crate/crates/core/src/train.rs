//! Mini-batch AdaDelta training with max-norm constraints.

use alloc::format;
use alloc::vec::Vec;

use crate::data::{batch_iter, IndexedExample};
use crate::error::{ensure, usage};
use crate::metrics::{accuracy, auc, Metric};
use crate::model::{
    sample_dropout_mask, Activation, ForwardTrace, Gradients, Mode, ModelConfig, ModelParams,
};
use crate::optim::{AdaDeltaConfig, AdaDeltaState};
use crate::regularization::{apply_norm_constraints, ConstraintTarget, RegularizationSpec};
use crate::{Error, Real, Result, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub heights: Vec<usize>,
    pub maps: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub activation: Activation,
    pub seed: u64,
    /// Stop after this many epochs without a dev improvement.
    pub patience: Option<usize>,
    pub adadelta: AdaDeltaConfig,
    /// Metric used to pick the best epoch on the dev set.
    pub metric: Metric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            heights: alloc::vec![3, 4, 5],
            maps: 100,
            batch_size: 50,
            epochs: 25,
            activation: Activation::Relu,
            seed: 0,
            patience: None,
            adadelta: AdaDeltaConfig::default(),
            metric: Metric::Accuracy,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.batch_size >= 1, "batch size must be positive");
        ensure!(self.epochs >= 1, "epoch count must be positive");
        ensure!(self.patience != Some(0), "patience must be positive");
        ensure!(
            (0.0..1.0).contains(&self.adadelta.rho) && self.adadelta.eps > 0.0,
            "AdaDelta needs 0 <= rho < 1 and eps > 0"
        );
        Ok(())
    }

    pub fn model_config(&self, classes: usize, dropout: f64) -> ModelConfig {
        ModelConfig {
            heights: self.heights.clone(),
            maps: self.maps,
            activation: self.activation,
            dropout,
            classes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// One-based epoch number.
    pub epoch: usize,
    /// Mean per-example loss over the epoch's batches.
    pub train_loss: f64,
    pub dev_metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
}

impl History {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|r| r.epoch == self.best_epoch)
    }
}

/// State visible to a per-batch observer, after the update and the
/// constraint step.
#[derive(Debug)]
pub struct BatchEvent<'a, F> {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
    pub params: &'a ModelParams<F>,
    pub traces: &'a [ForwardTrace<F>],
}

/// Test-mode metric of `params` on `examples`.
pub fn evaluate<F: Real>(
    params: &ModelParams<F>,
    examples: &[IndexedExample],
    metric: Metric,
) -> Result<f64> {
    ensure!(!examples.is_empty(), "cannot evaluate on an empty set");
    let labels: Vec<usize> = examples.iter().map(|e| e.label).collect();
    match metric {
        Metric::Accuracy => {
            let predictions = examples
                .iter()
                .map(|e| {
                    let probs = params.predict(&e.ids)?;
                    Ok(crate::model::max_pool_1(&probs)?.1)
                })
                .collect::<Result<Vec<_>>>()?;
            accuracy(&predictions, &labels)
        }
        Metric::Auc => {
            ensure!(
                params.config().classes == 2,
                "AUC needs a binary task, model has {} classes",
                params.config().classes
            );
            let scores = examples
                .iter()
                .map(|e| Ok(params.predict(&e.ids)?[1].as_f64()))
                .collect::<Result<Vec<_>>>()?;
            auc(&scores, &labels)
        }
    }
}

/// Trains `params` in place of a copy and returns the parameters of the
/// best dev epoch (the last epoch when `dev` is `None`) with the history.
pub fn train<F: Real>(
    params: ModelParams<F>,
    train_set: &[IndexedExample],
    dev: Option<&[IndexedExample]>,
    config: &TrainConfig,
    spec: &RegularizationSpec,
    rng: &mut Rng,
) -> Result<(ModelParams<F>, History)> {
    train_observed(params, train_set, dev, config, spec, rng, |_| {})
}

/// [`train`] with a callback after every mini-batch update.
pub fn train_observed<F: Real>(
    mut params: ModelParams<F>,
    train_set: &[IndexedExample],
    dev: Option<&[IndexedExample]>,
    config: &TrainConfig,
    spec: &RegularizationSpec,
    rng: &mut Rng,
    mut observer: impl FnMut(&BatchEvent<'_, F>),
) -> Result<(ModelParams<F>, History)> {
    config.validate()?;
    ensure!(!train_set.is_empty(), "training split is empty");
    let dev = dev.filter(|d| !d.is_empty());
    spec.validate(params.groups().len())?;
    params.set_dropout(spec.dropout)?;
    let classes = params.config().classes;
    if let Some(bad) = train_set
        .iter()
        .chain(dev.into_iter().flatten())
        .find(|e| e.label >= classes)
    {
        return Err(usage!("label {} out of range for {classes} classes", bad.label));
    }

    let h_max = params.config().max_height();
    let k = params.features();
    let dropout = spec.dropout;
    let limit = (spec.target == ConstraintTarget::Activations).then_some(&spec.lambda);
    let lengths: Vec<usize> = params.tensors_mut().iter().map(|t| t.len()).collect();
    let mut state = AdaDeltaState::<F>::new(config.adadelta, lengths);
    let mut grads = Gradients::zeros_for(&params);
    let mut history = History::default();
    let mut best: Option<(f64, ModelParams<F>)> = None;
    let mut since_best = 0;
    let mut traces = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.epochs {
        let mut loss_sum = 0.0;
        for (b, batch) in batch_iter(train_set, config.batch_size, h_max, rng)?.enumerate() {
            grads.clear();
            traces.clear();
            let scale = F::one() / F::of(batch.len() as f64);
            let mut batch_loss = F::zero();
            for i in 0..batch.len() {
                let mask = (dropout > 0.0).then(|| sample_dropout_mask::<F>(k, dropout, rng));
                let trace = params.forward(
                    batch.row(i),
                    Mode::Train {
                        mask: mask.as_deref(),
                        limit,
                    },
                )?;
                batch_loss += params.backward(&trace, batch.labels()[i], scale, &mut grads)?;
                traces.push(trace);
            }
            let batch_loss = batch_loss.as_f64();
            if !batch_loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss {batch_loss} at epoch {epoch}, batch {b}"
                )));
            }
            loss_sum += batch_loss;
            state.step(params.tensors_mut(), grads.tensors())?;
            if spec.target == ConstraintTarget::ClassifierWeights {
                apply_norm_constraints(params.classifier_mut(), spec)?;
            }
            observer(&BatchEvent {
                epoch,
                batch: b,
                loss: batch_loss / batch.len() as f64,
                params: &params,
                traces: &traces,
            });
        }
        let dev_metric = dev.map(|d| evaluate(&params, d, config.metric)).transpose()?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            dev_metric,
        });
        match dev_metric {
            Some(m) if best.as_ref().is_none_or(|(b, _)| m > *b) => {
                best = Some((m, params.clone()));
                history.best_epoch = epoch;
                since_best = 0;
            }
            Some(_) => {
                since_best += 1;
                if config.patience.is_some_and(|p| since_best >= p) {
                    break;
                }
            }
            None => history.best_epoch = epoch,
        }
    }
    Ok((best.map_or(params, |(_, p)| p), history))
}
