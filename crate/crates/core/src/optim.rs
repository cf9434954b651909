//! AdaDelta: per-coordinate step sizes from decayed averages of squared
//! gradients and squared updates.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{ensure, usage};
use crate::{Real, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaDeltaConfig {
    /// Decay of both running averages.
    pub rho: f64,
    pub eps: f64,
}

impl Default for AdaDeltaConfig {
    fn default() -> Self {
        Self { rho: 0.95, eps: 1e-6 }
    }
}

/// Running averages `E[g²]` and `E[Δx²]` for one tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulators<F> {
    pub sq_grad: Vec<F>,
    pub sq_update: Vec<F>,
}

/// Optimizer state for a list of tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaDeltaState<F> {
    pub config: AdaDeltaConfig,
    pub slots: Vec<Accumulators<F>>,
}

impl<F: Real> AdaDeltaState<F> {
    /// Zeroed accumulators for tensors of the given lengths.
    pub fn new(config: AdaDeltaConfig, lengths: impl IntoIterator<Item = usize>) -> Self {
        Self {
            config,
            slots: lengths
                .into_iter()
                .map(|n| Accumulators {
                    sq_grad: vec![F::zero(); n],
                    sq_update: vec![F::zero(); n],
                })
                .collect(),
        }
    }

    /// Updates every tensor in place; `params` and `grads` must follow the
    /// order the state was created with.
    pub fn step(&mut self, params: Vec<&mut [F]>, grads: Vec<&[F]>) -> Result<()> {
        ensure!(
            params.len() == self.slots.len() && grads.len() == self.slots.len(),
            "optimizer tracks {} tensors, got {} parameters and {} gradients",
            self.slots.len(),
            params.len(),
            grads.len()
        );
        let config = self.config;
        for ((param, grad), slot) in params.into_iter().zip(grads).zip(&mut self.slots) {
            adadelta_update(param, grad, slot, config)?;
        }
        Ok(())
    }
}

/// One AdaDelta step on one tensor:
///
/// ```text
/// E[g²]  ← ρ E[g²] + (1 − ρ) g²
/// Δ      ← −sqrt(E[Δx²] + ε) / sqrt(E[g²] + ε) · g
/// E[Δx²] ← ρ E[Δx²] + (1 − ρ) Δ²
/// x      ← x + Δ
/// ```
pub fn adadelta_update<F: Real>(
    param: &mut [F],
    grad: &[F],
    state: &mut Accumulators<F>,
    config: AdaDeltaConfig,
) -> Result<()> {
    ensure!(
        param.len() == grad.len()
            && param.len() == state.sq_grad.len()
            && param.len() == state.sq_update.len(),
        "AdaDelta shapes differ: {} parameters, {} gradients, {} accumulators",
        param.len(),
        grad.len(),
        state.sq_grad.len()
    );
    let rho = F::of(config.rho);
    let one_minus_rho = F::one() - rho;
    let eps = F::of(config.eps);
    for (((x, &g), eg), ed) in param
        .iter_mut()
        .zip(grad)
        .zip(state.sq_grad.iter_mut())
        .zip(state.sq_update.iter_mut())
    {
        *eg = rho * *eg + one_minus_rho * g * g;
        let delta = -((*ed + eps).sqrt() / (*eg + eps).sqrt()) * g;
        *ed = rho * *ed + one_minus_rho * delta * delta;
        *x += delta;
    }
    Ok(())
}
