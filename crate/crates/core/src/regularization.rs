//! Max-norm constraints on the classifier input, either as one bound over
//! the whole feature vector or one bound per embedding group.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{ensure, usage};
use crate::math::clip_norm;
use crate::model::Classifier;
use crate::{Real, Result};

/// Bound large enough to never bind in practice.
pub const UNBOUNDED: f64 = 1e9;

/// Grid searched for λ by default.
pub const DEFAULT_LAMBDA_GRID: [f64; 6] = [1.0 / 3.0, 1.0, 3.0, 9.0, 81.0, 243.0];

/// What the max-norm bound applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConstraintTarget {
    /// Each class row of the classifier weights is renormalised after every
    /// update.
    #[default]
    ClassifierWeights,
    /// The feature vector entering the classifier is rescaled during the
    /// training forward pass, and the rescaling is differentiated through.
    Activations,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Lambda {
    /// One bound over all groups together.
    Single(f64),
    /// One bound per group, in group order.
    PerGroup(Vec<f64>),
}

impl Lambda {
    pub fn values(&self) -> &[f64] {
        match self {
            Lambda::Single(v) => core::slice::from_ref(v),
            Lambda::PerGroup(v) => v,
        }
    }

    pub fn validate(&self, groups: usize) -> Result<()> {
        ensure!(
            self.values().iter().all(|&v| v > 0.0 && !v.is_nan()),
            "max-norm bounds must be positive, got {:?}",
            self.values()
        );
        if let Lambda::PerGroup(v) = self {
            ensure!(
                v.len() == groups,
                "{} per-group bounds given for {groups} groups",
                v.len()
            );
        }
        Ok(())
    }
}

/// Default dropout probability on the pooled features.
pub const DEFAULT_DROPOUT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizationSpec {
    pub lambda: Lambda,
    pub target: ConstraintTarget,
    /// Probability of dropping each pooled feature during training.
    pub dropout: f64,
}

impl RegularizationSpec {
    pub fn weights(lambda: Lambda) -> Self {
        Self {
            lambda,
            target: ConstraintTarget::ClassifierWeights,
            dropout: DEFAULT_DROPOUT,
        }
    }

    pub fn activations(lambda: Lambda) -> Self {
        Self {
            lambda,
            target: ConstraintTarget::Activations,
            dropout: DEFAULT_DROPOUT,
        }
    }

    pub fn with_dropout(mut self, dropout: f64) -> Self {
        self.dropout = dropout;
        self
    }

    pub fn validate(&self, groups: usize) -> Result<()> {
        self.lambda.validate(groups)?;
        ensure!(
            (0.0..1.0).contains(&self.dropout),
            "dropout must be in [0, 1), got {}",
            self.dropout
        );
        Ok(())
    }
}

/// Clips `values` segment by segment. [`Lambda::Single`] treats the whole
/// slice as one segment. Returns the factor applied to each segment.
pub fn clip_segments<F: Real>(
    values: &mut [F],
    boundaries: &[Range<usize>],
    lambda: &Lambda,
) -> Result<Vec<F>> {
    match lambda {
        Lambda::Single(bound) => Ok(vec![clip_norm(values, F::of(*bound))?]),
        Lambda::PerGroup(bounds) => {
            ensure!(
                bounds.len() == boundaries.len(),
                "{} bounds given for {} groups",
                bounds.len(),
                boundaries.len()
            );
            boundaries
                .iter()
                .zip(bounds)
                .map(|(range, &bound)| clip_norm(&mut values[range.clone()], F::of(bound)))
                .collect()
        }
    }
}

/// Renormalises every class row of the classifier weights.
pub fn apply_norm_constraints<F: Real>(
    classifier: &mut Classifier<F>,
    spec: &RegularizationSpec,
) -> Result<()> {
    ensure!(
        spec.target == ConstraintTarget::ClassifierWeights,
        "weight constraints requested for an activation-target spec"
    );
    spec.lambda.validate(classifier.boundaries.len())?;
    for c in 0..classifier.weights.rows() {
        clip_segments(
            classifier.weights.row_mut(c),
            &classifier.boundaries,
            &spec.lambda,
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{l2_norm, Matrix};

    fn classifier(rows: &[[f64; 4]]) -> Classifier<f64> {
        Classifier {
            weights: Matrix::new(rows.len(), 4, rows.concat()).unwrap(),
            bias: vec![0.0; rows.len()],
            boundaries: vec![0..2, 2..4],
        }
    }

    #[test]
    fn per_group_segments_are_clipped_independently() {
        let mut c = classifier(&[[3.0, 4.0, 0.0, 1.0]]);
        let spec = RegularizationSpec::weights(Lambda::PerGroup(vec![2.5, 9.0]));
        apply_norm_constraints(&mut c, &spec).unwrap();
        assert_eq!(c.weights.row(0), [1.5, 2.0, 0.0, 1.0]);
    }

    #[test]
    fn huge_bounds_are_identity() {
        let rows = [[3.0, 4.0, 0.5, 1.0], [-7.0, 2.0, 8.0, 1.0]];
        let mut c = classifier(&rows);
        let spec = RegularizationSpec::weights(Lambda::PerGroup(vec![UNBOUNDED; 2]));
        apply_norm_constraints(&mut c, &spec).unwrap();
        assert_eq!(c, classifier(&rows));
    }

    #[test]
    #[allow(clippy::single_range_in_vec_init)]
    fn single_bound_with_one_group_matches_per_group() {
        let mut a = Classifier {
            weights: Matrix::new(2, 2, vec![3.0, 4.0, 0.1, 0.2]).unwrap(),
            bias: vec![0.0; 2],
            boundaries: vec![0..2],
        };
        let mut b = a.clone();
        apply_norm_constraints(&mut a, &RegularizationSpec::weights(Lambda::Single(2.0))).unwrap();
        apply_norm_constraints(&mut b, &RegularizationSpec::weights(Lambda::PerGroup(vec![2.0]))).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn whole_row_bound() {
        let mut c = classifier(&[[3.0, 4.0, 0.0, 0.0]]);
        apply_norm_constraints(&mut c, &RegularizationSpec::weights(Lambda::Single(1.0))).unwrap();
        assert!((l2_norm(c.weights.row(0)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mismatches_are_rejected() {
        let mut c = classifier(&[[1.0; 4]]);
        let three = RegularizationSpec::weights(Lambda::PerGroup(vec![1.0; 3]));
        assert!(apply_norm_constraints(&mut c, &three).is_err());
        let negative = RegularizationSpec::weights(Lambda::Single(-1.0));
        assert!(apply_norm_constraints(&mut c, &negative).is_err());
        let act = RegularizationSpec::activations(Lambda::Single(1.0));
        assert!(apply_norm_constraints(&mut c, &act).is_err());
    }

    #[test]
    fn constraint_is_idempotent() {
        let mut c = classifier(&[[3.3, 4.7, 1.1, 9.9], [0.3, -0.7, 5.5, 2.0]]);
        let spec = RegularizationSpec::weights(Lambda::PerGroup(vec![1.0 / 3.0, 3.0]));
        apply_norm_constraints(&mut c, &spec).unwrap();
        let once = c.clone();
        apply_norm_constraints(&mut c, &spec).unwrap();
        assert_eq!(c, once);
    }
}
