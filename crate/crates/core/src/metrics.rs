//! Classification metrics and repeated-run summaries.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{ensure, usage};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Accuracy,
    /// Area under the ROC curve of the positive-class (index 1) score.
    Auc,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Auc => "auc",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        [Metric::Accuracy, Metric::Auc]
            .into_iter()
            .find(|m| m.name() == name)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Fraction of positions where `predictions` equals `labels`.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    ensure!(
        predictions.len() == labels.len(),
        "{} predictions for {} labels",
        predictions.len(),
        labels.len()
    );
    ensure!(!labels.is_empty(), "accuracy of an empty set");
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Mann-Whitney AUC: the fraction of (positive, negative) pairs where the
/// positive scores higher, counting ties as one half. Labels are 0/1.
///
/// Pairs are counted exactly in half-units, so the result is the same
/// floating-point value as a brute-force enumeration.
pub fn auc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    ensure!(
        scores.len() == labels.len(),
        "{} scores for {} labels",
        scores.len(),
        labels.len()
    );
    ensure!(labels.iter().all(|&l| l <= 1), "AUC needs binary 0/1 labels");
    ensure!(scores.iter().all(|s| !s.is_nan()), "AUC scores must not be NaN");
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    ensure!(positives > 0 && negatives > 0, "AUC needs both classes present");
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the number of correctly ordered pairs (ties count 1).
    let mut doubled: u64 = 0;
    let mut negatives_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let tied_neg = order[i..j].iter().filter(|&&k| labels[k] == 0).count() as u64;
        let tied_pos = (j - i) as u64 - tied_neg;
        doubled += tied_pos * (2 * negatives_below + tied_neg);
        negatives_below += tied_neg;
        i = j;
    }
    Ok(doubled as f64 / 2.0 / (positives as f64 * negatives as f64))
}

/// Mean and range of a metric over repeated runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Summary {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        ensure!(!values.is_empty(), "cannot summarise zero runs");
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            mean: mean.clamp(min, max),
            min,
            max,
            n: values.len(),
        })
    }

    /// Percentages with two decimals: `"95.52 (94.60,96.60)"`.
    pub fn cell(&self) -> String {
        format!(
            "{:.2} ({:.2},{:.2})",
            self.mean * 100.0,
            self.min * 100.0,
            self.max * 100.0
        )
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.cell())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 1], &[1, 0]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 1, 0, 1], &[1, 1, 0, 0]).unwrap(), 0.75);
        assert!(accuracy(&[1], &[1, 0]).is_err());
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.4, 0.6], &[1, 0, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 0.6, 0.4], &[1, 0, 1]).unwrap(), 0.5);
        assert_eq!(auc(&[0.3; 5], &[1, 0, 1, 0, 0]).unwrap(), 0.5);
        assert!(auc(&[0.1, 0.2], &[1, 1]).is_err());
        assert!(auc(&[0.1, 0.2], &[1, 2]).is_err());
    }

    #[test]
    fn summary_cell_format() {
        let s = Summary::from_values(&[0.9460, 0.9552 * 3.0 - 0.9460 - 0.9660, 0.9660]).unwrap();
        assert_eq!(s.cell(), "95.52 (94.60,96.60)");
        let one = Summary::from_values(&[0.5]).unwrap();
        assert_eq!((one.mean, one.min, one.max, one.n), (0.5, 0.5, 0.5, 1));
        assert!(Summary::from_values(&[]).is_err());
    }
}
