//! Dense numeric primitives shared by the model and the optimizer.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{ensure, usage};
use crate::{Error, Real, Result};

/// Probability floor applied before taking the log in [`cross_entropy`].
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Real> Matrix<F> {
    pub fn new(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        ensure!(
            data.len() == rows * cols,
            "matrix data has {} entries, expected {rows}x{cols}",
            data.len()
        );
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        ensure!(
            rows.iter().all(|r| r.len() == cols),
            "rows have inconsistent lengths"
        );
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[F] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: F) {
        self.data[r * self.cols + c] = value;
    }

    /// Contiguous block of `count` rows starting at `first`.
    #[inline]
    pub fn row_block(&self, first: usize, count: usize) -> &[F] {
        &self.data[first * self.cols..(first + count) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Element-wise conversion to another precision.
    pub fn cast<G: Real>(&self) -> Matrix<G> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| G::of(v.as_f64())).collect(),
        }
    }
}

#[inline]
pub fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `y += alpha * x`.
#[inline]
pub fn axpy<F: Real>(alpha: F, x: &[F], y: &mut [F]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm_unchecked<F: Real>(v: &[F]) -> F {
    v.iter().fold(F::zero(), |acc, &x| acc + x * x).sqrt()
}

/// Euclidean norm.
pub fn l2_norm<F: Real>(v: &[F]) -> Result<F> {
    ensure!(!v.is_empty(), "l2 norm of an empty vector");
    Ok(norm_unchecked(v))
}

/// Returns `v` scaled down so its norm is at most `max_norm`.
pub fn rescale_to_max_norm<F: Real>(v: &[F], max_norm: F) -> Result<Vec<F>> {
    let mut out = v.to_vec();
    clip_norm(&mut out, max_norm)?;
    Ok(out)
}

/// In-place max-norm rescaling. Returns the factor that was applied
/// (one when the vector was already within the bound).
///
/// The computed norm of the result never exceeds `max_norm`, so a second
/// application is always a no-op.
pub fn clip_norm<F: Real>(v: &mut [F], max_norm: F) -> Result<F> {
    ensure!(max_norm > F::zero(), "max norm must be positive, got {max_norm}");
    let norm = norm_unchecked(v);
    if norm <= max_norm {
        return Ok(F::one());
    }
    let original = v.to_vec();
    let mut factor = max_norm / norm;
    loop {
        for (dst, &src) in v.iter_mut().zip(&original) {
            *dst = src * factor;
        }
        if norm_unchecked(v) <= max_norm {
            return Ok(factor);
        }
        // Rounding left the norm a few ulps above the bound.
        factor *= F::one() - F::epsilon();
    }
}

/// Numerically stable softmax.
pub fn softmax<F: Real>(z: &[F]) -> Result<Vec<F>> {
    ensure!(!z.is_empty(), "softmax of an empty vector");
    let mut out = z.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub(crate) fn softmax_in_place<F: Real>(z: &mut [F]) {
    let max = z.iter().copied().fold(F::neg_infinity(), F::max);
    let mut total = F::zero();
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in z.iter_mut() {
        *v /= total;
    }
}

/// Negative log-likelihood of `label`, with probabilities floored at
/// [`PROBABILITY_FLOOR`].
pub fn cross_entropy<F: Real>(probs: &[F], label: usize) -> Result<F> {
    ensure!(
        label < probs.len(),
        "label {label} out of range for {} classes",
        probs.len()
    );
    Ok(-probs[label].max(F::of(PROBABILITY_FLOOR)).ln())
}

/// Central-difference gradient of `f` at `theta` with step `h`.
pub fn finite_difference_gradient<F: Real>(
    mut f: impl FnMut(&[F]) -> F,
    theta: &[F],
    h: F,
) -> Result<Vec<F>> {
    ensure!(h > F::zero(), "finite-difference step must be positive");
    let mut point = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        point[i] = theta[i] + h;
        let plus = f(&point);
        point[i] = theta[i] - h;
        let minus = f(&point);
        point[i] = theta[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(alloc::format!(
                "objective is not finite around component {i}"
            )));
        }
        grad.push((plus - minus) / (h + h));
    }
    Ok(grad)
}
