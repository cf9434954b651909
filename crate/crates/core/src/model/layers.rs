use alloc::vec::Vec;

use crate::error::{ensure, usage};
use crate::math::{dot, Matrix};
use crate::{Real, Result};

/// Nonlinearity applied to feature maps before pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Relu, Activation::Tanh, Activation::Identity];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }

    #[inline]
    pub fn apply<F: Real>(self, x: F) -> F {
        match self {
            Activation::Relu => x.max(F::zero()),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative at the pre-activation value `x`. ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative<F: Real>(self, x: F) -> F {
        match self {
            Activation::Relu => {
                if x > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                F::one() - t * t
            }
            Activation::Identity => F::one(),
        }
    }
}

/// Valid 2-D correlation of a sentence matrix with one filter spanning the
/// full embedding width: `out[j] = b + sum(A[j..j+h, :] * w)`.
pub fn convolve<F: Real>(a: &Matrix<F>, w: &Matrix<F>, b: F) -> Result<Vec<F>> {
    ensure!(
        a.cols() == w.cols(),
        "filter width {} does not match embedding width {}",
        w.cols(),
        a.cols()
    );
    ensure!(w.rows() >= 1, "filter height must be positive");
    ensure!(
        a.rows() >= w.rows(),
        "sentence of length {} is shorter than filter height {}",
        a.rows(),
        w.rows()
    );
    let mut out = Vec::with_capacity(a.rows() - w.rows() + 1);
    convolve_into(a, w.data(), w.rows(), b, &mut out);
    Ok(out)
}

/// Shape-unchecked kernel behind [`convolve`]. Rows of a row-major matrix
/// are contiguous, so each window is one slice of `h * d` values.
#[inline]
pub(crate) fn convolve_into<F: Real>(a: &Matrix<F>, w: &[F], h: usize, b: F, out: &mut Vec<F>) {
    out.clear();
    for j in 0..=a.rows() - h {
        out.push(b + dot(w, a.row_block(j, h)));
    }
}

pub fn activate<F: Real>(c: &[F], kind: Activation) -> Vec<F> {
    c.iter().map(|&x| kind.apply(x)).collect()
}

/// Largest value and the first index attaining it.
pub fn max_pool_1<F: Real>(c: &[F]) -> Result<(F, usize)> {
    ensure!(!c.is_empty(), "max pooling over an empty feature map");
    Ok(first_max(c))
}

#[inline]
pub(crate) fn first_max<F: Real>(c: &[F]) -> (F, usize) {
    let mut best = (c[0], 0);
    for (i, &v) in c.iter().enumerate().skip(1) {
        if v > best.0 {
            best = (v, i);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn convolution_examples() {
        let a = Matrix::new(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let w = Matrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(convolve(&a, &w, 0.0).unwrap(), [5.0, 9.0]);
        let zeros = Matrix::zeros(2, 2);
        assert_eq!(convolve(&a, &zeros, 0.5).unwrap(), [0.5, 0.5]);
        let full = Matrix::new(3, 2, vec![1.0; 6]).unwrap();
        assert_eq!(convolve(&a, &full, 0.0).unwrap(), [21.0]);
        let tall = Matrix::zeros(4, 2);
        assert!(convolve(&a, &tall, 0.0).is_err());
        assert!(convolve(&a, &Matrix::zeros(2, 3), 0.0).is_err());
    }

    #[test]
    fn activation_examples() {
        assert_eq!(activate(&[-1.0, 2.0], Activation::Relu), [0.0, 2.0]);
        assert_eq!(activate(&[-1.5, 2.0], Activation::Identity), [-1.5, 2.0]);
        assert_eq!(activate(&[0.0], Activation::Tanh), [0.0]);
        assert_eq!(Activation::Relu.derivative(0.0), 0.0);
        assert_eq!(Activation::Tanh.derivative(0.0), 1.0);
    }

    #[test]
    fn pooling_examples() {
        assert_eq!(max_pool_1(&[5.0, 9.0]).unwrap(), (9.0, 1));
        assert_eq!(max_pool_1(&[7.0, 7.0]).unwrap(), (7.0, 0));
        assert_eq!(max_pool_1(&[-3.0]).unwrap(), (-3.0, 0));
        assert!(max_pool_1::<f64>(&[]).is_err());
    }
}
