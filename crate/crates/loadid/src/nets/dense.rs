//! Dense layers, activations, dropout, and the MSE loss.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Relu => x.max(0.0),
        }
    }

    #[inline]
    pub fn deriv(self, x: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Affine map plus optional activation, applied per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
    pub activation: Activation,
}

impl DenseParams {
    pub fn zeros(out_dim: usize, in_dim: usize, activation: Activation) -> Self {
        Self {
            w: DMatrix::zeros(out_dim, in_dim),
            b: DVector::zeros(out_dim),
            activation,
        }
    }

    pub fn init(out_dim: usize, in_dim: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(out_dim, in_dim, activation);
        super::glorot_fill(&mut p.w, rng);
        p
    }
}

pub struct DenseTape {
    pub x: DMatrix<f64>,
    /// Pre-activation values.
    pub z: DMatrix<f64>,
}

/// Single-vector forward: `act(W x + b)`.
pub fn dense_forward(x: &DVector<f64>, p: &DenseParams) -> DVector<f64> {
    let mut z = &p.w * x + &p.b;
    z.apply(|v| *v = p.activation.apply(*v));
    z
}

/// Sequence forward over the columns of `x` (channels x T).
pub fn dense_forward_seq(p: &DenseParams, x: &DMatrix<f64>) -> (DMatrix<f64>, DenseTape) {
    let t_len = x.ncols();
    let mut z = DMatrix::zeros(p.w.nrows(), t_len);
    for t in 0..t_len {
        let col = &p.w * x.column(t) + &p.b;
        z.column_mut(t).copy_from(&col);
    }
    let mut y = z.clone();
    y.apply(|v| *v = p.activation.apply(*v));
    (y, DenseTape { x: x.clone(), z })
}

/// Accumulates parameter gradients into `grads`, returns the input gradient.
pub fn dense_backward_seq(
    p: &DenseParams,
    tape: &DenseTape,
    d_out: &DMatrix<f64>,
    grads: &mut DenseParams,
) -> DMatrix<f64> {
    let t_len = d_out.ncols();
    let mut dx = DMatrix::zeros(tape.x.nrows(), t_len);
    for t in 0..t_len {
        let mut da = d_out.column(t).clone_owned();
        for r in 0..da.len() {
            da[r] *= p.activation.deriv(tape.z[(r, t)]);
        }
        grads.w += &da * tape.x.column(t).transpose();
        grads.b += &da;
        dx.column_mut(t).copy_from(&(p.w.transpose() * da));
    }
    dx
}

/// Element-wise ReLU over a sequence; the input itself is the tape.
pub fn relu_forward(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.map(|v| v.max(0.0))
}

pub fn relu_backward(x: &DMatrix<f64>, d_out: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| {
        if x[(r, c)] > 0.0 {
            d_out[(r, c)]
        } else {
            0.0
        }
    })
}

/// Inverted dropout: zero each element with probability `rate`, scale
/// survivors by `1/(1 - rate)`. Inference is the identity.
pub fn dropout_forward(
    x: &DMatrix<f64>,
    rate: f64,
    training: bool,
    rng: &mut impl Rng,
) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
    if !training || rate == 0.0 {
        return (x.clone(), None);
    }
    let keep = 1.0 - rate;
    let mask = DMatrix::from_fn(x.nrows(), x.ncols(), |_, _| {
        if rng.gen::<f64>() >= rate {
            1.0 / keep
        } else {
            0.0
        }
    });
    (x.component_mul(&mask), Some(mask))
}

pub fn dropout_backward(d_out: &DMatrix<f64>, mask: &Option<DMatrix<f64>>) -> DMatrix<f64> {
    match mask {
        Some(m) => d_out.component_mul(m),
        None => d_out.clone(),
    }
}

/// `(1/N) sum (pred_i - truth_i)^2` over all elements.
pub fn mse_loss(pred: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    if pred.shape() != truth.shape() || pred.is_empty() {
        return Err(Error::LengthMismatch(format!(
            "mse over {:?} vs {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(truth.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

/// Gradient of [`mse_loss`] with respect to the predictions.
pub fn mse_grad(pred: &DMatrix<f64>, truth: &DMatrix<f64>) -> DMatrix<f64> {
    let n = pred.len() as f64;
    DMatrix::from_fn(pred.nrows(), pred.ncols(), |r, c| {
        2.0 * (pred[(r, c)] - truth[(r, c)]) / n
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;

    #[test]
    fn identity_dense() {
        let p = DenseParams {
            w: DMatrix::identity(3, 3),
            b: DVector::zeros(3),
            activation: Activation::Linear,
        };
        let x = DVector::from_column_slice(&[1.0, -2.0, 3.0]);
        assert_eq!(dense_forward(&x, &p), x);
    }

    #[test]
    fn relu_clamps_negatives() {
        let p = DenseParams {
            w: DMatrix::identity(2, 2),
            b: DVector::zeros(2),
            activation: Activation::Relu,
        };
        let y = dense_forward(&DVector::from_column_slice(&[-1.0, 2.0]), &p);
        assert_eq!(y.as_slice(), &[0.0, 2.0]);
    }

    #[test]
    fn dense_matches_naive_oracle() {
        let mut rng = seeding::rng_for(5, "dense-test", 0);
        let p = DenseParams::init(4, 3, Activation::Relu, &mut rng);
        let x = DVector::from_fn(3, |i, _| (i as f64 - 1.0) * 0.7);
        let y = dense_forward(&x, &p);
        for r in 0..4 {
            let mut acc = p.b[r];
            for c in 0..3 {
                acc += p.w[(r, c)] * x[c];
            }
            assert!((y[r] - acc.max(0.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn dropout_identity_cases() {
        let x = DMatrix::from_fn(5, 7, |r, c| (r * 7 + c) as f64);
        let mut rng = seeding::rng_for(0, "drop", 0);
        let (y, mask) = dropout_forward(&x, 0.0, true, &mut rng);
        assert_eq!(y, x);
        assert!(mask.is_none());
        let (y2, mask2) = dropout_forward(&x, 0.9, false, &mut rng);
        assert_eq!(y2, x);
        assert!(mask2.is_none());
    }

    #[test]
    fn dropout_statistics() {
        // rate 0.3 over 1e5 elements: zero fraction in [0.29, 0.31] and the
        // survivor scaling preserves the mean within 1%
        let x = DMatrix::from_element(200, 500, 1.0);
        let mut rng = seeding::rng_for(123, "drop-stats", 0);
        let (y, _) = dropout_forward(&x, 0.3, true, &mut rng);
        let zeros = y.iter().filter(|v| **v == 0.0).count() as f64 / y.len() as f64;
        assert!((0.29..=0.31).contains(&zeros), "zero fraction {zeros}");
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((mean - 1.0).abs() < 0.01, "survivor mean {mean}");
    }

    #[test]
    fn mse_examples() {
        let a = DMatrix::from_column_slice(1, 2, &[1.0, 2.0]);
        let z = DMatrix::zeros(1, 2);
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(mse_loss(&a, &z).unwrap(), 2.5);
        assert!(mse_loss(&DMatrix::zeros(0, 0), &DMatrix::zeros(0, 0)).is_err());
    }

    #[test]
    fn mse_matches_naive_oracle() {
        let mut rng = seeding::rng_for(9, "mse", 0);
        let p = DMatrix::from_fn(3, 11, |_, _| rng.gen::<f64>() - 0.5);
        let t = DMatrix::from_fn(3, 11, |_, _| rng.gen::<f64>() - 0.5);
        let mut acc = 0.0;
        for i in 0..p.len() {
            let d = p.as_slice()[i] - t.as_slice()[i];
            acc += d * d;
        }
        assert!((mse_loss(&p, &t).unwrap() - acc / 33.0).abs() < 1e-15);
    }
}
