//! 1D convolution over multi-channel sequences.
//!
//! Output position `i` sums the window `x[.., i..i+m]` with zero padding past
//! the end of the sequence, so the output keeps the input length.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::dense::Activation;

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1dParams {
    /// One `in_channels x m` kernel per output channel.
    pub kernels: Vec<DMatrix<f64>>,
    pub biases: DVector<f64>,
    pub activation: Activation,
}

impl Conv1dParams {
    pub fn zeros(out_channels: usize, in_channels: usize, width: usize, activation: Activation) -> Self {
        Self {
            kernels: (0..out_channels)
                .map(|_| DMatrix::zeros(in_channels, width))
                .collect(),
            biases: DVector::zeros(out_channels),
            activation,
        }
    }

    pub fn init(
        out_channels: usize,
        in_channels: usize,
        width: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let mut p = Self::zeros(out_channels, in_channels, width, activation);
        for k in &mut p.kernels {
            super::glorot_fill(k, rng);
        }
        p
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.len()
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.first().map_or(0, |k| k.nrows())
    }

    pub fn width(&self) -> usize {
        self.kernels.first().map_or(0, |k| k.ncols())
    }
}

pub struct ConvTape {
    pub x: DMatrix<f64>,
    /// Pre-activation outputs.
    pub z: DMatrix<f64>,
}

/// `h[oc][i] = f(sum_ic sum_j k[oc][ic][j] x[ic][i+j] + b[oc])`.
pub fn conv1d_forward(x: &DMatrix<f64>, p: &Conv1dParams) -> (DMatrix<f64>, ConvTape) {
    let t_len = x.ncols();
    let m = p.width();
    let out_ch = p.out_channels();
    let mut z = DMatrix::zeros(out_ch, t_len);
    for (oc, kernel) in p.kernels.iter().enumerate() {
        for i in 0..t_len {
            let mut acc = p.biases[oc];
            let j_max = m.min(t_len - i);
            for j in 0..j_max {
                for ic in 0..kernel.nrows() {
                    acc += kernel[(ic, j)] * x[(ic, i + j)];
                }
            }
            z[(oc, i)] = acc;
        }
    }
    let mut y = z.clone();
    y.apply(|v| *v = p.activation.apply(*v));
    (y, ConvTape { x: x.clone(), z })
}

pub fn conv1d_backward(
    p: &Conv1dParams,
    tape: &ConvTape,
    d_out: &DMatrix<f64>,
    grads: &mut Conv1dParams,
) -> DMatrix<f64> {
    let t_len = tape.x.ncols();
    let in_ch = p.in_channels();
    let m = p.width();
    let mut dx = DMatrix::zeros(in_ch, t_len);
    for (oc, kernel) in p.kernels.iter().enumerate() {
        for i in 0..t_len {
            let da = d_out[(oc, i)] * p.activation.deriv(tape.z[(oc, i)]);
            if da == 0.0 {
                continue;
            }
            grads.biases[oc] += da;
            let j_max = m.min(t_len - i);
            for j in 0..j_max {
                for ic in 0..in_ch {
                    grads.kernels[oc][(ic, j)] += da * tape.x[(ic, i + j)];
                    dx[(ic, i + j)] += da * kernel[(ic, j)];
                }
            }
        }
    }
    dx
}
