//! Sequence learners built from scratch: LSTM, GRU, and 1D-CNN stacks with
//! dense heads, reverse-mode gradients through time, and Adam training.
//!
//! All three networks share one architecture: cell (30 units) -> ReLU ->
//! dropout -> cell (30) -> ReLU -> dropout -> dense (100, ReLU) -> dense
//! (linear output). The convolutional variant drops the dropout layers.
//! Networks map acceleration channels to load channels sequence-to-sequence
//! with aligned time steps.

pub mod adam;
pub mod conv;
pub mod dense;
pub mod gru;
pub mod lstm;
mod train;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use conv::{conv1d_backward, conv1d_forward, Conv1dParams};
pub use dense::{
    dense_backward_seq, dense_forward, dense_forward_seq, dropout_backward, dropout_forward,
    mse_grad, mse_loss, relu_backward, relu_forward, Activation, DenseParams,
};
pub use gru::{gru_backward_seq, gru_cell_forward, gru_forward_seq, GruParams};
pub use lstm::{lstm_backward_seq, lstm_cell_forward, lstm_forward_seq, LstmParams};
pub use train::{predict_load, train, Normalization, TrainReport, TrainedNetwork};

/// Uniform init on +-sqrt(6 / (fan_in + fan_out)); biases stay zero.
pub(crate) fn glorot_fill(m: &mut DMatrix<f64>, rng: &mut impl Rng) {
    let limit = (6.0 / (m.nrows() + m.ncols()) as f64).sqrt();
    m.apply(|v| *v = rng.gen_range(-limit..limit));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Lstm,
    Gru,
    Conv,
}

impl CellKind {
    pub fn name(&self) -> &'static str {
        match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
            CellKind::Conv => "conv",
        }
    }
}

impl std::str::FromStr for CellKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            "conv" => Ok(CellKind::Conv),
            other => Err(Error::InvalidConfig(format!("unknown cell kind {other}"))),
        }
    }
}

/// Architecture and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub cell: CellKind,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Cell units per layer.
    pub units: usize,
    /// Width of the dense hidden layer.
    pub dense_width: usize,
    /// Dropout rate for the recurrent variants; forced off for conv.
    pub dropout_rate: f64,
    /// Kernel width for the conv variant.
    pub kernel_width: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Early-stop patience in epochs without validation improvement.
    pub patience: usize,
    pub seed: u64,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if self.in_channels == 0
            || self.out_channels == 0
            || self.units == 0
            || self.dense_width == 0
            || self.kernel_width == 0
            || self.batch_size == 0
        {
            return Err(Error::InvalidConfig("zero-sized network dimension".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        Ok(())
    }

    /// Dropout is removed in the conv case.
    pub fn effective_dropout(&self) -> f64 {
        match self.cell {
            CellKind::Conv => 0.0,
            _ => self.dropout_rate,
        }
    }
}

/// Parameters of one cell layer.
#[derive(Debug, Clone, PartialEq)]
pub enum CellParams {
    Lstm(LstmParams),
    Gru(GruParams),
    Conv(Conv1dParams),
}

pub enum CellTape {
    Lstm(lstm::LstmTape),
    Gru(gru::GruTape),
    Conv(conv::ConvTape),
}

impl CellParams {
    fn zeros_like(&self) -> Self {
        match self {
            CellParams::Lstm(p) => CellParams::Lstm(LstmParams::zeros(p.hidden(), p.input())),
            CellParams::Gru(p) => CellParams::Gru(GruParams::zeros(p.hidden(), p.input())),
            CellParams::Conv(p) => CellParams::Conv(Conv1dParams::zeros(
                p.out_channels(),
                p.in_channels(),
                p.width(),
                p.activation,
            )),
        }
    }

    fn forward(&self, x: &DMatrix<f64>) -> (DMatrix<f64>, CellTape) {
        match self {
            CellParams::Lstm(p) => {
                let (y, tape) = lstm_forward_seq(p, x);
                (y, CellTape::Lstm(tape))
            }
            CellParams::Gru(p) => {
                let (y, tape) = gru_forward_seq(p, x);
                (y, CellTape::Gru(tape))
            }
            CellParams::Conv(p) => {
                let (y, tape) = conv1d_forward(x, p);
                (y, CellTape::Conv(tape))
            }
        }
    }

    fn backward(
        &self,
        tape: &CellTape,
        d_out: &DMatrix<f64>,
        grads: &mut CellParams,
    ) -> DMatrix<f64> {
        match (self, tape, grads) {
            (CellParams::Lstm(p), CellTape::Lstm(t), CellParams::Lstm(g)) => {
                lstm_backward_seq(p, t, d_out, g)
            }
            (CellParams::Gru(p), CellTape::Gru(t), CellParams::Gru(g)) => {
                gru_backward_seq(p, t, d_out, g)
            }
            (CellParams::Conv(p), CellTape::Conv(t), CellParams::Conv(g)) => {
                conv1d_backward(p, t, d_out, g)
            }
            _ => unreachable!("cell kind mismatch between params, tape, and grads"),
        }
    }

    fn in_dim(&self) -> usize {
        match self {
            CellParams::Lstm(p) => p.input(),
            CellParams::Gru(p) => p.input(),
            CellParams::Conv(p) => p.in_channels(),
        }
    }

    fn push_flat(&self, out: &mut Vec<f64>) {
        match self {
            CellParams::Lstm(p) => {
                for m in [
                    &p.w_f, &p.w_i, &p.w_o, &p.w_c, &p.u_f, &p.u_i, &p.u_o, &p.u_c,
                ] {
                    out.extend(m.iter());
                }
                for b in [&p.b_f, &p.b_i, &p.b_o, &p.b_c] {
                    out.extend(b.iter());
                }
            }
            CellParams::Gru(p) => {
                for m in [&p.w_z, &p.w_r, &p.w_h] {
                    out.extend(m.iter());
                }
                for b in [&p.b_z, &p.b_r, &p.b_h] {
                    out.extend(b.iter());
                }
            }
            CellParams::Conv(p) => {
                for k in &p.kernels {
                    out.extend(k.iter());
                }
                out.extend(p.biases.iter());
            }
        }
    }

    fn read_flat(&mut self, it: &mut std::slice::Iter<'_, f64>) {
        let mut fill = |dst: &mut [f64]| {
            for v in dst {
                *v = *it.next().expect("flat vector long enough");
            }
        };
        match self {
            CellParams::Lstm(p) => {
                for m in [
                    &mut p.w_f, &mut p.w_i, &mut p.w_o, &mut p.w_c, &mut p.u_f, &mut p.u_i,
                    &mut p.u_o, &mut p.u_c,
                ] {
                    fill(m.as_mut_slice());
                }
                for b in [&mut p.b_f, &mut p.b_i, &mut p.b_o, &mut p.b_c] {
                    fill(b.as_mut_slice());
                }
            }
            CellParams::Gru(p) => {
                for m in [&mut p.w_z, &mut p.w_r, &mut p.w_h] {
                    fill(m.as_mut_slice());
                }
                for b in [&mut p.b_z, &mut p.b_r, &mut p.b_h] {
                    fill(b.as_mut_slice());
                }
            }
            CellParams::Conv(p) => {
                for k in &mut p.kernels {
                    fill(k.as_mut_slice());
                }
                fill(p.biases.as_mut_slice());
            }
        }
    }
}

/// The full identification network. Doubles as its own gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub cell1: CellParams,
    pub cell2: CellParams,
    pub dense_hidden: DenseParams,
    pub dense_out: DenseParams,
}

pub struct NetworkTape {
    cell1: CellTape,
    h1: DMatrix<f64>,
    mask1: Option<DMatrix<f64>>,
    cell2: CellTape,
    h2: DMatrix<f64>,
    mask2: Option<DMatrix<f64>>,
    dense_h: dense::DenseTape,
    dense_o: dense::DenseTape,
}

impl Network {
    /// Builds and initializes the stack from the config's init sub-stream.
    pub fn init(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seeding::rng_for(config.seed, "init", 0);
        let make_cell = |input: usize, rng: &mut rand_chacha::ChaCha8Rng| -> CellParams {
            match config.cell {
                CellKind::Lstm => CellParams::Lstm(LstmParams::init(config.units, input, rng)),
                CellKind::Gru => CellParams::Gru(GruParams::init(config.units, input, rng)),
                CellKind::Conv => CellParams::Conv(Conv1dParams::init(
                    config.units,
                    input,
                    config.kernel_width,
                    Activation::Linear,
                    rng,
                )),
            }
        };
        let cell1 = make_cell(config.in_channels, &mut rng);
        let cell2 = make_cell(config.units, &mut rng);
        let dense_hidden =
            DenseParams::init(config.dense_width, config.units, Activation::Relu, &mut rng);
        let dense_out = DenseParams::init(
            config.out_channels,
            config.dense_width,
            Activation::Linear,
            &mut rng,
        );
        Ok(Self {
            cell1,
            cell2,
            dense_hidden,
            dense_out,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            cell1: self.cell1.zeros_like(),
            cell2: self.cell2.zeros_like(),
            dense_hidden: DenseParams::zeros(
                self.dense_hidden.w.nrows(),
                self.dense_hidden.w.ncols(),
                self.dense_hidden.activation,
            ),
            dense_out: DenseParams::zeros(
                self.dense_out.w.nrows(),
                self.dense_out.w.ncols(),
                self.dense_out.activation,
            ),
        }
    }

    /// Sequence-to-sequence pass through the stack. `dropout_seed` fixes the
    /// dropout masks, so a repeated call replays them exactly.
    pub fn forward(
        &self,
        config: &NetworkConfig,
        x: &DMatrix<f64>,
        training: bool,
        dropout_seed: u64,
    ) -> Result<(DMatrix<f64>, NetworkTape)> {
        if x.nrows() != self.cell1.in_dim() {
            return Err(Error::ShapeMismatch {
                layer: "cell1".into(),
                detail: format!(
                    "input has {} channels, layer expects {}",
                    x.nrows(),
                    self.cell1.in_dim()
                ),
            });
        }
        if x.ncols() == 0 {
            return Err(Error::ShapeMismatch {
                layer: "input".into(),
                detail: "empty sequence".into(),
            });
        }
        let rate = config.effective_dropout();
        let mut drop_rng = seeding::rng_for(dropout_seed, "dropout-masks", 0);

        let (h1, cell1_tape) = self.cell1.forward(x);
        let r1 = relu_forward(&h1);
        let (d1, mask1) = dropout_forward(&r1, rate, training, &mut drop_rng);

        let (h2, cell2_tape) = self.cell2.forward(&d1);
        let r2 = relu_forward(&h2);
        let (d2, mask2) = dropout_forward(&r2, rate, training, &mut drop_rng);

        let (y1, dense_h_tape) = dense_forward_seq(&self.dense_hidden, &d2);
        let (y, dense_o_tape) = dense_forward_seq(&self.dense_out, &y1);
        Ok((
            y,
            NetworkTape {
                cell1: cell1_tape,
                h1,
                mask1,
                cell2: cell2_tape,
                h2,
                mask2,
                dense_h: dense_h_tape,
                dense_o: dense_o_tape,
            },
        ))
    }

    /// Exact reverse-mode gradients of the loss with respect to every
    /// parameter; dropout masks are replayed from the tape.
    pub fn backward(&self, tape: &NetworkTape, d_y: &DMatrix<f64>) -> Network {
        let mut grads = self.zeros_like();
        let d_y1 = dense_backward_seq(&self.dense_out, &tape.dense_o, d_y, &mut grads.dense_out);
        let d_d2 =
            dense_backward_seq(&self.dense_hidden, &tape.dense_h, &d_y1, &mut grads.dense_hidden);
        let d_r2 = dropout_backward(&d_d2, &tape.mask2);
        let d_h2 = relu_backward(&tape.h2, &d_r2);
        let d_d1 = self.cell2.backward(&tape.cell2, &d_h2, &mut grads.cell2);
        let d_r1 = dropout_backward(&d_d1, &tape.mask1);
        let d_h1 = relu_backward(&tape.h1, &d_r1);
        let _dx = self.cell1.backward(&tape.cell1, &d_h1, &mut grads.cell1);
        grads
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.cell1.push_flat(&mut out);
        self.cell2.push_flat(&mut out);
        for p in [&self.dense_hidden, &self.dense_out] {
            out.extend(p.w.iter());
            out.extend(p.b.iter());
        }
        out
    }

    pub fn from_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        self.cell1.read_flat(&mut it);
        self.cell2.read_flat(&mut it);
        for p in [&mut self.dense_hidden, &mut self.dense_out] {
            for v in p.w.as_mut_slice() {
                *v = *it.next().expect("flat vector long enough");
            }
            for v in p.b.as_mut_slice() {
                *v = *it.next().expect("flat vector long enough");
            }
        }
        assert!(it.next().is_none(), "flat vector too long");
    }

    pub fn param_count(&self) -> usize {
        self.to_flat().len()
    }
}
