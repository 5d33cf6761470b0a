//! LSTM cell: forward recurrence and backpropagation through time.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Per-gate weights `W_* (h x d)`, recurrent weights `U_* (h x h)`, and
/// biases. Gate order: forget, input, output, candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_f: DMatrix<f64>,
    pub w_i: DMatrix<f64>,
    pub w_o: DMatrix<f64>,
    pub w_c: DMatrix<f64>,
    pub u_f: DMatrix<f64>,
    pub u_i: DMatrix<f64>,
    pub u_o: DMatrix<f64>,
    pub u_c: DMatrix<f64>,
    pub b_f: DVector<f64>,
    pub b_i: DVector<f64>,
    pub b_o: DVector<f64>,
    pub b_c: DVector<f64>,
}

impl LstmParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        Self {
            w_f: DMatrix::zeros(hidden, input),
            w_i: DMatrix::zeros(hidden, input),
            w_o: DMatrix::zeros(hidden, input),
            w_c: DMatrix::zeros(hidden, input),
            u_f: DMatrix::zeros(hidden, hidden),
            u_i: DMatrix::zeros(hidden, hidden),
            u_o: DMatrix::zeros(hidden, hidden),
            u_c: DMatrix::zeros(hidden, hidden),
            b_f: DVector::zeros(hidden),
            b_i: DVector::zeros(hidden),
            b_o: DVector::zeros(hidden),
            b_c: DVector::zeros(hidden),
        }
    }

    pub fn init(hidden: usize, input: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(hidden, input);
        for w in [&mut p.w_f, &mut p.w_i, &mut p.w_o, &mut p.w_c] {
            super::glorot_fill(w, rng);
        }
        for u in [&mut p.u_f, &mut p.u_i, &mut p.u_o, &mut p.u_c] {
            super::glorot_fill(u, rng);
        }
        p
    }

    pub fn hidden(&self) -> usize {
        self.w_f.nrows()
    }

    pub fn input(&self) -> usize {
        self.w_f.ncols()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One step of the gated recurrence: returns `(h_t, c_t)`.
pub fn lstm_cell_forward(
    x_t: &DVector<f64>,
    h_prev: &DVector<f64>,
    c_prev: &DVector<f64>,
    p: &LstmParams,
) -> (DVector<f64>, DVector<f64>) {
    let f = (&p.w_f * x_t + &p.u_f * h_prev + &p.b_f).map(sigmoid);
    let i = (&p.w_i * x_t + &p.u_i * h_prev + &p.b_i).map(sigmoid);
    let o = (&p.w_o * x_t + &p.u_o * h_prev + &p.b_o).map(sigmoid);
    let g = (&p.w_c * x_t + &p.u_c * h_prev + &p.b_c).map(f64::tanh);
    let c = f.component_mul(c_prev) + i.component_mul(&g);
    let h = o.component_mul(&c.map(f64::tanh));
    (h, c)
}

/// Stored activations for the backward pass, one column per time step.
pub struct LstmTape {
    pub x: DMatrix<f64>,
    pub h_prev: DMatrix<f64>,
    pub c_prev: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub i: DMatrix<f64>,
    pub o: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub tanh_c: DMatrix<f64>,
}

/// Runs the cell over a `d x T` sequence from zero initial state, recording
/// the tape.
pub fn lstm_forward_seq(p: &LstmParams, x: &DMatrix<f64>) -> (DMatrix<f64>, LstmTape) {
    let h_dim = p.hidden();
    let t_len = x.ncols();
    let mut tape = LstmTape {
        x: x.clone(),
        h_prev: DMatrix::zeros(h_dim, t_len),
        c_prev: DMatrix::zeros(h_dim, t_len),
        f: DMatrix::zeros(h_dim, t_len),
        i: DMatrix::zeros(h_dim, t_len),
        o: DMatrix::zeros(h_dim, t_len),
        g: DMatrix::zeros(h_dim, t_len),
        tanh_c: DMatrix::zeros(h_dim, t_len),
    };
    let mut out = DMatrix::zeros(h_dim, t_len);
    let mut h = DVector::zeros(h_dim);
    let mut c = DVector::zeros(h_dim);
    for t in 0..t_len {
        let x_t = x.column(t).clone_owned();
        tape.h_prev.column_mut(t).copy_from(&h);
        tape.c_prev.column_mut(t).copy_from(&c);
        let f = (&p.w_f * &x_t + &p.u_f * &h + &p.b_f).map(sigmoid);
        let i = (&p.w_i * &x_t + &p.u_i * &h + &p.b_i).map(sigmoid);
        let o = (&p.w_o * &x_t + &p.u_o * &h + &p.b_o).map(sigmoid);
        let g = (&p.w_c * &x_t + &p.u_c * &h + &p.b_c).map(f64::tanh);
        c = f.component_mul(&c) + i.component_mul(&g);
        let tanh_c = c.map(f64::tanh);
        h = o.component_mul(&tanh_c);
        tape.f.column_mut(t).copy_from(&f);
        tape.i.column_mut(t).copy_from(&i);
        tape.o.column_mut(t).copy_from(&o);
        tape.g.column_mut(t).copy_from(&g);
        tape.tanh_c.column_mut(t).copy_from(&tanh_c);
        out.column_mut(t).copy_from(&h);
    }
    (out, tape)
}

/// Unrolls the gradients through time. `d_out` is dL/dh per step; parameter
/// gradients accumulate into `grads`; returns dL/dx.
pub fn lstm_backward_seq(
    p: &LstmParams,
    tape: &LstmTape,
    d_out: &DMatrix<f64>,
    grads: &mut LstmParams,
) -> DMatrix<f64> {
    let h_dim = p.hidden();
    let t_len = d_out.ncols();
    let mut dx = DMatrix::zeros(p.input(), t_len);
    let mut dh_next = DVector::zeros(h_dim);
    let mut dc_next = DVector::zeros(h_dim);
    for t in (0..t_len).rev() {
        let dh = d_out.column(t) + &dh_next;
        let o = tape.o.column(t);
        let f = tape.f.column(t);
        let i = tape.i.column(t);
        let g = tape.g.column(t);
        let tanh_c = tape.tanh_c.column(t);
        let c_prev = tape.c_prev.column(t);
        let h_prev = tape.h_prev.column(t).clone_owned();
        let x_t = tape.x.column(t).clone_owned();

        // dL/dc through h = o * tanh(c), plus the carry from t+1
        let mut dc = DVector::zeros(h_dim);
        for r in 0..h_dim {
            dc[r] = dh[r] * o[r] * (1.0 - tanh_c[r] * tanh_c[r]) + dc_next[r];
        }
        let mut da_f = DVector::zeros(h_dim);
        let mut da_i = DVector::zeros(h_dim);
        let mut da_o = DVector::zeros(h_dim);
        let mut da_g = DVector::zeros(h_dim);
        for r in 0..h_dim {
            da_f[r] = dc[r] * c_prev[r] * f[r] * (1.0 - f[r]);
            da_i[r] = dc[r] * g[r] * i[r] * (1.0 - i[r]);
            da_o[r] = dh[r] * tanh_c[r] * o[r] * (1.0 - o[r]);
            da_g[r] = dc[r] * i[r] * (1.0 - g[r] * g[r]);
        }

        grads.w_f += &da_f * x_t.transpose();
        grads.w_i += &da_i * x_t.transpose();
        grads.w_o += &da_o * x_t.transpose();
        grads.w_c += &da_g * x_t.transpose();
        grads.u_f += &da_f * h_prev.transpose();
        grads.u_i += &da_i * h_prev.transpose();
        grads.u_o += &da_o * h_prev.transpose();
        grads.u_c += &da_g * h_prev.transpose();
        grads.b_f += &da_f;
        grads.b_i += &da_i;
        grads.b_o += &da_o;
        grads.b_c += &da_g;

        let dxt = p.w_f.transpose() * &da_f
            + p.w_i.transpose() * &da_i
            + p.w_o.transpose() * &da_o
            + p.w_c.transpose() * &da_g;
        dx.column_mut(t).copy_from(&dxt);

        dh_next = p.u_f.transpose() * &da_f
            + p.u_i.transpose() * &da_i
            + p.u_o.transpose() * &da_o
            + p.u_c.transpose() * &da_g;
        dc_next = dc.component_mul(&f.clone_owned());
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn zero_params_half_gates() {
        // all parameters zero: f = i = o = 0.5, c = 0.5 c_prev,
        // h = 0.5 tanh(0.5 c_prev)
        let p = LstmParams::zeros(3, 2);
        let x = DVector::from_column_slice(&[1.0, -1.0]);
        let c_prev = DVector::from_column_slice(&[0.4, -0.2, 1.0]);
        let h_prev = DVector::from_column_slice(&[0.1, 0.2, 0.3]);
        let (h, c) = lstm_cell_forward(&x, &h_prev, &c_prev, &p);
        for r in 0..3 {
            assert_relative_eq!(c[r], 0.5 * c_prev[r], max_relative = 1e-15);
            assert_relative_eq!(h[r], 0.5 * (0.5 * c_prev[r]).tanh(), max_relative = 1e-15);
        }
    }

    #[test]
    fn zero_params_zero_cell_state() {
        let p = LstmParams::zeros(2, 2);
        let zero = DVector::zeros(2);
        let (h, c) = lstm_cell_forward(&DVector::from_element(2, 3.0), &zero, &zero, &p);
        assert_eq!(h.amax(), 0.0);
        assert_eq!(c.amax(), 0.0);
    }

    /// Direct transcription of the cell equations, written independently of
    /// the implementation above: scalar loops, no shared helpers.
    fn reference_cell(
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
        p: &LstmParams,
    ) -> (Vec<f64>, Vec<f64>) {
        let h_dim = p.hidden();
        let act = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut h = vec![0.0; h_dim];
        let mut c = vec![0.0; h_dim];
        for r in 0..h_dim {
            let mut af = p.b_f[r];
            let mut ai = p.b_i[r];
            let mut ao = p.b_o[r];
            let mut ag = p.b_c[r];
            for (j, xv) in x.iter().enumerate() {
                af += p.w_f[(r, j)] * xv;
                ai += p.w_i[(r, j)] * xv;
                ao += p.w_o[(r, j)] * xv;
                ag += p.w_c[(r, j)] * xv;
            }
            for (j, hv) in h_prev.iter().enumerate() {
                af += p.u_f[(r, j)] * hv;
                ai += p.u_i[(r, j)] * hv;
                ao += p.u_o[(r, j)] * hv;
                ag += p.u_c[(r, j)] * hv;
            }
            let (f, i, o, g) = (act(af), act(ai), act(ao), ag.tanh());
            c[r] = f * c_prev[r] + i * g;
            h[r] = o * c[r].tanh();
        }
        (h, c)
    }

    #[test]
    fn matches_independent_transcription() {
        let mut rng = seeding::rng_for(7, "lstm-dual", 0);
        let p = LstmParams::init(4, 3, &mut rng);
        let x = DVector::from_fn(3, |_, _| rng.gen::<f64>() - 0.5);
        let h_prev = DVector::from_fn(4, |_, _| rng.gen::<f64>() - 0.5);
        let c_prev = DVector::from_fn(4, |_, _| rng.gen::<f64>() - 0.5);
        let (h, c) = lstm_cell_forward(&x, &h_prev, &c_prev, &p);
        let (h_ref, c_ref) = reference_cell(x.as_slice(), h_prev.as_slice(), c_prev.as_slice(), &p);
        for r in 0..4 {
            assert_relative_eq!(h[r], h_ref[r], max_relative = 1e-13);
            assert_relative_eq!(c[r], c_ref[r], max_relative = 1e-13);
        }
    }

    #[test]
    fn sequence_forward_matches_cell_steps() {
        let mut rng = seeding::rng_for(8, "lstm-seq", 0);
        let p = LstmParams::init(3, 2, &mut rng);
        let x = DMatrix::from_fn(2, 5, |_, _| rng.gen::<f64>() - 0.5);
        let (out, _) = lstm_forward_seq(&p, &x);
        let mut h = DVector::zeros(3);
        let mut c = DVector::zeros(3);
        for t in 0..5 {
            let (h2, c2) = lstm_cell_forward(&x.column(t).clone_owned(), &h, &c, &p);
            h = h2;
            c = c2;
            assert_relative_eq!(out.column(t).clone_owned(), h, max_relative = 1e-14);
        }
    }
}
