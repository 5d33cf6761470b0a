//! GRU cell: forward recurrence and backpropagation through time.
//!
//! The weight matrices act on the concatenation `[h_prev, x]` (hidden part
//! first), and the candidate uses `[r .* h_prev, x]`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    /// Update gate, `h x (h + d)`.
    pub w_z: DMatrix<f64>,
    /// Reset gate, `h x (h + d)`.
    pub w_r: DMatrix<f64>,
    /// Candidate, `h x (h + d)`.
    pub w_h: DMatrix<f64>,
    pub b_z: DVector<f64>,
    pub b_r: DVector<f64>,
    pub b_h: DVector<f64>,
}

impl GruParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        Self {
            w_z: DMatrix::zeros(hidden, hidden + input),
            w_r: DMatrix::zeros(hidden, hidden + input),
            w_h: DMatrix::zeros(hidden, hidden + input),
            b_z: DVector::zeros(hidden),
            b_r: DVector::zeros(hidden),
            b_h: DVector::zeros(hidden),
        }
    }

    pub fn init(hidden: usize, input: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(hidden, input);
        for w in [&mut p.w_z, &mut p.w_r, &mut p.w_h] {
            super::glorot_fill(w, rng);
        }
        p
    }

    pub fn hidden(&self) -> usize {
        self.w_z.nrows()
    }

    pub fn input(&self) -> usize {
        self.w_z.ncols() - self.w_z.nrows()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn concat(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}

/// One step: update gate z, reset gate r, candidate from the reset-gated
/// state, then the convex combination `h = (1 - z) .* h_prev + z .* h_cand`.
pub fn gru_cell_forward(x_t: &DVector<f64>, h_prev: &DVector<f64>, p: &GruParams) -> DVector<f64> {
    let hx = concat(h_prev, x_t);
    let z = (&p.w_z * &hx + &p.b_z).map(sigmoid);
    let r = (&p.w_r * &hx + &p.b_r).map(sigmoid);
    let rhx = concat(&r.component_mul(h_prev), x_t);
    let g = (&p.w_h * &rhx + &p.b_h).map(f64::tanh);
    let ones = DVector::from_element(z.len(), 1.0);
    (&ones - &z).component_mul(h_prev) + z.component_mul(&g)
}

pub struct GruTape {
    pub x: DMatrix<f64>,
    pub h_prev: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

pub fn gru_forward_seq(p: &GruParams, x: &DMatrix<f64>) -> (DMatrix<f64>, GruTape) {
    let h_dim = p.hidden();
    let t_len = x.ncols();
    let mut tape = GruTape {
        x: x.clone(),
        h_prev: DMatrix::zeros(h_dim, t_len),
        z: DMatrix::zeros(h_dim, t_len),
        r: DMatrix::zeros(h_dim, t_len),
        g: DMatrix::zeros(h_dim, t_len),
    };
    let mut out = DMatrix::zeros(h_dim, t_len);
    let mut h = DVector::zeros(h_dim);
    for t in 0..t_len {
        let x_t = x.column(t).clone_owned();
        tape.h_prev.column_mut(t).copy_from(&h);
        let hx = concat(&h, &x_t);
        let z = (&p.w_z * &hx + &p.b_z).map(sigmoid);
        let r = (&p.w_r * &hx + &p.b_r).map(sigmoid);
        let rhx = concat(&r.component_mul(&h), &x_t);
        let g = (&p.w_h * &rhx + &p.b_h).map(f64::tanh);
        let mut h_new = DVector::zeros(h_dim);
        for i in 0..h_dim {
            h_new[i] = (1.0 - z[i]) * h[i] + z[i] * g[i];
        }
        tape.z.column_mut(t).copy_from(&z);
        tape.r.column_mut(t).copy_from(&r);
        tape.g.column_mut(t).copy_from(&g);
        out.column_mut(t).copy_from(&h_new);
        h = h_new;
    }
    (out, tape)
}

pub fn gru_backward_seq(
    p: &GruParams,
    tape: &GruTape,
    d_out: &DMatrix<f64>,
    grads: &mut GruParams,
) -> DMatrix<f64> {
    let h_dim = p.hidden();
    let d_in = p.input();
    let t_len = d_out.ncols();
    let mut dx = DMatrix::zeros(d_in, t_len);
    let mut dh_next = DVector::zeros(h_dim);
    let wz_h = p.w_z.columns(0, h_dim).clone_owned();
    let wz_x = p.w_z.columns(h_dim, d_in).clone_owned();
    let wr_h = p.w_r.columns(0, h_dim).clone_owned();
    let wr_x = p.w_r.columns(h_dim, d_in).clone_owned();
    let wh_h = p.w_h.columns(0, h_dim).clone_owned();
    let wh_x = p.w_h.columns(h_dim, d_in).clone_owned();
    for t in (0..t_len).rev() {
        let dh = d_out.column(t) + &dh_next;
        let z = tape.z.column(t);
        let r = tape.r.column(t);
        let g = tape.g.column(t);
        let h_prev = tape.h_prev.column(t).clone_owned();
        let x_t = tape.x.column(t).clone_owned();

        let mut da_z = DVector::zeros(h_dim);
        let mut da_g = DVector::zeros(h_dim);
        let mut dh_prev = DVector::zeros(h_dim);
        for i in 0..h_dim {
            da_z[i] = dh[i] * (g[i] - h_prev[i]) * z[i] * (1.0 - z[i]);
            da_g[i] = dh[i] * z[i] * (1.0 - g[i] * g[i]);
            dh_prev[i] = dh[i] * (1.0 - z[i]);
        }
        // candidate path: d(r .* h_prev) = W_h^h' da_g
        let drh = wh_h.transpose() * &da_g;
        let mut da_r = DVector::zeros(h_dim);
        for i in 0..h_dim {
            da_r[i] = drh[i] * h_prev[i] * r[i] * (1.0 - r[i]);
            dh_prev[i] += drh[i] * r[i];
        }
        dh_prev += wz_h.transpose() * &da_z + wr_h.transpose() * &da_r;
        let dxt = wz_x.transpose() * &da_z + wr_x.transpose() * &da_r + wh_x.transpose() * &da_g;
        dx.column_mut(t).copy_from(&dxt);

        let hx = concat(&h_prev, &x_t);
        let rh = r.component_mul(&h_prev);
        let rhx = concat(&rh, &x_t);
        grads.w_z += &da_z * hx.transpose();
        grads.w_r += &da_r * hx.transpose();
        grads.w_h += &da_g * rhx.transpose();
        grads.b_z += &da_z;
        grads.b_r += &da_r;
        grads.b_h += &da_g;

        dh_next = dh_prev;
    }
    dx
}
