//! Residual-based Kalman filter for joint input-state-parameter estimation.
//!
//! One causal pass per measurement sequence. Each step: (1) unmeasured
//! acceleration channels are filled with the previous step's estimated
//! accelerations; (2) online trapezoidal integrators advance the displacement
//! and velocity pseudo-measurements; (3) state prediction under zero-order
//! hold with the prior input estimate; (4) Kalman gain and state update
//! against the pseudo-measurements; (5) algebraic input recovery through the
//! system model, `u = M a + K y + C v`, with known input rows overwritten;
//! (6) acceleration re-estimation for the next step's channel filling;
//! (7) a residual-damped, regularized Gauss-Newton correction of the
//! stiffness/damping parameters; (8) re-discretization of the system with the
//! updated parameters.
//!
//! An optional first-order leak on the integrators (`detrend`, rad/s) bounds
//! the low-frequency drift of the pseudo-measurements under noisy
//! accelerations. Because the equations of motion are linear and
//! time-invariant, the parameter-update residual is evaluated on consistently
//! high-passed quantities (`a - 2w v - w^2 y` against the leaked integrals),
//! which keeps the leak from biasing the parameter estimates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{
    assemble_state_space, discretize, kc_from_theta_unchecked, matrices_from_theta,
    DiscreteStateSpace, ParameterVector, ShearBuildingSpec, SystemMatrices,
};
use crate::simulate::MeasurementSet;

/// Filter tuning and initial conditions.
#[derive(Debug, Clone)]
pub struct FilterConfig {
    /// Process-noise diagonal scale for `Q_d`.
    pub q_scale: f64,
    /// Observation-noise diagonal scale for `R_d`.
    pub r_scale: f64,
    /// Gauss-Newton regularization `lambda^2`.
    pub lambda2: f64,
    /// Residual damping exponent `mu`.
    pub mu: f64,
    /// Initial parameter estimate.
    pub theta0: ParameterVector,
    /// Initial state (length 2n).
    pub z0: DVector<f64>,
    /// Initial covariance diagonal scale.
    pub p0_scale: f64,
    /// Relative finite-difference step for sensitivities.
    pub fd_step: f64,
    /// Per-DOF known input values; `None` marks an unknown input.
    pub known_inputs: Vec<Option<f64>>,
    /// Leak cutoff [rad/s] for the pseudo-measurement integrators; 0 disables.
    pub detrend: f64,
    /// Skip the parameter update entirely (equivalent to `mu -> inf`).
    pub freeze_parameters: bool,
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.q_scale > 0.0 && self.r_scale > 0.0 && self.p0_scale > 0.0) {
            return Err(Error::InvalidConfig(
                "q_scale, r_scale, p0_scale must be positive".into(),
            ));
        }
        if self.lambda2 < 0.0 || self.mu < 0.0 {
            return Err(Error::InvalidConfig("lambda2 and mu must be >= 0".into()));
        }
        if !(self.fd_step > 0.0 && self.fd_step <= 1e-2) {
            return Err(Error::InvalidConfig(format!(
                "fd_step {} outside (0, 1e-2]",
                self.fd_step
            )));
        }
        if self.detrend < 0.0 {
            return Err(Error::InvalidConfig("detrend must be >= 0".into()));
        }
        let n = self.theta0.n_stories();
        if self.z0.len() != 2 * n || self.known_inputs.len() != n {
            return Err(Error::InvalidConfig(format!(
                "dimension mismatch: theta0 for {n} stories, z0 {}, known_inputs {}",
                self.z0.len(),
                self.known_inputs.len()
            )));
        }
        Ok(())
    }
}

/// Evolving filter quantities at step `k`.
#[derive(Debug, Clone)]
pub struct FilterState {
    /// Dynamic state `[y; v]`, length 2n.
    pub z: DVector<f64>,
    /// State covariance, 2n x 2n.
    pub p: DMatrix<f64>,
    pub theta: ParameterVector,
    /// Current input estimate [N].
    pub u_est: DVector<f64>,
    /// Estimated accelerations, used to fill unmeasured channels next step.
    pub a_est: DVector<f64>,
    /// Step index.
    pub k: usize,
}

/// Full per-step history of one filter run.
#[derive(Debug, Clone)]
pub struct EstimateTrace {
    pub time: Vec<f64>,
    /// T x n input estimates.
    pub u_est: DMatrix<f64>,
    /// T x 2n parameter history.
    pub theta: DMatrix<f64>,
    /// T x 2n state history.
    pub z: DMatrix<f64>,
    /// Pre-fit residual (innovation) norm per step.
    pub innov_norm: Vec<f64>,
    /// Parameter-update residual norm per step.
    pub rho_norm: Vec<f64>,
}

/// `z_pred = A_d z + B_d u`, `P_pred = A_d P A_d^T + Q_d`, symmetrized.
pub fn predict(
    state: &FilterState,
    dss: &DiscreteStateSpace,
    q_d: &DMatrix<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let z_pred = &dss.a_d * &state.z + &dss.b_d * &state.u_est;
    let p_pred = &dss.a_d * &state.p * dss.a_d.transpose() + q_d;
    (z_pred, symmetrize(p_pred))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let mt = m.transpose();
    (m + mt) * 0.5
}

/// Kalman gain `J = P H^T N^-1` with `N = H P H^T + R_d`, via a linear solve.
pub fn gain(
    p_pred: &DMatrix<f64>,
    h: &DMatrix<f64>,
    r_d: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n_mat = symmetrize(h * p_pred * h.transpose() + r_d);
    let lu = n_mat.clone().lu();
    let diag = lu.u().diagonal();
    let (mut dmin, mut dmax) = (f64::INFINITY, 0.0f64);
    for d in diag.iter() {
        dmin = dmin.min(d.abs());
        dmax = dmax.max(d.abs());
    }
    let cond = if dmin > 0.0 { dmax / dmin } else { f64::INFINITY };
    if dmin == 0.0 || !cond.is_finite() || cond > 1e15 {
        return Err(Error::IllConditionedInnovation { cond });
    }
    // J N = P H^T, so N J^T = H P^T = H P for symmetric P
    let jt = lu
        .solve(&(h * p_pred))
        .ok_or(Error::IllConditionedInnovation { cond })?;
    Ok((jt.transpose(), n_mat))
}

/// `z_post = z_pred + J (y - H z_pred)`, `P_post = (I - J H) P_pred`,
/// symmetrized.
pub fn update_state(
    z_pred: &DVector<f64>,
    p_pred: &DMatrix<f64>,
    y: &DVector<f64>,
    h: &DMatrix<f64>,
    j: &DMatrix<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let innovation = y - h * z_pred;
    let z_post = z_pred + j * innovation;
    let n2 = p_pred.nrows();
    let p_post = (DMatrix::identity(n2, n2) - j * h) * p_pred;
    (z_post, symmetrize(p_post))
}

/// Input recovery through the system model: `u = M a + [K C] z`, with known
/// rows overwritten by their declared values.
pub fn estimate_input(
    a_meas_full: &DVector<f64>,
    z_post: &DVector<f64>,
    mats: &SystemMatrices,
    known_inputs: &[Option<f64>],
) -> DVector<f64> {
    let n = mats.n();
    let y = z_post.rows(0, n);
    let v = z_post.rows(n, n);
    let mut u = &mats.m * a_meas_full + &mats.k * y + &mats.c * v;
    for (i, known) in known_inputs.iter().enumerate() {
        if let Some(value) = known {
            u[i] = *value;
        }
    }
    u
}

/// `a_est = M^-1 (u - K y - C v)`, stored for filling unmeasured channels.
pub fn estimated_accelerations(
    z_post: &DVector<f64>,
    u_est: &DVector<f64>,
    mats: &SystemMatrices,
    m_inv: &DMatrix<f64>,
) -> DVector<f64> {
    let n = mats.n();
    let y = z_post.rows(0, n);
    let v = z_post.rows(n, n);
    m_inv * (u_est - &mats.k * y - &mats.c * v)
}

/// Sensitivity `U = -d(a_pred)/d(theta)` by central differences, column `j`
/// perturbing `theta_j` by `fd_step * max(|theta_j|, 1)`.
pub fn sensitivity<F>(a_pred_fn: F, theta: &DVector<f64>, fd_step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let rows = a_pred_fn(theta).len();
    let cols = theta.len();
    let mut u = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        let h = fd_step * theta[j].abs().max(1.0);
        let mut plus = theta.clone();
        plus[j] += h;
        let mut minus = theta.clone();
        minus[j] -= h;
        let ap = a_pred_fn(&plus);
        let am = a_pred_fn(&minus);
        for r in 0..rows {
            let d = -(ap[r] - am[r]) / (2.0 * h);
            if !d.is_finite() {
                return Err(Error::SensitivityFailure { index: j });
            }
            u[(r, j)] = d;
        }
    }
    Ok(u)
}

/// Regularized Gauss-Newton correction with residual-scaled step control:
/// `dtheta = (U^T U + lambda2 I)^-1 U^T rho`, applied as
/// `theta + dtheta * exp(-mu ||rho||)`, entries clamped to `floor`.
pub fn update_parameters(
    theta: &DVector<f64>,
    u: &DMatrix<f64>,
    rho: &DVector<f64>,
    lambda2: f64,
    mu: f64,
    floor: &[f64],
) -> Result<DVector<f64>> {
    let p = theta.len();
    let normal = symmetrize(u.transpose() * u + DMatrix::identity(p, p) * lambda2);
    let rhs = u.transpose() * rho;
    let dtheta = match normal.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => {
            if lambda2 == 0.0 {
                return Err(Error::RegularizationRequired);
            }
            normal
                .lu()
                .solve(&rhs)
                .ok_or(Error::RegularizationRequired)?
        }
    };
    let rho_norm = rho.norm();
    let scale = (-mu * rho_norm).exp();
    let scale = if scale.is_finite() { scale } else { 0.0 };
    let raw = theta + dtheta * scale;
    let clamped: Vec<f64> = raw
        .iter()
        .zip(floor)
        .map(|(&v, &f)| v.max(f))
        .collect();
    Ok(DVector::from_vec(clamped))
}

/// Online leaky trapezoidal integrators for the pseudo-measurements.
struct PseudoIntegrators {
    vel: DVector<f64>,
    disp: DVector<f64>,
    a_prev: DVector<f64>,
    /// Same transform applied to the known-input values so the filtered
    /// equation error compares like with like.
    known_l1: DVector<f64>,
    known_l2: DVector<f64>,
    alpha: f64,
    dt: f64,
    started: bool,
}

impl PseudoIntegrators {
    fn new(n: usize, dt: f64, cutoff: f64) -> Self {
        Self {
            vel: DVector::zeros(n),
            disp: DVector::zeros(n),
            a_prev: DVector::zeros(n),
            known_l1: DVector::zeros(n),
            known_l2: DVector::zeros(n),
            alpha: if cutoff > 0.0 { (-cutoff * dt).exp() } else { 1.0 },
            dt,
            started: false,
        }
    }

    fn start(&mut self, a0: &DVector<f64>, known: &DVector<f64>) {
        self.a_prev = a0.clone();
        self.known_l1 = known.clone();
        self.known_l2 = known.clone();
        self.started = true;
    }

    fn advance(&mut self, a: &DVector<f64>, known: &DVector<f64>) {
        debug_assert!(self.started);
        let vel_next = (&self.vel + (&self.a_prev + a) * (self.dt / 2.0)) * self.alpha;
        self.disp = (&self.disp + (&self.vel + &vel_next) * (self.dt / 2.0)) * self.alpha;
        self.vel = vel_next;
        self.a_prev = a.clone();
        let l1_next = (&self.known_l1 + known) * 0.5; // known inputs vary slowly if at all
        self.known_l1 = l1_next * self.alpha + known * (1.0 - self.alpha);
        self.known_l2 = (&self.known_l2 * self.alpha) + &self.known_l1 * (1.0 - self.alpha);
    }

    fn observation(&self) -> DVector<f64> {
        let n = self.vel.len();
        let mut y = DVector::zeros(2 * n);
        y.rows_mut(0, n).copy_from(&self.disp);
        y.rows_mut(n, n).copy_from(&self.vel);
        y
    }
}

/// A filter instance bound to one sequence. Strictly sequential.
pub struct RunningRkf {
    config: FilterConfig,
    template: ShearBuildingSpec,
    pub state: FilterState,
    mats: SystemMatrices,
    m_inv: DMatrix<f64>,
    dss: DiscreteStateSpace,
    q_d: DMatrix<f64>,
    r_d: DMatrix<f64>,
    integrators: PseudoIntegrators,
    floor: Vec<f64>,
    known_vec: DVector<f64>,
    measured_dofs: Vec<usize>,
    dt: f64,
    pub last_innov_norm: f64,
    pub last_rho_norm: f64,
}

impl RunningRkf {
    pub fn new(
        config: FilterConfig,
        template: &ShearBuildingSpec,
        measured_dofs: &[usize],
        dt: f64,
    ) -> Result<Self> {
        config.validate()?;
        if !(dt > 0.0) {
            return Err(Error::InvalidStep(dt));
        }
        let n = template.n_stories;
        if config.theta0.n_stories() != n {
            return Err(Error::InvalidConfig(format!(
                "theta0 is for {} stories, template has {n}",
                config.theta0.n_stories()
            )));
        }
        for &dof in measured_dofs {
            if dof >= n {
                return Err(Error::InvalidDof { dof, n });
            }
        }
        let mats = matrices_from_theta(&config.theta0, template)?;
        let m_inv = crate::model::invert_mass(&mats.m)?;
        let ss = assemble_state_space(&mats, &(0..n).collect::<Vec<_>>())?;
        let dss = discretize(&ss, dt)?;
        let q_d = DMatrix::identity(2 * n, 2 * n) * config.q_scale;
        let r_d = DMatrix::identity(2 * n, 2 * n) * config.r_scale;
        let floor: Vec<f64> = config
            .theta0
            .as_slice()
            .iter()
            .map(|&v| 1e-6 * v.abs())
            .collect();
        let known_vec =
            DVector::from_iterator(n, config.known_inputs.iter().map(|k| k.unwrap_or(0.0)));
        let state = FilterState {
            z: config.z0.clone(),
            p: DMatrix::identity(2 * n, 2 * n) * config.p0_scale,
            theta: config.theta0.clone(),
            u_est: DVector::zeros(n),
            a_est: DVector::zeros(n),
            k: 0,
        };
        let integrators = PseudoIntegrators::new(n, dt, config.detrend);
        Ok(Self {
            config,
            template: template.clone(),
            state,
            mats,
            m_inv,
            dss,
            q_d,
            r_d,
            integrators,
            floor,
            known_vec,
            measured_dofs: measured_dofs.to_vec(),
            dt,
            last_innov_norm: 0.0,
            last_rho_norm: 0.0,
        })
    }

    fn fill_accelerations(&self, frame: &DVector<f64>) -> DVector<f64> {
        let mut a_full = self.state.a_est.clone();
        for (col, &dof) in self.measured_dofs.iter().enumerate() {
            a_full[dof] = frame[col];
        }
        a_full
    }

    /// Consistently high-passed equation quantities. With leak cutoff `w`,
    /// the integrals carry the transfer `s^2/(s+w)^2` of the true states, so
    /// `a_hat = a - 2w v + w^2 y` and `v_hat = v - w y` satisfy the same
    /// equation of motion as the raw signals.
    fn filtered_quantities(
        &self,
        a_full: &DVector<f64>,
        y_state: &DVector<f64>,
        v_state: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let w = self.config.detrend;
        if w == 0.0 {
            return (a_full.clone(), v_state.clone());
        }
        let a_hat = a_full - v_state * (2.0 * w) + y_state * (w * w);
        let v_hat = v_state - y_state * w;
        (a_hat, v_hat)
    }

    /// Advances the filter by one measurement frame (accelerations at the
    /// measured DOFs for step k+1).
    pub fn rkf_step(&mut self, frame: &DVector<f64>) -> Result<()> {
        if frame.len() != self.measured_dofs.len() {
            return Err(Error::LengthMismatch(format!(
                "frame has {} channels, expected {}",
                frame.len(),
                self.measured_dofs.len()
            )));
        }
        let n = self.template.n_stories;

        // (1) fill unmeasured channels with the prior step's estimates
        let a_full = self.fill_accelerations(frame);
        if !self.integrators.started {
            self.integrators.start(&a_full, &self.known_vec);
            self.state.k += 1;
            return Ok(());
        }

        // (2) advance the pseudo-measurement integrators
        self.integrators.advance(&a_full, &self.known_vec);
        let y_obs = self.integrators.observation();

        // (3) predict
        let (z_pred, p_pred) = predict(&self.state, &self.dss, &self.q_d);

        // (4) gain and update; H selects all 2n pseudo-measured states
        let h = DMatrix::identity(2 * n, 2 * n);
        let (j, _n_mat) = gain(&p_pred, &h, &self.r_d)?;
        self.last_innov_norm = (&y_obs - &z_pred).norm();
        let (z_post, p_post) = update_state(&z_pred, &p_pred, &y_obs, &h, &j);

        // (5) input recovery with known rows overwritten
        let u_est = estimate_input(&a_full, &z_post, &self.mats, &self.config.known_inputs);

        // (6) accelerations for the next step's filling
        let a_est = estimated_accelerations(&z_post, &u_est, &self.mats, &self.m_inv);

        self.state.z = z_post;
        self.state.p = p_post;
        self.state.u_est = u_est;
        self.state.a_est = a_est;

        // (7) parameter correction on the filtered equation error
        if !self.config.freeze_parameters {
            let y_state = self.state.z.rows(0, n).clone_owned();
            let v_state = self.state.z.rows(n, n).clone_owned();
            let (a_hat, v_hat) = self.filtered_quantities(&a_full, &y_state, &v_state);
            let theta_vec = self.state.theta.as_vector();

            let m_inv = self.m_inv.clone();
            let u_masked = masked_filtered_input(
                &self.state.u_est,
                &self.integrators.known_l2,
                &self.config.known_inputs,
            );
            let y_hat = y_state.clone();
            let predictor = move |th: &DVector<f64>| -> DVector<f64> {
                let (k_m, c_m) = kc_from_theta_unchecked(th, n);
                &m_inv * (&u_masked - k_m * &y_hat - c_m * &v_hat)
            };
            let u_sens = sensitivity(&predictor, &theta_vec, self.config.fd_step)?;

            // rho = u_known - (M a_hat + K y + C v_hat) on known rows, zero on
            // unknown rows; equals -M (a_hat - a_pred(theta)) there.
            let a_pred = predictor(&theta_vec);
            let eps = &a_hat - &a_pred;
            let mut rho = -(&self.mats.m * eps);
            for (i, known) in self.config.known_inputs.iter().enumerate() {
                if known.is_none() {
                    rho[i] = 0.0;
                }
            }
            self.last_rho_norm = rho.norm();

            let theta_new = update_parameters(
                &theta_vec,
                &u_sens,
                &rho,
                self.config.lambda2,
                self.config.mu,
                &self.floor,
            )?;
            let theta_new = ParameterVector::from_clamped(&theta_new, &self.floor);

            // (8) rebuild the discrete model from the updated parameters
            if theta_new != self.state.theta {
                self.mats = matrices_from_theta(&theta_new, &self.template)?;
                let ss = assemble_state_space(&self.mats, &(0..n).collect::<Vec<_>>())?;
                self.dss = discretize(&ss, self.dt)?;
                self.state.theta = theta_new;
            }
        } else {
            self.last_rho_norm = 0.0;
        }

        self.state.k += 1;
        if !self.state.z.iter().all(|v| v.is_finite())
            || !self.state.theta.as_slice().iter().all(|v| v.is_finite())
        {
            return Err(Error::FilterDiverged {
                step: self.state.k - 1,
            });
        }
        Ok(())
    }
}

/// Known-input rows take their leak-filtered declared values; unknown rows
/// keep the raw estimate (those rows cancel in the residual anyway).
fn masked_filtered_input(
    u_est: &DVector<f64>,
    known_filtered: &DVector<f64>,
    known_inputs: &[Option<f64>],
) -> DVector<f64> {
    let mut u = u_est.clone();
    for (i, known) in known_inputs.iter().enumerate() {
        if known.is_some() {
            u[i] = known_filtered[i];
        }
    }
    u
}

/// Runs the filter over a full measurement sequence. Strictly causal; the
/// trace has one row per measurement sample.
pub fn run_rkf(
    seq: &MeasurementSet,
    config: &FilterConfig,
    template: &ShearBuildingSpec,
) -> Result<EstimateTrace> {
    let n = template.n_stories;
    let steps = seq.noisy_accel.nrows();
    let mut filter = RunningRkf::new(config.clone(), template, &seq.measured_dofs, seq.dt)?;
    let mut trace = EstimateTrace {
        time: Vec::with_capacity(steps),
        u_est: DMatrix::zeros(steps, n),
        theta: DMatrix::zeros(steps, 2 * n),
        z: DMatrix::zeros(steps, 2 * n),
        innov_norm: vec![0.0; steps],
        rho_norm: vec![0.0; steps],
    };
    for k in 0..steps {
        let frame = seq.noisy_accel.row(k).transpose();
        filter.rkf_step(&frame)?;
        trace.time.push(k as f64 * seq.dt);
        trace
            .u_est
            .row_mut(k)
            .copy_from(&filter.state.u_est.transpose());
        trace
            .theta
            .row_mut(k)
            .copy_from(&filter.state.theta.as_vector().transpose());
        trace.z.row_mut(k).copy_from(&filter.state.z.transpose());
        trace.innov_norm[k] = filter.last_innov_norm;
        trace.rho_norm[k] = filter.last_rho_norm;
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_shear_matrices;
    use crate::simulate::{gen_decaying_harmonic, integrate_rk4};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn scalar_state(z: f64, p: f64, u: f64) -> FilterState {
        FilterState {
            z: DVector::from_element(1, z),
            p: DMatrix::from_element(1, 1, p),
            theta: ParameterVector::new(vec![1.0, 1.0]).unwrap(),
            u_est: DVector::from_element(1, u),
            a_est: DVector::zeros(1),
            k: 0,
        }
    }

    #[test]
    fn predict_identity_dynamics() {
        let state = scalar_state(2.0, 1.0, 0.0);
        let dss = DiscreteStateSpace {
            a_d: DMatrix::identity(1, 1),
            b_d: DMatrix::zeros(1, 1),
            dt: 0.1,
        };
        let (z, p) = predict(&state, &dss, &DMatrix::zeros(1, 1));
        assert_eq!(z[0], 2.0);
        assert_eq!(p[(0, 0)], 1.0);
    }

    #[test]
    fn predict_scalar_hand_values() {
        // a_d = 0.5, z = 2, u = 0, p = 1, q = 0.1: z_pred = 1, p_pred = 0.35
        let state = scalar_state(2.0, 1.0, 0.0);
        let dss = DiscreteStateSpace {
            a_d: DMatrix::from_element(1, 1, 0.5),
            b_d: DMatrix::from_element(1, 1, 1.0),
            dt: 0.1,
        };
        let (z, p) = predict(&state, &dss, &DMatrix::from_element(1, 1, 0.1));
        assert_eq!(z[0], 1.0);
        assert_relative_eq!(p[(0, 0)], 0.35, max_relative = 1e-15);
    }

    #[test]
    fn predict_preserves_psd() {
        use rand::Rng;
        let spec = ShearBuildingSpec::six_story_reference();
        let mats = build_shear_matrices(&spec);
        let ss = assemble_state_space(&mats, &(0..6).collect::<Vec<_>>()).unwrap();
        let dss = discretize(&ss, 0.01).unwrap();
        let mut rng = crate::seeding::rng_for(3, "psd-test", 0);
        for _ in 0..20 {
            let raw = DMatrix::from_fn(12, 12, |_, _| rng.gen_range(-1.0..1.0));
            let psd = &raw * raw.transpose();
            let state = FilterState {
                z: DVector::zeros(12),
                p: psd,
                theta: ParameterVector::from_spec(&spec),
                u_est: DVector::zeros(6),
                a_est: DVector::zeros(6),
                k: 0,
            };
            let (_, p_pred) = predict(&state, &dss, &DMatrix::identity(12, 12));
            let eigs = p_pred.symmetric_eigenvalues();
            let trace: f64 = p_pred.trace();
            for e in eigs.iter() {
                assert!(*e >= -1e-10 * trace, "eigenvalue {e} below tolerance");
            }
        }
    }

    #[test]
    fn gain_scalar_hand_values() {
        let p = DMatrix::from_element(1, 1, 1.0);
        let h = DMatrix::identity(1, 1);
        let r = DMatrix::from_element(1, 1, 1.0);
        let (j, n) = gain(&p, &h, &r).unwrap();
        assert_eq!(n[(0, 0)], 2.0);
        assert_eq!(j[(0, 0)], 0.5);
    }

    #[test]
    fn gain_limits() {
        let p = DMatrix::identity(3, 3);
        let h = DMatrix::identity(3, 3);
        let (j_ignore, _) = gain(&p, &h, &(DMatrix::identity(3, 3) * 1e12)).unwrap();
        assert!(j_ignore.amax() < 1e-11);
        let (j_trust, _) = gain(&p, &h, &(DMatrix::identity(3, 3) * 1e-14)).unwrap();
        assert!((j_trust - DMatrix::identity(3, 3)).amax() < 1e-9);
    }

    #[test]
    fn update_state_zero_innovation() {
        let z_pred = DVector::from_column_slice(&[1.0, -2.0]);
        let p_pred = DMatrix::identity(2, 2);
        let h = DMatrix::identity(2, 2);
        let j = DMatrix::from_element(2, 2, 0.3);
        let y = z_pred.clone();
        let (z_post, _) = update_state(&z_pred, &p_pred, &y, &h, &j);
        assert_eq!(z_post, z_pred);

        let y2 = DVector::from_column_slice(&[5.0, 5.0]);
        let (z_post2, p_post2) = update_state(&z_pred, &p_pred, &y2, &h, &DMatrix::zeros(2, 2));
        assert_eq!(z_post2, z_pred);
        assert_eq!(p_post2, p_pred);
    }

    #[test]
    fn scalar_chain_predict_gain_update() {
        // chained worked example: z_pred = 1, N = 2, J = 0.5, y = 3
        // -> z_post = 1 + 0.5 * 2 = 2, p_post = 0.5 * p_pred
        let state = scalar_state(2.0, 1.0, 0.0);
        let dss = DiscreteStateSpace {
            a_d: DMatrix::from_element(1, 1, 0.5),
            b_d: DMatrix::from_element(1, 1, 1.0),
            dt: 0.1,
        };
        let (z_pred, _) = predict(&state, &dss, &DMatrix::zeros(1, 1));
        let p_pred = DMatrix::from_element(1, 1, 1.0);
        let h = DMatrix::identity(1, 1);
        let (j, n) = gain(&p_pred, &h, &DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert_eq!((j[(0, 0)], n[(0, 0)]), (0.5, 2.0));
        let y = DVector::from_element(1, 3.0);
        let (z_post, p_post) = update_state(&z_pred, &p_pred, &y, &h, &j);
        assert_eq!(z_post[0], 2.0);
        assert_eq!(p_post[(0, 0)], 0.5 * p_pred[(0, 0)]);
    }

    #[test]
    fn input_recovery_round_trip() {
        // exact states + exact accelerations invert to the true load
        let spec = ShearBuildingSpec::six_story_reference();
        let mats = build_shear_matrices(&spec);
        let load = gen_decaying_harmonic(250.0, 2.0, 0.01, 0.5, 10.0, 0.01, 5, 6).unwrap();
        let resp = integrate_rk4(&mats, &load, None).unwrap();
        let known: Vec<Option<f64>> = vec![None; 6];
        let k = 600;
        let mut z = DVector::zeros(12);
        for i in 0..6 {
            z[i] = resp.displacements[(k, i)];
            z[6 + i] = resp.velocities[(k, i)];
        }
        let a = resp.accelerations.row(k).transpose();
        let u = estimate_input(&a, &z, &mats, &known);
        for i in 0..6 {
            assert_relative_eq!(u[i], load.forces[(k, i)], epsilon = 1e-8);
        }
    }

    #[test]
    fn input_zero_when_all_zero() {
        let mats = build_shear_matrices(&ShearBuildingSpec::six_story_reference());
        let u = estimate_input(
            &DVector::zeros(6),
            &DVector::zeros(12),
            &mats,
            &vec![None; 6],
        );
        assert_eq!(u.amax(), 0.0);
    }

    #[test]
    fn known_input_mask_semantics() {
        let mats = build_shear_matrices(&ShearBuildingSpec::six_story_reference());
        let mut known: Vec<Option<f64>> = vec![Some(0.0); 6];
        known[5] = None;
        let a = DVector::from_element(6, 1.0);
        let z = DVector::from_element(12, 0.1);
        let u = estimate_input(&a, &z, &mats, &known);
        for i in 0..5 {
            assert_eq!(u[i], 0.0, "masked row {i}");
        }
        assert!(u[5].abs() > 0.0);
    }

    #[test]
    fn estimated_accelerations_against_simulator() {
        let spec = ShearBuildingSpec::six_story_reference();
        let mats = build_shear_matrices(&spec);
        let m_inv = crate::model::invert_mass(&mats.m).unwrap();
        let load = gen_decaying_harmonic(250.0, 2.0, 0.01, 0.5, 10.0, 0.01, 5, 6).unwrap();
        let resp = integrate_rk4(&mats, &load, None).unwrap();
        let k = 444;
        let mut z = DVector::zeros(12);
        for i in 0..6 {
            z[i] = resp.displacements[(k, i)];
            z[6 + i] = resp.velocities[(k, i)];
        }
        let u = load.forces.row(k).transpose();
        let a = estimated_accelerations(&z, &u, &mats, &m_inv);
        for i in 0..6 {
            assert_relative_eq!(a[i], resp.accelerations[(k, i)], epsilon = 1e-10);
        }
    }

    #[test]
    fn estimated_accelerations_static_equilibrium() {
        let spec = ShearBuildingSpec::six_story_reference();
        let mats = build_shear_matrices(&spec);
        let m_inv = crate::model::invert_mass(&mats.m).unwrap();
        let z = DVector::from_fn(12, |i, _| 0.01 * (i as f64 + 1.0));
        let n = 6;
        let u = &mats.k * z.rows(0, n) + &mats.c * z.rows(n, n);
        let a = estimated_accelerations(&z, &u, &mats, &m_inv);
        assert!(a.amax() < 1e-12);

        let zero = estimated_accelerations(&DVector::zeros(12), &DVector::zeros(6), &mats, &m_inv);
        assert_eq!(zero.amax(), 0.0);
    }

    #[test]
    fn sensitivity_constant_predictor_is_zero() {
        let theta = DVector::from_column_slice(&[1.0, 2.0]);
        let u = sensitivity(|_| DVector::from_element(3, 4.2), &theta, 1e-6).unwrap();
        assert_eq!(u.amax(), 0.0);
    }

    #[test]
    fn sensitivity_scalar_quadratic() {
        // a(theta) = theta^2 at theta = 3: U = -6
        let theta = DVector::from_element(1, 3.0);
        let u = sensitivity(
            |t| DVector::from_element(1, t[0] * t[0]),
            &theta,
            1e-4,
        )
        .unwrap();
        assert_relative_eq!(u[(0, 0)], -6.0, epsilon = 1e-6);
    }

    #[test]
    fn sensitivity_richardson_consistency() {
        // central difference at fd vs fd/10 agree to O(fd^2) on the one-step
        // acceleration predictor of the six-story model
        let spec = ShearBuildingSpec::six_story_reference();
        let theta = ParameterVector::from_spec(&spec).as_vector();
        let y = DVector::from_fn(6, |i, _| 0.01 * (i as f64 + 1.0));
        let v = DVector::from_fn(6, |i, _| -0.02 * (i as f64 + 0.5));
        let u_fix = DVector::from_element(6, 10.0);
        let m_inv = DMatrix::identity(6, 6) * (1.0 / 100.0);
        let pred = move |t: &DVector<f64>| -> DVector<f64> {
            let (k, c) = kc_from_theta_unchecked(t, 6);
            &m_inv * (&u_fix - k * &y - c * &v)
        };
        let u1 = sensitivity(&pred, &theta, 1e-4).unwrap();
        let u2 = sensitivity(&pred, &theta, 1e-5).unwrap();
        // the predictor is linear in theta, so both are exact; the check
        // guards against step-size pathologies in the implementation
        assert!((u1 - u2).amax() < 1e-8);
    }

    #[test]
    fn update_parameters_zero_residual() {
        let theta = DVector::from_column_slice(&[10.0, 20.0]);
        let u = DMatrix::from_element(3, 2, 0.5);
        let rho = DVector::zeros(3);
        let floor = [0.0, 0.0];
        let new = update_parameters(&theta, &u, &rho, 0.05, 5e-3, &floor).unwrap();
        assert_eq!(new, theta);
    }

    #[test]
    fn update_parameters_scalar_hand_values() {
        // U = 1, lambda2 = 0, mu = 0, rho = r: dtheta = r
        let theta = DVector::from_element(1, 5.0);
        let u = DMatrix::identity(1, 1);
        let rho = DVector::from_element(1, 0.25);
        let new = update_parameters(&theta, &u, &rho, 0.0, 0.0, &[0.0]).unwrap();
        assert_relative_eq!(new[0], 5.25, max_relative = 1e-14);
    }

    #[test]
    fn update_parameters_heavy_damping_freezes() {
        let theta = DVector::from_element(1, 5.0);
        let u = DMatrix::identity(1, 1);
        let rho = DVector::from_element(1, 100.0);
        let new = update_parameters(&theta, &u, &rho, 0.0, 1.0, &[0.0]).unwrap();
        assert!((new[0] - 5.0).abs() < 1e-6 * 100.0);
    }

    #[test]
    fn update_parameters_requires_regularization_when_singular() {
        let theta = DVector::from_element(2, 1.0);
        let u = DMatrix::zeros(3, 2);
        let rho = DVector::from_element(3, 1.0);
        assert!(matches!(
            update_parameters(&theta, &u, &rho, 0.0, 0.0, &[0.0, 0.0]),
            Err(Error::RegularizationRequired)
        ));
    }

    #[test]
    fn regularization_limit_freezes_step() {
        let theta = DVector::from_column_slice(&[1.0, 2.0]);
        let u = DMatrix::from_fn(4, 2, |i, j| (i + j) as f64 * 0.1 + 0.2);
        let rho = DVector::from_fn(4, |i, _| 1.0 - i as f64 * 0.3);
        let new = update_parameters(&theta, &u, &rho, 1e12, 0.0, &[0.0, 0.0]).unwrap();
        assert!((new - theta).amax() < 1e-9);
    }

    proptest! {
        #[test]
        fn parameter_step_monotone_in_mu(
            mu1 in 0.0f64..2.0,
            dmu in 0.0f64..2.0,
            rho_vals in proptest::collection::vec(-5.0f64..5.0, 4),
        ) {
            let theta = DVector::from_column_slice(&[10.0, 20.0]);
            let u = DMatrix::from_fn(4, 2, |i, j| 0.1 * (i as f64 + 1.0) - 0.05 * j as f64);
            let rho = DVector::from_column_slice(&rho_vals);
            let floor = [f64::NEG_INFINITY, f64::NEG_INFINITY];
            let a = update_parameters(&theta, &u, &rho, 0.05, mu1, &floor).unwrap();
            let b = update_parameters(&theta, &u, &rho, 0.05, mu1 + dmu, &floor).unwrap();
            let step_a = (&a - &theta).norm();
            let step_b = (&b - &theta).norm();
            prop_assert!(step_b <= step_a + 1e-12);
        }
    }

    fn noiseless_measurement_set(
        duration: f64,
    ) -> (MeasurementSet, crate::simulate::LoadSignal, ShearBuildingSpec) {
        let spec = ShearBuildingSpec::six_story_reference();
        let mats = build_shear_matrices(&spec);
        let load = gen_decaying_harmonic(400.0, 1.5, 0.01, 1.0, duration, 0.01, 5, 6).unwrap();
        let resp = integrate_rk4(&mats, &load, None).unwrap();
        let measured = vec![2usize, 4, 5];
        let mut noisy = DMatrix::zeros(load.len(), 3);
        for (c, &d) in measured.iter().enumerate() {
            noisy.column_mut(c).copy_from(&resp.accelerations.column(d));
        }
        let (pd, pv) = crate::simulate::make_pseudo_measurements(&resp.accelerations, 0.01);
        (
            MeasurementSet {
                measured_dofs: measured,
                noisy_accel: noisy,
                nsr: 0.0,
                pseudo_disp: pd,
                pseudo_vel: pv,
                seed: 0,
                dt: 0.01,
            },
            load,
            spec,
        )
    }

    fn paper_filter_config(spec: &ShearBuildingSpec, freeze: bool, detrend: f64) -> FilterConfig {
        let mut known: Vec<Option<f64>> = vec![Some(0.0); 6];
        known[5] = None;
        FilterConfig {
            q_scale: 1.0,
            r_scale: 1e-10,
            lambda2: 5e-2,
            mu: 5e-3,
            theta0: ParameterVector::from_spec(spec),
            z0: DVector::zeros(12),
            p0_scale: 1.0,
            fd_step: 1e-6,
            known_inputs: known,
            detrend,
            freeze_parameters: freeze,
        }
    }

    #[test]
    fn noiseless_frozen_reconstruction() {
        let (seq, load, spec) = noiseless_measurement_set(20.0);
        let config = paper_filter_config(&spec, true, 0.0);
        let trace = run_rkf(&seq, &config, &spec).unwrap();
        let start = 300; // skip 3 s transient
        let mut err2 = 0.0;
        let mut ref2 = 0.0;
        for k in start..load.len() {
            let e = trace.u_est[(k, 5)] - load.forces[(k, 5)];
            err2 += e * e;
            ref2 += load.forces[(k, 5)] * load.forces[(k, 5)];
        }
        let rel = (err2 / ref2).sqrt();
        assert!(rel < 1e-3, "relative RMS input error {rel}");
    }

    #[test]
    fn zero_measurements_stay_zero() {
        let spec = ShearBuildingSpec::six_story_reference();
        let seq = MeasurementSet {
            measured_dofs: vec![2, 4, 5],
            noisy_accel: DMatrix::zeros(200, 3),
            nsr: 0.0,
            pseudo_disp: DMatrix::zeros(200, 6),
            pseudo_vel: DMatrix::zeros(200, 6),
            seed: 0,
            dt: 0.01,
        };
        let config = paper_filter_config(&spec, true, 0.0);
        let trace = run_rkf(&seq, &config, &spec).unwrap();
        assert_eq!(trace.u_est.amax(), 0.0);
        assert_eq!(trace.z.amax(), 0.0);
    }

    #[test]
    fn run_is_deterministic() {
        let (seq, _, spec) = noiseless_measurement_set(5.0);
        let config = paper_filter_config(&spec, false, 0.3);
        let a = run_rkf(&seq, &config, &spec).unwrap();
        let b = run_rkf(&seq, &config, &spec).unwrap();
        assert_eq!(a.u_est, b.u_est);
        assert_eq!(a.theta, b.theta);
        assert_eq!(a.z, b.z);
    }

    #[test]
    fn causal_prefix_is_bit_exact() {
        let (seq, _, spec) = noiseless_measurement_set(5.0);
        let config = paper_filter_config(&spec, false, 0.3);
        let full = run_rkf(&seq, &config, &spec).unwrap();
        let cut = 200;
        let truncated = MeasurementSet {
            measured_dofs: seq.measured_dofs.clone(),
            noisy_accel: seq.noisy_accel.rows(0, cut).clone_owned(),
            nsr: seq.nsr,
            pseudo_disp: seq.pseudo_disp.rows(0, cut).clone_owned(),
            pseudo_vel: seq.pseudo_vel.rows(0, cut).clone_owned(),
            seed: seq.seed,
            dt: seq.dt,
        };
        let prefix = run_rkf(&truncated, &config, &spec).unwrap();
        assert_eq!(prefix.u_est, full.u_est.rows(0, cut).clone_owned());
        assert_eq!(prefix.theta, full.theta.rows(0, cut).clone_owned());
        assert_eq!(prefix.z, full.z.rows(0, cut).clone_owned());
    }

    #[test]
    fn masked_rows_exact_throughout() {
        let (seq, _, spec) = noiseless_measurement_set(5.0);
        let config = paper_filter_config(&spec, false, 0.3);
        let trace = run_rkf(&seq, &config, &spec).unwrap();
        for k in 0..trace.u_est.nrows() {
            for dof in 0..5 {
                assert_eq!(trace.u_est[(k, dof)], 0.0, "step {k}, dof {dof}");
            }
        }
    }

    #[test]
    fn covariance_stays_psd_during_run() {
        let (seq, _, spec) = noiseless_measurement_set(5.0);
        let config = paper_filter_config(&spec, false, 0.3);
        let mut filter = RunningRkf::new(config, &spec, &seq.measured_dofs, seq.dt).unwrap();
        for k in 0..seq.noisy_accel.nrows() {
            filter.rkf_step(&seq.noisy_accel.row(k).transpose()).unwrap();
            if k % 50 == 0 {
                let p = &filter.state.p;
                assert!((p - p.transpose()).amax() < 1e-12 * p.amax().max(1.0));
                let eigs = p.symmetric_eigenvalues();
                let tr = p.trace();
                for e in eigs.iter() {
                    assert!(*e >= -1e-10 * tr, "step {k}: eigenvalue {e}");
                }
            }
        }
    }
}
