//! Load generation, structural response simulation, and dataset assembly.
//!
//! Three load families are generated: exponentially decaying harmonics
//! (shaker at one story), envelope-modulated band-passed noise acting through
//! the mass matrix (synthetic base excitation), and half-sine pulses (hammer
//! impact). Responses come from classic RK4 on the first-order equations of
//! motion, measurement noise is calibrated per channel to an exact RMS
//! noise-to-signal ratio, and displacement/velocity pseudo-measurements are
//! built by cumulative trapezoidal integration of accelerations.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_shear_matrices, ShearBuildingSpec, SystemMatrices};
use crate::seeding;

/// The generated force history applied to every DOF.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadSignal {
    /// Uniform sample instants [s].
    pub time_grid: Vec<f64>,
    /// T x n force samples [N].
    pub forces: DMatrix<f64>,
    pub descriptor: LoadDescriptor,
}

impl LoadSignal {
    pub fn dt(&self) -> f64 {
        if self.time_grid.len() > 1 {
            self.time_grid[1] - self.time_grid[0]
        } else {
            0.0
        }
    }

    pub fn len(&self) -> usize {
        self.time_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_grid.is_empty()
    }

    /// DOFs that carry load for this signal kind.
    pub fn loaded_dofs(&self, n: usize) -> Vec<usize> {
        match &self.descriptor {
            LoadDescriptor::Harmonic { dof, .. } | LoadDescriptor::Impulse { dof, .. } => {
                vec![*dof]
            }
            LoadDescriptor::Base { .. } => (0..n).collect(),
        }
    }
}

/// Kind tag plus the generation parameters, kept for manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoadDescriptor {
    Harmonic {
        amplitude: f64,
        omega: f64,
        decay: f64,
        onset: f64,
        dof: usize,
    },
    Base {
        intensity: f64,
        f_lo: f64,
        f_hi: f64,
        rise: f64,
        plateau: f64,
        fall: f64,
        seed: u64,
    },
    Impulse {
        peak: f64,
        width: f64,
        impact_time: f64,
        dof: usize,
    },
}

fn time_grid(duration: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidStep(dt));
    }
    let steps = (duration / dt).round() as usize;
    if steps == 0 {
        return Err(Error::InvalidScenario(format!(
            "duration {duration} shorter than one step {dt}"
        )));
    }
    Ok((0..steps).map(|k| k as f64 * dt).collect())
}

/// Decaying harmonic at one DOF:
/// `F(t) = amplitude * exp(-decay (t - onset)) * sin(omega (t - onset))` for
/// `t >= onset`, zero before, all other columns zero.
pub fn gen_decaying_harmonic(
    amplitude: f64,
    omega: f64,
    decay: f64,
    onset: f64,
    duration: f64,
    dt: f64,
    dof: usize,
    n: usize,
) -> Result<LoadSignal> {
    if dof >= n {
        return Err(Error::InvalidDof { dof, n });
    }
    if decay < 0.0 {
        return Err(Error::InvalidScenario(format!("negative decay {decay}")));
    }
    if onset >= duration {
        return Err(Error::InvalidScenario(format!(
            "onset {onset} not before duration {duration}"
        )));
    }
    let grid = time_grid(duration, dt)?;
    let mut forces = DMatrix::zeros(grid.len(), n);
    for (k, &t) in grid.iter().enumerate() {
        let tau = t - onset;
        if tau >= 0.0 {
            forces[(k, dof)] = amplitude * (-decay * tau).exp() * (omega * tau).sin();
        }
    }
    Ok(LoadSignal {
        time_grid: grid,
        forces,
        descriptor: LoadDescriptor::Harmonic {
            amplitude,
            omega,
            decay,
            onset,
            dof,
        },
    })
}

/// Second-order band-pass biquad (constant peak gain), bilinear-discretized.
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl Biquad {
    fn band_pass(f_lo: f64, f_hi: f64, dt: f64) -> Self {
        let f0 = (f_lo * f_hi).sqrt();
        let q = f0 / (f_hi - f_lo);
        let w0 = 2.0 * std::f64::consts::PI * f0 * dt;
        let (sin_w0, cos_w0) = w0.sin_cos();
        let alpha = sin_w0 / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b0: alpha / a0,
            b1: 0.0,
            b2: -alpha / a0,
            a1: -2.0 * cos_w0 / a0,
            a2: (1.0 - alpha) / a0,
            x1: 0.0,
            x2: 0.0,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.b1 * self.x1 + self.b2 * self.x2
            - self.a1 * self.y1
            - self.a2 * self.y2;
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn trapezoidal_envelope(t: f64, rise: f64, plateau: f64, fall: f64) -> f64 {
    if t < 0.0 {
        0.0
    } else if t < rise {
        if rise > 0.0 {
            t / rise
        } else {
            1.0
        }
    } else if t < rise + plateau {
        1.0
    } else if t < rise + plateau + fall {
        if fall > 0.0 {
            1.0 - (t - rise - plateau) / fall
        } else {
            0.0
        }
    } else {
        0.0
    }
}

/// Synthetic ground acceleration: envelope-modulated band-passed white noise
/// scaled to `peak` [m/s^2], converted to effective story forces
/// `F_i = -m_i * a_g` (every column loaded, proportional to story mass).
#[allow(clippy::too_many_arguments)]
pub fn gen_base_excitation(
    intensity: f64,
    corner_freqs: (f64, f64),
    envelope: (f64, f64, f64),
    duration: f64,
    dt: f64,
    spec: &ShearBuildingSpec,
    seed: u64,
) -> Result<LoadSignal> {
    let (f_lo, f_hi) = corner_freqs;
    let nyquist = 1.0 / (2.0 * dt);
    if !(0.0 < f_lo && f_lo < f_hi && f_hi < nyquist) {
        return Err(Error::InvalidBand(format!(
            "need 0 < f_lo < f_hi < {nyquist}, got ({f_lo}, {f_hi})"
        )));
    }
    let grid = time_grid(duration, dt)?;
    let (rise, plateau, fall) = envelope;
    let mut rng = seeding::rng_for(seed, "base-excitation", 0);
    let mut filter = Biquad::band_pass(f_lo, f_hi, dt);
    let mut ground: Vec<f64> = grid
        .iter()
        .map(|&t| {
            let white: f64 = rng.sample(StandardNormal);
            filter.step(white) * trapezoidal_envelope(t, rise, plateau, fall)
        })
        .collect();
    let peak = ground.iter().fold(0.0f64, |m, &g| m.max(g.abs()));
    if peak > 0.0 && intensity != 0.0 {
        let scale = intensity / peak;
        ground.iter_mut().for_each(|g| *g *= scale);
    } else {
        ground.iter_mut().for_each(|g| *g = 0.0);
    }
    let n = spec.n_stories;
    let mut forces = DMatrix::zeros(grid.len(), n);
    for (k, &g) in ground.iter().enumerate() {
        for i in 0..n {
            forces[(k, i)] = -spec.masses[i] * g;
        }
    }
    Ok(LoadSignal {
        time_grid: grid,
        forces,
        descriptor: LoadDescriptor::Base {
            intensity,
            f_lo,
            f_hi,
            rise,
            plateau,
            fall,
            seed,
        },
    })
}

/// Half-sine pulse `F(t) = peak * sin(pi (t - t0) / width)` on
/// `[t0, t0 + width]`, zero elsewhere.
pub fn gen_impulse(
    peak: f64,
    width: f64,
    impact_time: f64,
    duration: f64,
    dt: f64,
    dof: usize,
    n: usize,
) -> Result<LoadSignal> {
    if dof >= n {
        return Err(Error::InvalidDof { dof, n });
    }
    if width < 2.0 * dt {
        return Err(Error::InvalidScenario(format!(
            "pulse width {width} shorter than 2 dt = {}",
            2.0 * dt
        )));
    }
    if impact_time + width > duration {
        return Err(Error::PulseTruncated(format!(
            "pulse [{impact_time}, {}] exceeds duration {duration}",
            impact_time + width
        )));
    }
    let grid = time_grid(duration, dt)?;
    let mut forces = DMatrix::zeros(grid.len(), n);
    for (k, &t) in grid.iter().enumerate() {
        let s = (t - impact_time) / width;
        if s > 0.0 && s < 1.0 {
            forces[(k, dof)] = peak * (std::f64::consts::PI * s).sin();
        }
    }
    Ok(LoadSignal {
        time_grid: grid,
        forces,
        descriptor: LoadDescriptor::Impulse {
            peak,
            width,
            impact_time,
            dof,
        },
    })
}

/// RK4-integrated structural response sampled on the load's grid.
#[derive(Debug, Clone)]
pub struct ResponseRecord {
    pub time_grid: Vec<f64>,
    /// T x n [m]
    pub displacements: DMatrix<f64>,
    /// T x n [m/s]
    pub velocities: DMatrix<f64>,
    /// T x n [m/s^2], reconstructed as `a = M^-1 (F - C v - K y)`.
    pub accelerations: DMatrix<f64>,
    pub load: LoadSignal,
}

/// Classic RK4 on `z_dot = A z + M^-1 F(t)` with the force linearly
/// interpolated at sub-steps. Zero initial conditions unless `z0` is given.
pub fn integrate_rk4(
    mats: &SystemMatrices,
    load: &LoadSignal,
    z0: Option<DVector<f64>>,
) -> Result<ResponseRecord> {
    let n = mats.n();
    if load.forces.ncols() != n {
        return Err(Error::InvalidScenario(format!(
            "load has {} columns for a {}-story model",
            load.forces.ncols(),
            n
        )));
    }
    let steps = load.len();
    let dt = load.dt();
    let m_inv = crate::model::invert_mass(&mats.m)?;
    let mut z = z0.unwrap_or_else(|| DVector::zeros(2 * n));
    if z.len() != 2 * n {
        return Err(Error::InvalidScenario(format!(
            "initial state has length {}, expected {}",
            z.len(),
            2 * n
        )));
    }

    let deriv = |z: &DVector<f64>, f: &DVector<f64>| -> DVector<f64> {
        let y = z.rows(0, n);
        let v = z.rows(n, n);
        let acc = &m_inv * (f - &mats.c * v - &mats.k * y);
        let mut dz = DVector::zeros(2 * n);
        dz.rows_mut(0, n).copy_from(&v);
        dz.rows_mut(n, n).copy_from(&acc);
        dz
    };

    let mut displacements = DMatrix::zeros(steps, n);
    let mut velocities = DMatrix::zeros(steps, n);
    let mut accelerations = DMatrix::zeros(steps, n);
    for k in 0..steps {
        let f_k = load.forces.row(k).transpose();
        let y = z.rows(0, n).clone_owned();
        let v = z.rows(n, n).clone_owned();
        let acc = &m_inv * (&f_k - &mats.c * &v - &mats.k * &y);
        if !acc.iter().all(|x| x.is_finite()) || !z.iter().all(|x| x.is_finite()) {
            return Err(Error::IntegrationDiverged { step: k });
        }
        displacements.row_mut(k).copy_from(&y.transpose());
        velocities.row_mut(k).copy_from(&v.transpose());
        accelerations.row_mut(k).copy_from(&acc.transpose());
        if k + 1 == steps {
            break;
        }
        let f_next = load.forces.row(k + 1).transpose();
        let f_half = (&f_k + &f_next) * 0.5;
        let k1 = deriv(&z, &f_k);
        let k2 = deriv(&(&z + &k1 * (dt / 2.0)), &f_half);
        let k3 = deriv(&(&z + &k2 * (dt / 2.0)), &f_half);
        let k4 = deriv(&(&z + &k3 * dt), &f_next);
        z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    Ok(ResponseRecord {
        time_grid: load.time_grid.clone(),
        displacements,
        velocities,
        accelerations,
        load: load.clone(),
    })
}

fn rms(col: impl Iterator<Item = f64>, len: usize) -> f64 {
    if len == 0 {
        return 0.0;
    }
    (col.map(|v| v * v).sum::<f64>() / len as f64).sqrt()
}

/// Adds zero-mean Gaussian noise per channel, rescaled so the achieved
/// RMS(noise)/RMS(signal) equals `nsr` exactly. Deterministic per seed.
pub fn add_noise(clean: &DMatrix<f64>, nsr: f64, seed: u64) -> Result<DMatrix<f64>> {
    if nsr < 0.0 {
        return Err(Error::InvalidScenario(format!("negative nsr {nsr}")));
    }
    if nsr == 0.0 {
        return Ok(clean.clone());
    }
    let rows = clean.nrows();
    let mut noisy = clean.clone();
    for ch in 0..clean.ncols() {
        let signal_rms = rms(clean.column(ch).iter().copied(), rows);
        if signal_rms == 0.0 {
            return Err(Error::DegenerateChannel { channel: ch });
        }
        let mut rng = seeding::rng_for(seed, "noise-channel", ch as u64);
        let noise: Vec<f64> = (0..rows).map(|_| rng.sample(StandardNormal)).collect();
        let noise_rms = rms(noise.iter().copied(), rows);
        let scale = nsr * signal_rms / noise_rms;
        for (r, nv) in noise.iter().enumerate() {
            noisy[(r, ch)] += nv * scale;
        }
    }
    Ok(noisy)
}

/// Cumulative trapezoidal integration of accelerations, once for velocity and
/// twice for displacement, zero initial values.
pub fn make_pseudo_measurements(accel: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (rows, cols) = accel.shape();
    let mut vel = DMatrix::zeros(rows, cols);
    let mut disp = DMatrix::zeros(rows, cols);
    for ch in 0..cols {
        let mut v = 0.0;
        let mut d = 0.0;
        for k in 1..rows {
            let v_next = v + dt / 2.0 * (accel[(k - 1, ch)] + accel[(k, ch)]);
            d += dt / 2.0 * (v + v_next);
            v = v_next;
            vel[(k, ch)] = v;
            disp[(k, ch)] = d;
        }
    }
    (disp, vel)
}

/// Trapezoidal integration with a first-order leak at `cutoff` [rad/s],
/// suppressing low-frequency drift of the integrals. `cutoff = 0` reduces to
/// [`make_pseudo_measurements`].
pub fn make_pseudo_measurements_detrended(
    accel: &DMatrix<f64>,
    dt: f64,
    cutoff: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    if cutoff <= 0.0 {
        return make_pseudo_measurements(accel, dt);
    }
    let alpha = (-cutoff * dt).exp();
    let (rows, cols) = accel.shape();
    let mut vel = DMatrix::zeros(rows, cols);
    let mut disp = DMatrix::zeros(rows, cols);
    for ch in 0..cols {
        let mut v = 0.0;
        let mut d = 0.0;
        for k in 1..rows {
            let v_next = alpha * (v + dt / 2.0 * (accel[(k - 1, ch)] + accel[(k, ch)]));
            d = alpha * (d + dt / 2.0 * (v + v_next));
            v = v_next;
            vel[(k, ch)] = v;
            disp[(k, ch)] = d;
        }
    }
    (disp, vel)
}

/// Noisy measurements plus pseudo-measurement integrals for one sequence.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    pub measured_dofs: Vec<usize>,
    /// T x |measured| noisy accelerations [m/s^2].
    pub noisy_accel: DMatrix<f64>,
    pub nsr: f64,
    /// T x n trapezoidal integrals of the (noisy) accelerations.
    pub pseudo_disp: DMatrix<f64>,
    pub pseudo_vel: DMatrix<f64>,
    pub seed: u64,
    pub dt: f64,
}

/// A generated sequence: what the estimators see plus the ground truth.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub measurements: MeasurementSet,
    pub load: LoadSignal,
}

/// Train/validation/test index lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub sequences: Vec<Sequence>,
    pub split: Split,
}

/// Load-family parameter ranges for randomized sequence generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioSpec {
    Shaker {
        amplitude: (f64, f64),
        omega: (f64, f64),
        decay: (f64, f64),
        onset: (f64, f64),
        /// Loaded story, 0-based.
        dof: usize,
    },
    Base {
        intensity: (f64, f64),
        f_lo: f64,
        f_hi: f64,
        /// Envelope fractions of the duration: (rise, plateau, fall).
        envelope_frac: (f64, f64, f64),
    },
    Impact {
        peak: (f64, f64),
        width: (f64, f64),
        impact_frac: (f64, f64),
        dof: usize,
    },
}

impl ScenarioSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ScenarioSpec::Shaker { .. } => "shaker",
            ScenarioSpec::Base { .. } => "base",
            ScenarioSpec::Impact { .. } => "impact",
        }
    }

    fn validate(&self, n: usize, duration: f64, dt: f64) -> Result<()> {
        let check_range = |name: &str, (lo, hi): (f64, f64)| -> Result<()> {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::InvalidScenario(format!(
                    "bad range for {name}: ({lo}, {hi})"
                )));
            }
            Ok(())
        };
        match self {
            ScenarioSpec::Shaker {
                amplitude,
                omega,
                decay,
                onset,
                dof,
            } => {
                check_range("amplitude", *amplitude)?;
                check_range("omega", *omega)?;
                check_range("decay", *decay)?;
                check_range("onset", *onset)?;
                if onset.1 >= duration {
                    return Err(Error::InvalidScenario(format!(
                        "onset range extends to {} >= duration {duration}",
                        onset.1
                    )));
                }
                if *dof >= n {
                    return Err(Error::InvalidDof { dof: *dof, n });
                }
            }
            ScenarioSpec::Base { intensity, f_lo, f_hi, .. } => {
                check_range("intensity", *intensity)?;
                if !(0.0 < *f_lo && f_lo < f_hi && *f_hi < 1.0 / (2.0 * dt)) {
                    return Err(Error::InvalidBand(format!("({f_lo}, {f_hi})")));
                }
            }
            ScenarioSpec::Impact {
                peak,
                width,
                impact_frac,
                dof,
            } => {
                check_range("peak", *peak)?;
                check_range("width", *width)?;
                check_range("impact_frac", *impact_frac)?;
                if width.0 < 2.0 * dt {
                    return Err(Error::InvalidScenario(format!(
                        "minimum width {} below 2 dt",
                        width.0
                    )));
                }
                if *dof >= n {
                    return Err(Error::InvalidDof { dof: *dof, n });
                }
            }
        }
        Ok(())
    }
}

fn draw(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Generates one load from the scenario family with parameters drawn from the
/// per-sequence sub-stream.
pub fn gen_scenario_load(
    scenario: &ScenarioSpec,
    spec: &ShearBuildingSpec,
    duration: f64,
    dt: f64,
    seq_seed: u64,
) -> Result<LoadSignal> {
    let n = spec.n_stories;
    let mut rng = seeding::rng_for(seq_seed, "load-params", 0);
    match scenario {
        ScenarioSpec::Shaker {
            amplitude,
            omega,
            decay,
            onset,
            dof,
        } => {
            let a = draw(&mut rng, *amplitude);
            let w = draw(&mut rng, *omega);
            let d = draw(&mut rng, *decay);
            let o = draw(&mut rng, *onset);
            gen_decaying_harmonic(a, w, d, o, duration, dt, *dof, n)
        }
        ScenarioSpec::Base {
            intensity,
            f_lo,
            f_hi,
            envelope_frac,
        } => {
            let i = draw(&mut rng, *intensity);
            let env = (
                envelope_frac.0 * duration,
                envelope_frac.1 * duration,
                envelope_frac.2 * duration,
            );
            gen_base_excitation(i, (*f_lo, *f_hi), env, duration, dt, spec, seq_seed)
        }
        ScenarioSpec::Impact {
            peak,
            width,
            impact_frac,
            dof,
        } => {
            let p = draw(&mut rng, *peak);
            let w = draw(&mut rng, *width);
            let t0 = draw(&mut rng, *impact_frac) * duration;
            let t0 = t0.min(duration - w - dt);
            gen_impulse(p, w, t0, duration, dt, *dof, n)
        }
    }
}

/// Everything needed to build one dataset.
#[derive(Debug, Clone)]
pub struct DatasetParams {
    pub count: usize,
    pub split: (usize, usize, usize),
    pub nsr: f64,
    pub duration: f64,
    pub dt: f64,
    /// 0-based measured DOFs.
    pub measured_dofs: Vec<usize>,
}

/// Generates `count` sequences with randomized load parameters, integrates,
/// noises, pseudo-measures, and assigns the split deterministically by seed.
/// Sequences are generated in parallel; each draws from its own sub-stream,
/// so results are schedule-independent.
pub fn build_dataset(
    scenario: &ScenarioSpec,
    spec: &ShearBuildingSpec,
    params: &DatasetParams,
    seed: u64,
) -> Result<Dataset> {
    let (tr, va, te) = params.split;
    if tr + va + te != params.count {
        return Err(Error::InvalidScenario(format!(
            "split {:?} does not sum to count {}",
            params.split, params.count
        )));
    }
    scenario.validate(spec.n_stories, params.duration, params.dt)?;
    for &dof in &params.measured_dofs {
        if dof >= spec.n_stories {
            return Err(Error::InvalidDof {
                dof,
                n: spec.n_stories,
            });
        }
    }
    let mats = build_shear_matrices(spec);
    let sequences: Result<Vec<Sequence>> = (0..params.count)
        .into_par_iter()
        .map(|i| {
            let seq_seed = seeding::substream(seed, "dataset", i as u64);
            generate_sequence(scenario, spec, &mats, params, seq_seed)
        })
        .collect();
    let sequences = sequences?;

    // Deterministic shuffled split.
    let mut order: Vec<usize> = (0..params.count).collect();
    let mut rng = seeding::rng_for(seed, "split", 0);
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let split = Split {
        train: order[..tr].to_vec(),
        val: order[tr..tr + va].to_vec(),
        test: order[tr + va..].to_vec(),
    };
    Ok(Dataset { sequences, split })
}

/// One sequence: load -> RK4 response -> noisy accelerations -> pseudo
/// integrals. The pseudo arrays cover all n channels of the noisy field;
/// `noisy_accel` exposes only the measured columns.
pub fn generate_sequence(
    scenario: &ScenarioSpec,
    spec: &ShearBuildingSpec,
    mats: &SystemMatrices,
    params: &DatasetParams,
    seq_seed: u64,
) -> Result<Sequence> {
    let load = gen_scenario_load(scenario, spec, params.duration, params.dt, seq_seed)?;
    let response = integrate_rk4(mats, &load, None)?;
    let noise_seed = seeding::substream(seq_seed, "noise", 0);
    let noisy_full = add_noise(&response.accelerations, params.nsr, noise_seed)?;
    let (pseudo_disp, pseudo_vel) = make_pseudo_measurements(&noisy_full, params.dt);
    let mut noisy_accel = DMatrix::zeros(load.len(), params.measured_dofs.len());
    for (col, &dof) in params.measured_dofs.iter().enumerate() {
        noisy_accel.column_mut(col).copy_from(&noisy_full.column(dof));
    }
    Ok(Sequence {
        measurements: MeasurementSet {
            measured_dofs: params.measured_dofs.clone(),
            noisy_accel,
            nsr: params.nsr,
            pseudo_disp,
            pseudo_vel,
            seed: seq_seed,
            dt: params.dt,
        },
        load,
    })
}
