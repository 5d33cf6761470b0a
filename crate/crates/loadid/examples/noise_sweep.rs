//! Accumulated-error ordering across noise levels with matched noise
//! realizations: the same Gaussian draw is scaled to 5/10/15/20% NSR.
//!
//! Run with: `cargo run --release --example noise_sweep`

use nalgebra::{DMatrix, DVector};

use loadid::metrics::accumulated_error;
use loadid::model::{build_shear_matrices, ParameterVector, ShearBuildingSpec};
use loadid::rkf::{run_rkf, FilterConfig};
use loadid::simulate::{
    add_noise, gen_decaying_harmonic, integrate_rk4, make_pseudo_measurements, MeasurementSet,
};

fn main() {
    let spec = ShearBuildingSpec::six_story_reference();
    let mats = build_shear_matrices(&spec);
    let load = gen_decaying_harmonic(400.0, 1.5, 0.01, 1.0, 200.0, 0.01, 5, 6).unwrap();
    let resp = integrate_rk4(&mats, &load, None).unwrap();
    let truth: Vec<f64> = (0..load.len()).map(|k| load.forces[(k, 5)]).collect();

    let theta0 = ParameterVector::new(
        ParameterVector::from_spec(&spec)
            .as_slice()
            .iter()
            .map(|v| v * 1.3)
            .collect(),
    )
    .unwrap();
    let mut known: Vec<Option<f64>> = vec![Some(0.0); 6];
    known[5] = None;
    let config = FilterConfig {
        q_scale: 1.0,
        r_scale: 1e-10,
        lambda2: 5e-2,
        mu: 5e-3,
        theta0,
        z0: DVector::zeros(12),
        p0_scale: 1.0,
        fd_step: 1e-6,
        known_inputs: known,
        detrend: 0.3,
        freeze_parameters: false,
    };

    println!("nsr    E(200 s)   (same noise realization, scaled)");
    for nsr in [0.05, 0.10, 0.15, 0.20] {
        let noisy_full = add_noise(&resp.accelerations, nsr, 99).unwrap();
        let measured = vec![2usize, 4, 5];
        let mut accel = DMatrix::zeros(load.len(), 3);
        for (c, &d) in measured.iter().enumerate() {
            accel.column_mut(c).copy_from(&noisy_full.column(d));
        }
        let (pseudo_disp, pseudo_vel) = make_pseudo_measurements(&noisy_full, 0.01);
        let seq = MeasurementSet {
            measured_dofs: measured,
            noisy_accel: accel,
            nsr,
            pseudo_disp,
            pseudo_vel,
            seed: 99,
            dt: 0.01,
        };
        let trace = run_rkf(&seq, &config, &spec).unwrap();
        let pred: Vec<f64> = (0..load.len()).map(|k| trace.u_est[(k, 5)]).collect();
        let curve = accumulated_error(&load.time_grid, &pred, &truth, 1e-3).unwrap();
        println!("{:>3.0}%   {:>9.0}", nsr * 100.0, curve.final_e());
    }
}
