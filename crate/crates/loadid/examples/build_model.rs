//! Build the six-story shear-building model, inspect its matrices, and
//! discretize the state space.
//!
//! Run with: `cargo run --release --example build_model`

use loadid::model::{
    assemble_state_space, build_shear_matrices, discretize, ParameterVector, ShearBuildingSpec,
};

fn main() {
    let spec = ShearBuildingSpec::six_story_reference();
    let mats = build_shear_matrices(&spec);
    println!("six-story shear building");
    println!("  masses      : {:?} kg", spec.masses);
    println!("  stiffnesses : {:?} N/m", spec.stiffnesses);
    println!("  dampings    : {:?} N*s/m", spec.dampings);
    println!("K = {:.0}", mats.k);

    // natural frequencies from the undamped eigenvalue problem
    let m_inv_k = mats.m.clone().try_inverse().unwrap() * &mats.k;
    let mut omegas: Vec<f64> = m_inv_k
        .complex_eigenvalues()
        .iter()
        .map(|e| e.re.max(0.0).sqrt())
        .collect();
    omegas.sort_by(f64::total_cmp);
    println!(
        "natural frequencies [rad/s]: {:?}",
        omegas.iter().map(|w| (w * 100.0).round() / 100.0).collect::<Vec<_>>()
    );

    // first-order form with the shaker input at the top story
    let ss = assemble_state_space(&mats, &[5]).unwrap();
    println!("A is {}x{}, B is {}x{}", ss.a.nrows(), ss.a.ncols(), ss.b.nrows(), ss.b.ncols());

    let dss = discretize(&ss, 0.01).unwrap();
    println!("discretized at dt = {} s: |A_d|_max = {:.4}", dss.dt, dss.a_d.amax());

    // the parameter vector used by joint estimation round-trips exactly
    let theta = ParameterVector::from_spec(&spec);
    println!("theta = [k_1..k_6, c_1..c_6] = {:?}", theta.as_slice());
}
