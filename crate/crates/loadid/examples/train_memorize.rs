//! Overfit each network kind to a single short sequence - the standard
//! capability check that the cells, backpropagation through time, and Adam
//! all pull in the same direction.
//!
//! Run with: `cargo run --release --example train_memorize`

use nalgebra::DMatrix;

use loadid::model::{build_shear_matrices, ShearBuildingSpec};
use loadid::nets::{predict_load, train, CellKind, NetworkConfig};
use loadid::simulate::{gen_decaying_harmonic, integrate_rk4, Split};

fn main() {
    let spec = ShearBuildingSpec::six_story_reference();
    let mats = build_shear_matrices(&spec);
    let load = gen_decaying_harmonic(400.0, 2.0, 0.02, 0.5, 5.0, 0.01, 5, 6).unwrap();
    let resp = integrate_rk4(&mats, &load, None).unwrap();
    let measured = [2usize, 4, 5];
    let x = DMatrix::from_fn(3, load.len(), |r, c| resp.accelerations[(c, measured[r])]);
    let y = DMatrix::from_fn(1, load.len(), |_, c| load.forces[(c, 5)]);
    let split = Split {
        train: vec![0],
        val: vec![],
        test: vec![],
    };

    for cell in [CellKind::Lstm, CellKind::Gru, CellKind::Conv] {
        let config = NetworkConfig {
            cell,
            in_channels: 3,
            out_channels: 1,
            units: 30,
            dense_width: 100,
            dropout_rate: 0.0,
            kernel_width: 9,
            learning_rate: 1e-4,
            batch_size: 2,
            max_epochs: 500,
            patience: usize::MAX,
            seed: 3,
        };
        let (trained, report) = train(&config, &[(x.clone(), y.clone())], &split).unwrap();
        let first = report.train_loss[0];
        let last = *report.train_loss.last().unwrap();
        println!(
            "{:4}: normalized MSE {first:.3e} -> {last:.3e} over {} epochs ({:.0} s)",
            cell.name(),
            report.stopped_epoch,
            report.wall_time_s
        );
        let pred = predict_load(&trained, &x).unwrap();
        let peak_err = (0..load.len())
            .map(|k| (pred[(0, k)] - y[(0, k)]).abs())
            .fold(0.0f64, f64::max);
        println!(
            "      peak input error {peak_err:.1} N against a {:.0} N load",
            y.amax()
        );
    }
}
