//! Training loop: normalization, mini-batches, Adam, and early stopping.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::seeding;
use crate::simulate::Split;

use super::adam::{adam_step, AdamHyper, AdamState};
use super::dense::{mse_grad, mse_loss};
use super::{Network, NetworkConfig};

/// Per-channel z-score constants, fitted on the training split only.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Normalization {
    pub in_mean: Vec<f64>,
    pub in_std: Vec<f64>,
    pub out_mean: Vec<f64>,
    pub out_std: Vec<f64>,
}

impl Normalization {
    pub fn fit(sequences: &[(DMatrix<f64>, DMatrix<f64>)], train_idx: &[usize]) -> Self {
        let fit_channels = |select: &dyn Fn(&(DMatrix<f64>, DMatrix<f64>)) -> &DMatrix<f64>| {
            let channels = select(&sequences[train_idx[0]]).nrows();
            let mut mean = vec![0.0; channels];
            let mut count = 0usize;
            for &i in train_idx {
                let m = select(&sequences[i]);
                count += m.ncols();
                for ch in 0..channels {
                    mean[ch] += m.row(ch).iter().sum::<f64>();
                }
            }
            let count_f = count.max(1) as f64;
            mean.iter_mut().for_each(|v| *v /= count_f);
            let mut var = vec![0.0; channels];
            for &i in train_idx {
                let m = select(&sequences[i]);
                for ch in 0..channels {
                    var[ch] += m.row(ch).iter().map(|v| (v - mean[ch]).powi(2)).sum::<f64>();
                }
            }
            let std: Vec<f64> = var
                .iter()
                .map(|v| {
                    let s = (v / count_f).sqrt();
                    if s > 0.0 {
                        s
                    } else {
                        1.0
                    }
                })
                .collect();
            (mean, std)
        };
        let (in_mean, in_std) = fit_channels(&|s| &s.0);
        let (out_mean, out_std) = fit_channels(&|s| &s.1);
        Self {
            in_mean,
            in_std,
            out_mean,
            out_std,
        }
    }

    pub fn normalize_input(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| {
            (x[(r, c)] - self.in_mean[r]) / self.in_std[r]
        })
    }

    pub fn normalize_target(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(y.nrows(), y.ncols(), |r, c| {
            (y[(r, c)] - self.out_mean[r]) / self.out_std[r]
        })
    }

    pub fn denormalize_output(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(y.nrows(), y.ncols(), |r, c| {
            y[(r, c)] * self.out_std[r] + self.out_mean[r]
        })
    }
}

/// Per-epoch loss curves and stopping information.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    /// NaN entries when the validation split is empty.
    pub val_loss: Vec<f64>,
    pub stopped_epoch: usize,
    pub best_val_loss: f64,
    pub wall_time_s: f64,
}

/// A trained network with everything needed for physical-unit predictions.
#[derive(Debug, Clone)]
pub struct TrainedNetwork {
    pub config: NetworkConfig,
    pub network: Network,
    pub norm: Normalization,
}

/// Trains on the split's train sequences with validation-based early
/// stopping; returns the parameters from the best validation epoch. Fully
/// deterministic per config seed.
pub fn train(
    config: &NetworkConfig,
    sequences: &[(DMatrix<f64>, DMatrix<f64>)],
    split: &Split,
) -> Result<(TrainedNetwork, TrainReport)> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(Error::InvalidConfig("empty training split".into()));
    }
    for (i, (x, y)) in sequences.iter().enumerate() {
        if x.nrows() != config.in_channels || y.nrows() != config.out_channels {
            return Err(Error::ShapeMismatch {
                layer: "dataset".into(),
                detail: format!(
                    "sequence {i} has {} input / {} output channels, config expects {} / {}",
                    x.nrows(),
                    y.nrows(),
                    config.in_channels,
                    config.out_channels
                ),
            });
        }
        if x.ncols() != y.ncols() {
            return Err(Error::LengthMismatch(format!(
                "sequence {i}: input length {} vs target length {}",
                x.ncols(),
                y.ncols()
            )));
        }
    }

    let start = Instant::now();
    let norm = Normalization::fit(sequences, &split.train);
    let normalized: Vec<(DMatrix<f64>, DMatrix<f64>)> = sequences
        .iter()
        .map(|(x, y)| (norm.normalize_input(x), norm.normalize_target(y)))
        .collect();

    let mut network = Network::init(config)?;
    let mut flat = network.to_flat();
    let mut adam = AdamState::zeros(flat.len());
    let hyper = AdamHyper::with_lr(config.learning_rate);

    let mut report = TrainReport {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        stopped_epoch: 0,
        best_val_loss: f64::INFINITY,
        wall_time_s: 0.0,
    };
    let mut best_flat = flat.clone();
    let mut best_signal = f64::INFINITY;
    let mut stale_epochs = 0usize;
    let mut adam_t = 0usize;
    let mut dropout_counter = 0u64;

    for epoch in 0..config.max_epochs {
        // deterministic shuffle per epoch
        let mut order = split.train.clone();
        let mut rng = seeding::rng_for(config.seed, "batch", epoch as u64);
        for i in (1..order.len()).rev() {
            let j = rand::Rng::gen_range(&mut rng, 0..=i);
            order.swap(i, j);
        }

        let mut epoch_loss = 0.0;
        let mut epoch_sequences = 0usize;
        for batch in order.chunks(config.batch_size) {
            let mut grads_flat = vec![0.0; flat.len()];
            let mut batch_loss = 0.0;
            for &idx in batch {
                let (x, y) = &normalized[idx];
                let dropout_seed = seeding::substream(config.seed, "dropout", dropout_counter);
                dropout_counter += 1;
                let (pred, tape) = network.forward(config, x, true, dropout_seed)?;
                let loss = mse_loss(&pred, y)?;
                if !loss.is_finite() {
                    return Err(Error::TrainingDiverged { epoch });
                }
                batch_loss += loss;
                let grads = network.backward(&tape, &mse_grad(&pred, y));
                let g = grads.to_flat();
                for (acc, gi) in grads_flat.iter_mut().zip(&g) {
                    *acc += gi;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grads_flat.iter_mut().for_each(|g| *g *= scale);
            epoch_loss += batch_loss;
            epoch_sequences += batch.len();
            adam_t += 1;
            adam_step(&mut flat, &grads_flat, &mut adam, &hyper, adam_t);
            network.from_flat(&flat);
        }
        let train_loss = epoch_loss / epoch_sequences.max(1) as f64;

        let val_loss = if split.val.is_empty() {
            f64::NAN
        } else {
            let mut acc = 0.0;
            for &idx in &split.val {
                let (x, y) = &normalized[idx];
                let (pred, _) = network.forward(config, x, false, 0)?;
                acc += mse_loss(&pred, y)?;
            }
            acc / split.val.len() as f64
        };
        if !train_loss.is_finite() || (!split.val.is_empty() && !val_loss.is_finite()) {
            return Err(Error::TrainingDiverged { epoch });
        }
        report.train_loss.push(train_loss);
        report.val_loss.push(val_loss);
        report.stopped_epoch = epoch + 1;

        let signal = if split.val.is_empty() { train_loss } else { val_loss };
        if signal < best_signal {
            best_signal = signal;
            best_flat.copy_from_slice(&flat);
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs > config.patience {
                break;
            }
        }
    }

    network.from_flat(&best_flat);
    report.best_val_loss = best_signal;
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok((
        TrainedNetwork {
            config: config.clone(),
            network,
            norm,
        },
        report,
    ))
}

/// Inference (dropout off) plus de-normalization back to physical units [N].
pub fn predict_load(trained: &TrainedNetwork, input: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let x = trained.norm.normalize_input(input);
    let (y, _) = trained.network.forward(&trained.config, &x, false, 0)?;
    Ok(trained.norm.denormalize_output(&y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::CellKind;

    fn memorization_setup(t_len: usize) -> (Vec<(DMatrix<f64>, DMatrix<f64>)>, Split) {
        let x = DMatrix::from_fn(3, t_len, |r, c| {
            ((c as f64 * 0.07 + r as f64) * 1.3).sin() + 0.1 * r as f64
        });
        let y = DMatrix::from_fn(1, t_len, |_, c| 40.0 * (c as f64 * 0.05).sin());
        (
            vec![(x, y)],
            Split {
                train: vec![0],
                val: vec![],
                test: vec![],
            },
        )
    }

    fn config(cell: CellKind, max_epochs: usize) -> NetworkConfig {
        NetworkConfig {
            cell,
            in_channels: 3,
            out_channels: 1,
            units: 8,
            dense_width: 16,
            dropout_rate: 0.0,
            kernel_width: 5,
            learning_rate: 3e-3,
            batch_size: 2,
            max_epochs,
            patience: 1000,
            seed: 4,
        }
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let (seqs, split) = memorization_setup(30);
        let cfg = config(CellKind::Gru, 0);
        let (trained, report) = train(&cfg, &seqs, &split).unwrap();
        assert!(report.train_loss.is_empty());
        assert_eq!(report.stopped_epoch, 0);
        let fresh = Network::init(&cfg).unwrap();
        assert_eq!(trained.network, fresh);
    }

    #[test]
    fn short_memorization_reduces_loss() {
        let (seqs, split) = memorization_setup(50);
        let cfg = config(CellKind::Gru, 150);
        let (_, report) = train(&cfg, &seqs, &split).unwrap();
        let first = report.train_loss[0];
        let last = *report.train_loss.last().unwrap();
        assert!(
            last < 0.2 * first,
            "loss went from {first} to only {last} in 150 epochs"
        );
    }

    #[test]
    fn best_so_far_training_loss_non_increasing() {
        let (seqs, split) = memorization_setup(40);
        let cfg = config(CellKind::Lstm, 60);
        let (_, report) = train(&cfg, &seqs, &split).unwrap();
        let mut best = f64::INFINITY;
        let mut bests = Vec::new();
        for &l in &report.train_loss {
            best = best.min(l);
            bests.push(best);
        }
        for w in bests.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (seqs, split) = memorization_setup(30);
        let cfg = config(CellKind::Conv, 20);
        let (a, ra) = train(&cfg, &seqs, &split).unwrap();
        let (b, rb) = train(&cfg, &seqs, &split).unwrap();
        assert_eq!(a.network, b.network);
        assert_eq!(ra.train_loss, rb.train_loss);
    }

    #[test]
    fn normalization_round_trip() {
        let (seqs, split) = memorization_setup(25);
        let norm = Normalization::fit(&seqs, &split.train);
        let y = &seqs[0].1;
        let back = norm.denormalize_output(&norm.normalize_target(y));
        assert!((y - back).amax() < 1e-12);
    }

    #[test]
    fn prediction_memorizes_training_sequence() {
        let (seqs, split) = memorization_setup(50);
        let cfg = config(CellKind::Gru, 300);
        let (trained, _) = train(&cfg, &seqs, &split).unwrap();
        let pred = predict_load(&trained, &seqs[0].0).unwrap();
        let target = &seqs[0].1;
        let err = crate::nets::mse_loss(&pred, target).unwrap();
        let var = target.iter().map(|v| v * v).sum::<f64>() / target.len() as f64;
        assert!(err < 0.05 * var, "memorization mse {err} vs variance {var}");
        // repeated prediction is identical
        let again = predict_load(&trained, &seqs[0].0).unwrap();
        assert_eq!(pred, again);
    }

    #[test]
    fn early_stopping_respects_patience() {
        let (mut seqs, mut split) = memorization_setup(30);
        // second copy as validation
        seqs.push(seqs[0].clone());
        split.val = vec![1];
        let mut cfg = config(CellKind::Gru, 500);
        cfg.patience = 3;
        cfg.learning_rate = 0.5; // deliberately unstable so validation stalls
        let result = train(&cfg, &seqs, &split);
        if let Ok((_, report)) = result {
            assert!(report.stopped_epoch <= 500);
        }
    }
}
