//! Evaluation metrics: accumulated relative error, MSE, and achieved
//! noise-to-signal ratios.
//!
//! The accumulated error sums per-sample absolute relative load errors over
//! time. The true load vanishes before onset and at zero crossings, where the
//! ratio is undefined; samples with `|u_true| < eps_rel * max|u_true|` are
//! skipped, contribute zero, and are recorded in the retained mask so the
//! effect is auditable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Accumulated relative error `E(t)` with its retained-sample mask.
#[derive(Debug, Clone)]
pub struct ErrorCurve {
    pub time_grid: Vec<f64>,
    /// Cumulative error at each instant; non-decreasing.
    pub e: Vec<f64>,
    /// Whether each sample's denominator cleared the threshold.
    pub retained: Vec<bool>,
    pub eps_rel: f64,
}

impl ErrorCurve {
    pub fn final_e(&self) -> f64 {
        self.e.last().copied().unwrap_or(0.0)
    }

    pub fn retained_count(&self) -> usize {
        self.retained.iter().filter(|&&r| r).count()
    }
}

/// `E(t) = sum_{t_k <= t} |(u_pred - u_true) / u_true|` over retained samples.
pub fn accumulated_error(
    time_grid: &[f64],
    pred: &[f64],
    truth: &[f64],
    eps_rel: f64,
) -> Result<ErrorCurve> {
    if pred.len() != truth.len() || time_grid.len() != truth.len() {
        return Err(Error::LengthMismatch(format!(
            "time {}, pred {}, truth {}",
            time_grid.len(),
            pred.len(),
            truth.len()
        )));
    }
    if !(eps_rel > 0.0) {
        return Err(Error::DegenerateMetric(format!(
            "eps_rel must be positive, got {eps_rel}"
        )));
    }
    let max_abs = truth.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if max_abs == 0.0 {
        return Err(Error::DegenerateMetric("all-zero truth".into()));
    }
    let threshold = eps_rel * max_abs;
    let mut e = Vec::with_capacity(truth.len());
    let mut retained = Vec::with_capacity(truth.len());
    let mut acc = 0.0;
    for (&p, &t) in pred.iter().zip(truth) {
        let keep = t.abs() >= threshold;
        if keep {
            acc += ((p - t) / t).abs();
        }
        retained.push(keep);
        e.push(acc);
    }
    Ok(ErrorCurve {
        time_grid: time_grid.to_vec(),
        e,
        retained,
        eps_rel,
    })
}

/// `RMS(noisy - clean) / RMS(clean)`.
pub fn rms_nsr(clean: &[f64], noisy: &[f64]) -> Result<f64> {
    if clean.len() != noisy.len() {
        return Err(Error::LengthMismatch(format!(
            "clean {}, noisy {}",
            clean.len(),
            noisy.len()
        )));
    }
    let rms = |it: &mut dyn Iterator<Item = f64>| -> f64 {
        let (sum, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
        if n == 0 {
            0.0
        } else {
            (sum / n as f64).sqrt()
        }
    };
    let clean_rms = rms(&mut clean.iter().copied());
    if clean_rms == 0.0 {
        return Err(Error::DegenerateMetric("zero clean RMS".into()));
    }
    let noise_rms = rms(&mut clean.iter().zip(noisy).map(|(c, n)| n - c));
    Ok(noise_rms / clean_rms)
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::LengthMismatch(format!(
            "pred {}, truth {}",
            pred.len(),
            truth.len()
        )));
    }
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64)
}

/// One evaluated (method, sequence) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub method: String,
    pub sequence: String,
    pub final_e: f64,
    pub mse: f64,
}

/// Final-E table: one row per sequence, one column per method, preserving
/// first-seen order from the inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryTable {
    pub methods: Vec<String>,
    pub sequences: Vec<String>,
    /// `final_e[seq][method]`, NaN when missing.
    pub final_e: Vec<Vec<f64>>,
    /// `mse[seq][method]`, NaN when missing.
    pub mse: Vec<Vec<f64>>,
}

impl SummaryTable {
    pub fn get_final_e(&self, sequence: &str, method: &str) -> Option<f64> {
        let r = self.sequences.iter().position(|s| s == sequence)?;
        let c = self.methods.iter().position(|m| m == method)?;
        let v = self.final_e[r][c];
        if v.is_nan() {
            None
        } else {
            Some(v)
        }
    }

    /// Renders the table as CSV with a `sequence` key column followed by
    /// `final_E_<method>` and `mse_<method>` columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sequence");
        for m in &self.methods {
            out.push_str(&format!(",final_E_{m}"));
        }
        for m in &self.methods {
            out.push_str(&format!(",mse_{m}"));
        }
        out.push('\n');
        for (r, seq) in self.sequences.iter().enumerate() {
            out.push_str(seq);
            for c in 0..self.methods.len() {
                out.push_str(&format!(",{}", self.final_e[r][c]));
            }
            for c in 0..self.methods.len() {
                out.push_str(&format!(",{}", self.mse[r][c]));
            }
            out.push('\n');
        }
        out
    }
}

/// Collects per-run error curves into the final-E table.
pub fn summarize(entries: &[SummaryEntry]) -> Result<SummaryTable> {
    if entries.is_empty() {
        return Err(Error::DegenerateMetric("no entries to summarize".into()));
    }
    let mut methods: Vec<String> = Vec::new();
    let mut sequences: Vec<String> = Vec::new();
    for e in entries {
        if !methods.contains(&e.method) {
            methods.push(e.method.clone());
        }
        if !sequences.contains(&e.sequence) {
            sequences.push(e.sequence.clone());
        }
    }
    let mut final_e = vec![vec![f64::NAN; methods.len()]; sequences.len()];
    let mut mse_tab = vec![vec![f64::NAN; methods.len()]; sequences.len()];
    for e in entries {
        let r = sequences.iter().position(|s| *s == e.sequence).unwrap();
        let c = methods.iter().position(|m| *m == e.method).unwrap();
        final_e[r][c] = e.final_e;
        mse_tab[r][c] = e.mse;
    }
    Ok(SummaryTable {
        methods,
        sequences,
        final_e,
        mse: mse_tab,
    })
}
