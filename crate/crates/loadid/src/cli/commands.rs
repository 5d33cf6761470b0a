//! The pipeline subcommands, as library functions.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{accumulated_error, mse, summarize, SummaryEntry, SummaryTable};
use crate::nets::{predict_load, train, CellKind};
use crate::rkf::run_rkf;
use crate::simulate::{build_dataset, make_pseudo_measurements, MeasurementSet};

use super::io::{
    self, read_dataset_dir, seq_file_name, write_dataset_dir, write_error_curve_csv,
    write_loss_csv, write_prediction_csv, write_trace_csv, DatasetManifest, LoadedSequence,
    SequenceEntry,
};
use super::ExperimentConfig;

/// Denominator threshold for the accumulated error metric: samples with
/// `|u_true| < eps_rel * max|u_true|` are skipped (the ratio is undefined at
/// zero crossings and before load onset).
pub const DEFAULT_EPS_REL: f64 = 1e-3;

fn dataset_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join("dataset")
}

/// Generates the dataset and writes per-sequence CSVs plus the manifest.
/// Deterministic per master seed, so reruns are byte-identical.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let spec = cfg.building.to_spec()?;
    let scenario = cfg.scenario.to_spec(spec.n_stories)?;
    let params = cfg.dataset_params();
    let dataset = build_dataset(&scenario, &spec, &params, cfg.master_seed)
        .map_err(|e| e.with_context("generate"))?;
    let manifest = DatasetManifest {
        schema_version: 1,
        master_seed: cfg.master_seed,
        dt: cfg.dataset.dt,
        duration: cfg.dataset.duration,
        nsr: cfg.dataset.nsr,
        n_stories: spec.n_stories,
        measured_stories: cfg.dataset.measured_stories.clone(),
        load_stories: cfg.scenario.load_stories(spec.n_stories),
        split: dataset.split.clone(),
        scenario: cfg.scenario.clone(),
        building: cfg.building.clone(),
        sequences: dataset
            .sequences
            .iter()
            .enumerate()
            .map(|(i, seq)| SequenceEntry {
                file: seq_file_name(i),
                seed: seq.measurements.seed,
                descriptor: seq.load.descriptor.clone(),
            })
            .collect(),
    };
    write_dataset_dir(&dataset_dir(cfg), &dataset, &manifest)
}

/// Network training inputs: measured accelerations in, loads at the loaded
/// stories out, channels x T.
fn network_pairs(
    manifest: &DatasetManifest,
    sequences: &[LoadedSequence],
) -> Vec<(DMatrix<f64>, DMatrix<f64>)> {
    sequences
        .iter()
        .map(|seq| {
            let x = seq.a_meas.transpose();
            let mut y = DMatrix::zeros(manifest.load_stories.len(), seq.f_true.nrows());
            for (r, &story) in manifest.load_stories.iter().enumerate() {
                for k in 0..seq.f_true.nrows() {
                    y[(r, k)] = seq.f_true[(k, story - 1)];
                }
            }
            (x, y)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model_path: PathBuf,
    pub loss_path: PathBuf,
    pub prediction_paths: Vec<PathBuf>,
}

/// Trains one network kind on the generated dataset; writes the model
/// container, the loss curves, and predictions for the test split.
pub fn cmd_train(cfg: &ExperimentConfig, kind: CellKind) -> Result<TrainOutput> {
    cfg.validate()?;
    let (manifest, sequences) = read_dataset_dir(&dataset_dir(cfg))?;
    let pairs = network_pairs(&manifest, &sequences);
    let net_cfg = cfg.network_config(kind)?;
    let (trained, report) = train(&net_cfg, &pairs, &manifest.split)
        .map_err(|e| e.with_context(format!("train {}", kind.name())))?;

    let model_path = cfg.output_dir.join("models").join(format!("{}.bin", kind.name()));
    io::save_model(&model_path, &trained)?;
    let loss_path = cfg
        .output_dir
        .join("reports")
        .join(format!("{}_loss.csv", kind.name()));
    write_loss_csv(&loss_path, &report.train_loss, &report.val_loss)?;

    let mut prediction_paths = Vec::new();
    for &idx in &manifest.split.test {
        let pred = predict_load(&trained, &pairs[idx].0)
            .map_err(|e| e.with_context(format!("predict {} seq {idx}", kind.name())))?;
        let path = cfg
            .output_dir
            .join("predictions")
            .join(format!("pred_{}_seq_{idx:02}.csv", kind.name()));
        write_prediction_csv(&path, &sequences[idx].time, &pred, &manifest.load_stories)?;
        prediction_paths.push(path);
    }
    Ok(TrainOutput {
        model_path,
        loss_path,
        prediction_paths,
    })
}

/// Rebuilds a filter-ready measurement set from a reloaded sequence. The
/// pseudo arrays hold trapezoidal integrals of the measured channels; the
/// filter maintains its own online integrals either way.
fn measurement_set(
    seq: &LoadedSequence,
    manifest: &DatasetManifest,
    seed: u64,
) -> MeasurementSet {
    let measured_dofs: Vec<usize> = manifest.measured_stories.iter().map(|s| s - 1).collect();
    let (pd_meas, pv_meas) = make_pseudo_measurements(&seq.a_meas, manifest.dt);
    let t_len = seq.a_meas.nrows();
    let mut pseudo_disp = DMatrix::zeros(t_len, manifest.n_stories);
    let mut pseudo_vel = DMatrix::zeros(t_len, manifest.n_stories);
    for (c, &dof) in measured_dofs.iter().enumerate() {
        pseudo_disp.column_mut(dof).copy_from(&pd_meas.column(c));
        pseudo_vel.column_mut(dof).copy_from(&pv_meas.column(c));
    }
    MeasurementSet {
        measured_dofs,
        noisy_accel: seq.a_meas.clone(),
        nsr: manifest.nsr,
        pseudo_disp,
        pseudo_vel,
        seed,
        dt: manifest.dt,
    }
}

/// Runs the filter over every test sequence; writes one trace CSV each.
pub fn cmd_filter(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let (manifest, sequences) = read_dataset_dir(&dataset_dir(cfg))?;
    let spec = manifest.building.to_spec()?;
    let filter_cfg = cfg.filter_config(&spec)?;
    let traces_dir = cfg.output_dir.join("traces");
    fs::create_dir_all(&traces_dir)?;
    let results: Result<Vec<PathBuf>> = manifest
        .split
        .test
        .par_iter()
        .map(|&idx| {
            let entry = &manifest.sequences[idx];
            let seq = measurement_set(&sequences[idx], &manifest, entry.seed);
            let trace = run_rkf(&seq, &filter_cfg, &spec)
                .map_err(|e| e.with_context(format!("filter seq_{idx:02}")))?;
            let path = traces_dir.join(format!("trace_seq_{idx:02}.csv"));
            write_trace_csv(&path, &trace)?;
            Ok(path)
        })
        .collect();
    results
}

fn parse_seq_index(stem: &str) -> Option<usize> {
    stem.rsplit("seq_").next()?.parse().ok()
}

/// Discovers prediction files: `pred_<method>_seq_NN.csv` and
/// `trace_seq_NN.csv` in the given directory or its `predictions/` and
/// `traces/` children.
fn discover_predictions(dir: &Path) -> Vec<(String, usize, PathBuf)> {
    let mut found = Vec::new();
    for sub in [dir.to_path_buf(), dir.join("predictions"), dir.join("traces")] {
        let Ok(entries) = fs::read_dir(&sub) else {
            continue;
        };
        for entry in entries.flatten() {
            let path = entry.path();
            let Some(name) = path.file_name().and_then(|s| s.to_str()) else {
                continue;
            };
            let Some(stem) = name.strip_suffix(".csv") else {
                continue;
            };
            if let Some(rest) = stem.strip_prefix("pred_") {
                if let Some(idx) = parse_seq_index(rest) {
                    let method = rest.split("_seq_").next().unwrap_or("net").to_string();
                    found.push((method, idx, path));
                }
            } else if stem.starts_with("trace_seq_") {
                if let Some(idx) = parse_seq_index(stem) {
                    found.push(("rkf".to_string(), idx, path));
                }
            }
        }
    }
    found.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
    found
}

/// Evaluates every discovered prediction against the dataset truth at the
/// report story; writes per-run error curves and the summary table.
pub fn cmd_evaluate(cfg: &ExperimentConfig, predictions_dir: &Path) -> Result<SummaryTable> {
    cfg.validate()?;
    let (manifest, sequences) = read_dataset_dir(&dataset_dir(cfg))?;
    let report_story = *manifest
        .load_stories
        .last()
        .ok_or_else(|| Error::MissingInput("manifest has no load stories".into()))?;
    let found = discover_predictions(predictions_dir);
    if found.is_empty() {
        return Err(Error::MissingInput(format!(
            "no prediction files under {}",
            predictions_dir.display()
        )));
    }
    let eval_dir = cfg.output_dir.join("eval");
    fs::create_dir_all(&eval_dir)?;
    let mut entries = Vec::new();
    for (method, idx, path) in found {
        if idx >= sequences.len() {
            return Err(Error::MissingInput(format!(
                "{}: sequence index {idx} outside dataset",
                path.display()
            )));
        }
        let truth: Vec<f64> = sequences[idx]
            .f_true
            .column(report_story - 1)
            .iter()
            .copied()
            .collect();
        let (header, rows) = io::read_numeric_csv(&path)?;
        let col_name_pred = format!("u_pred_{report_story}");
        let col_name_trace = format!("u_est_{report_story}");
        let col = header
            .iter()
            .position(|h| h == &col_name_pred || h == &col_name_trace)
            .ok_or_else(|| {
                Error::MissingInput(format!(
                    "{}: no {col_name_pred} or {col_name_trace} column",
                    path.display()
                ))
            })?;
        let pred: Vec<f64> = rows.iter().map(|r| r[col]).collect();
        if pred.len() != truth.len() {
            return Err(Error::LengthMismatch(format!(
                "{}: {} samples vs {} in the dataset",
                path.display(),
                pred.len(),
                truth.len()
            )));
        }
        let curve = accumulated_error(&sequences[idx].time, &pred, &truth, DEFAULT_EPS_REL)
            .map_err(|e| e.with_context(format!("evaluate {method} seq_{idx:02}")))?;
        write_error_curve_csv(
            &eval_dir.join(format!("error_curve_{method}_seq_{idx:02}.csv")),
            &curve,
        )?;
        entries.push(SummaryEntry {
            method,
            sequence: format!("seq_{idx:02}"),
            final_e: curve.final_e(),
            mse: mse(&pred, &truth)?,
        });
    }
    let table = summarize(&entries)?;
    fs::write(eval_dir.join("summary.csv"), table.to_csv())?;
    Ok(table)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub crate_version: String,
    pub master_seed: u64,
    pub stage_seconds: BTreeMap<String, f64>,
    pub files: Vec<FileRecord>,
}

/// Full comparison report returned by [`cmd_compare`].
#[derive(Debug, Clone)]
pub struct CompareReport {
    /// Summary of the main run (absent in sweep-only mode).
    pub summary: Option<SummaryTable>,
    /// One `(nsr, summary)` per sweep level.
    pub sweep_summaries: Vec<(f64, SummaryTable)>,
    pub manifest_path: PathBuf,
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

fn write_run_manifest(
    cfg: &ExperimentConfig,
    stage_seconds: BTreeMap<String, f64>,
) -> Result<PathBuf> {
    let mut files = Vec::new();
    collect_files(&cfg.output_dir, &mut files)?;
    files.sort();
    let records: Result<Vec<FileRecord>> = files
        .iter()
        .filter(|p| p.file_name().map_or(true, |n| n != "run_manifest.json"))
        .map(|p| {
            Ok(FileRecord {
                path: p
                    .strip_prefix(&cfg.output_dir)
                    .unwrap_or(p)
                    .to_string_lossy()
                    .into_owned(),
                sha256: io::sha256_hex(p)?,
                bytes: fs::metadata(p)?.len(),
            })
        })
        .collect();
    let manifest = RunManifest {
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: cfg.master_seed,
        stage_seconds,
        files: records?,
    };
    let path = cfg.output_dir.join("run_manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

/// Orchestrates generate -> train (x3) -> filter -> evaluate, or, when an
/// NSR sweep is configured, generate -> filter -> evaluate per noise level
/// with matched noise realizations.
pub fn cmd_compare(cfg: &ExperimentConfig) -> Result<CompareReport> {
    cfg.validate()?;
    let mut timings = BTreeMap::new();

    if let Some(sweep) = cfg.nsr_sweep.clone() {
        let mut sweep_summaries = Vec::new();
        for (i, nsr) in sweep.iter().enumerate() {
            let mut level_cfg = cfg.clone();
            level_cfg.nsr_sweep = None;
            level_cfg.dataset.nsr = *nsr;
            level_cfg.output_dir = cfg
                .output_dir
                .join(format!("nsr_{:03}", (nsr * 1000.0).round() as u64));
            let t = Instant::now();
            cmd_generate(&level_cfg)?;
            cmd_filter(&level_cfg)?;
            let table = cmd_evaluate(&level_cfg, &level_cfg.output_dir)?;
            timings.insert(format!("level_{i}"), t.elapsed().as_secs_f64());
            sweep_summaries.push((*nsr, table));
        }
        let manifest_path = write_run_manifest(cfg, timings)?;
        return Ok(CompareReport {
            summary: None,
            sweep_summaries,
            manifest_path,
        });
    }

    let t = Instant::now();
    cmd_generate(cfg)?;
    timings.insert("generate".to_string(), t.elapsed().as_secs_f64());
    // the three trainings are independent and separately seeded
    let train_results: Result<Vec<(CellKind, f64)>> = [CellKind::Lstm, CellKind::Gru, CellKind::Conv]
        .into_par_iter()
        .map(|kind| {
            let t = Instant::now();
            cmd_train(cfg, kind)?;
            Ok((kind, t.elapsed().as_secs_f64()))
        })
        .collect();
    for (kind, seconds) in train_results? {
        timings.insert(format!("train_{}", kind.name()), seconds);
    }
    let t = Instant::now();
    cmd_filter(cfg)?;
    timings.insert("filter".to_string(), t.elapsed().as_secs_f64());
    let t = Instant::now();
    let summary = cmd_evaluate(cfg, &cfg.output_dir)?;
    timings.insert("evaluate".to_string(), t.elapsed().as_secs_f64());
    let manifest_path = write_run_manifest(cfg, timings)?;
    Ok(CompareReport {
        summary: Some(summary),
        sweep_summaries: Vec::new(),
        manifest_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    /// A tiny configuration that runs the whole pipeline in seconds.
    fn smoke_config(dir: &Path) -> ExperimentConfig {
        let mut cfg = super::super::preset_desk();
        cfg.dataset.count = 4;
        cfg.dataset.split = (2, 1, 1);
        cfg.dataset.duration = 4.0;
        cfg.dataset.dt = 0.02;
        if let super::super::ScenarioConfig::Shaker { onset, .. } = &mut cfg.scenario {
            *onset = (0.0, 1.0);
        }
        cfg.networks.max_epochs = 8;
        cfg.networks.units = 4;
        cfg.networks.dense_width = 8;
        cfg.networks.kernel_width = 3;
        cfg.output_dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn generate_writes_files_and_manifest() {
        let dir = tempdir().unwrap();
        let cfg = smoke_config(dir.path());
        let files = cmd_generate(&cfg).unwrap();
        assert_eq!(files.len(), 5); // 4 sequences + manifest
        let (manifest, sequences) = read_dataset_dir(&dataset_dir(&cfg)).unwrap();
        assert_eq!(manifest.split.train.len(), 2);
        assert_eq!(sequences.len(), 4);
        assert_eq!(sequences[0].a_meas.ncols(), 3);
        assert_eq!(sequences[0].f_true.ncols(), 6);
    }

    #[test]
    fn generate_is_idempotent() {
        let dir = tempdir().unwrap();
        let cfg = smoke_config(dir.path());
        cmd_generate(&cfg).unwrap();
        let before = fs::read(dataset_dir(&cfg).join("seq_00.csv")).unwrap();
        cmd_generate(&cfg).unwrap();
        let after = fs::read(dataset_dir(&cfg).join("seq_00.csv")).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn train_filter_evaluate_pipeline() {
        let dir = tempdir().unwrap();
        let cfg = smoke_config(dir.path());
        cmd_generate(&cfg).unwrap();
        let out = cmd_train(&cfg, CellKind::Conv).unwrap();
        assert!(out.model_path.exists());
        assert!(out.loss_path.exists());
        assert_eq!(out.prediction_paths.len(), 1);
        let traces = cmd_filter(&cfg).unwrap();
        assert_eq!(traces.len(), 1);
        let table = cmd_evaluate(&cfg, &cfg.output_dir).unwrap();
        assert!(table.methods.contains(&"conv".to_string()));
        assert!(table.methods.contains(&"rkf".to_string()));
        assert!(cfg.output_dir.join("eval").join("summary.csv").exists());
    }

    #[test]
    fn evaluate_without_predictions_is_missing_input() {
        let dir = tempdir().unwrap();
        let cfg = smoke_config(dir.path());
        cmd_generate(&cfg).unwrap();
        let err = cmd_evaluate(&cfg, &cfg.output_dir).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn perfect_predictions_give_zero_table() {
        let dir = tempdir().unwrap();
        let cfg = smoke_config(dir.path());
        cmd_generate(&cfg).unwrap();
        let (manifest, sequences) = read_dataset_dir(&dataset_dir(&cfg)).unwrap();
        let idx = manifest.split.test[0];
        let seq = &sequences[idx];
        let story = *manifest.load_stories.last().unwrap();
        let mut pred = DMatrix::zeros(1, seq.time.len());
        for k in 0..seq.time.len() {
            pred[(0, k)] = seq.f_true[(k, story - 1)];
        }
        let pdir = cfg.output_dir.join("predictions");
        write_prediction_csv(
            &pdir.join(format!("pred_perfect_seq_{idx:02}.csv")),
            &seq.time,
            &pred,
            &[story],
        )
        .unwrap();
        let table = cmd_evaluate(&cfg, &cfg.output_dir).unwrap();
        assert_eq!(table.get_final_e(&format!("seq_{idx:02}"), "perfect"), Some(0.0));
    }

    #[test]
    fn compare_end_to_end_smoke() {
        let dir = tempdir().unwrap();
        let cfg = smoke_config(dir.path());
        let report = cmd_compare(&cfg).unwrap();
        let summary = report.summary.unwrap();
        for m in ["lstm", "gru", "conv", "rkf"] {
            assert!(summary.methods.iter().any(|x| x == m), "missing {m}");
        }
        assert!(report.manifest_path.exists());
        let manifest: RunManifest =
            serde_json::from_str(&fs::read_to_string(&report.manifest_path).unwrap()).unwrap();
        // manifest lists every produced file with a checksum
        let mut files = Vec::new();
        collect_files(&cfg.output_dir, &mut files).unwrap();
        let listed: std::collections::BTreeSet<String> =
            manifest.files.iter().map(|f| f.path.clone()).collect();
        for f in files {
            if f.file_name().map_or(false, |n| n == "run_manifest.json") {
                continue;
            }
            let rel = f.strip_prefix(&cfg.output_dir).unwrap().to_string_lossy().into_owned();
            assert!(listed.contains(&rel), "{rel} missing from manifest");
        }
        assert!(!manifest.files.is_empty());
    }
}
