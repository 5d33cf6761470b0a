//! File formats: per-sequence CSVs, trace/prediction/loss/error-curve CSVs,
//! the dataset manifest, the binary model container, and checksums.
//!
//! Floats are written with Rust's shortest round-trip formatting, so files
//! re-parse to the exact values and repeated runs are byte-identical.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::ErrorCurve;
use crate::nets::{Network, NetworkConfig, Normalization, TrainedNetwork};
use crate::rkf::EstimateTrace;
use crate::simulate::{Dataset, LoadDescriptor, Split};

use super::{BuildingConfig, ScenarioConfig};

pub const DATASET_MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub file: String,
    pub seed: u64,
    pub descriptor: LoadDescriptor,
}

/// Everything needed to reload and interpret a generated dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub master_seed: u64,
    pub dt: f64,
    pub duration: f64,
    pub nsr: f64,
    pub n_stories: usize,
    /// 1-based.
    pub measured_stories: Vec<usize>,
    /// 1-based.
    pub load_stories: Vec<usize>,
    pub split: Split,
    pub scenario: ScenarioConfig,
    pub building: BuildingConfig,
    pub sequences: Vec<SequenceEntry>,
}

pub fn seq_file_name(index: usize) -> String {
    format!("seq_{index:02}.csv")
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Writes one sequence as `t, a_meas_<story>..., f_true_<story>...`.
pub fn write_sequence_csv(
    path: &Path,
    time: &[f64],
    a_meas: &DMatrix<f64>,
    measured_stories: &[usize],
    f_true: &DMatrix<f64>,
) -> Result<()> {
    let mut w = create(path)?;
    let mut header = String::from("t");
    for s in measured_stories {
        header.push_str(&format!(",a_meas_{s}"));
    }
    for s in 1..=f_true.ncols() {
        header.push_str(&format!(",f_true_{s}"));
    }
    writeln!(w, "{header}")?;
    for (k, t) in time.iter().enumerate() {
        write!(w, "{t}")?;
        for c in 0..a_meas.ncols() {
            write!(w, ",{}", a_meas[(k, c)])?;
        }
        for c in 0..f_true.ncols() {
            write!(w, ",{}", f_true[(k, c)])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the dataset directory: one CSV per sequence plus the manifest.
pub fn write_dataset_dir(
    dir: &Path,
    dataset: &Dataset,
    manifest: &DatasetManifest,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (i, seq) in dataset.sequences.iter().enumerate() {
        let path = dir.join(seq_file_name(i));
        write_sequence_csv(
            &path,
            &seq.load.time_grid,
            &seq.measurements.noisy_accel,
            &manifest.measured_stories,
            &seq.load.forces,
        )?;
        written.push(path);
    }
    let manifest_path = dir.join(DATASET_MANIFEST);
    let mut w = create(&manifest_path)?;
    w.write_all(serde_json::to_string_pretty(manifest)?.as_bytes())?;
    w.flush()?;
    written.push(manifest_path);
    Ok(written)
}

/// A sequence as reloaded from disk.
#[derive(Debug, Clone)]
pub struct LoadedSequence {
    pub time: Vec<f64>,
    /// T x |measured| noisy accelerations.
    pub a_meas: DMatrix<f64>,
    /// T x n true forces.
    pub f_true: DMatrix<f64>,
}

/// Parses a whole-numeric CSV with a header row. Externally recorded data in
/// the same shape is ingestible through this reader.
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::MissingInput(format!("{}: empty file", path.display())))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| {
            Error::MissingInput(format!("{}:{}: {e}", path.display(), lineno + 2))
        })?;
        if row.len() != header.len() {
            return Err(Error::MissingInput(format!(
                "{}:{}: {} fields, header has {}",
                path.display(),
                lineno + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

fn columns_by_prefix(header: &[String], prefix: &str) -> Vec<usize> {
    header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with(prefix))
        .map(|(i, _)| i)
        .collect()
}

pub fn read_sequence_csv(path: &Path, n_stories: usize) -> Result<LoadedSequence> {
    let (header, rows) = read_numeric_csv(path)?;
    let a_cols = columns_by_prefix(&header, "a_meas_");
    let f_cols = columns_by_prefix(&header, "f_true_");
    if f_cols.len() != n_stories {
        return Err(Error::MissingInput(format!(
            "{}: expected {} f_true columns, found {}",
            path.display(),
            n_stories,
            f_cols.len()
        )));
    }
    let t_len = rows.len();
    let mut time = Vec::with_capacity(t_len);
    let mut a_meas = DMatrix::zeros(t_len, a_cols.len());
    let mut f_true = DMatrix::zeros(t_len, n_stories);
    for (k, row) in rows.iter().enumerate() {
        time.push(row[0]);
        for (j, &c) in a_cols.iter().enumerate() {
            a_meas[(k, j)] = row[c];
        }
        for (j, &c) in f_cols.iter().enumerate() {
            f_true[(k, j)] = row[c];
        }
    }
    Ok(LoadedSequence { time, a_meas, f_true })
}

/// Reloads an entire dataset directory via its manifest.
pub fn read_dataset_dir(dir: &Path) -> Result<(DatasetManifest, Vec<LoadedSequence>)> {
    let manifest_path = dir.join(DATASET_MANIFEST);
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::MissingInput(format!("{}: {e}", manifest_path.display())))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    let mut sequences = Vec::with_capacity(manifest.sequences.len());
    for entry in &manifest.sequences {
        sequences.push(read_sequence_csv(&dir.join(&entry.file), manifest.n_stories)?);
    }
    Ok((manifest, sequences))
}

/// `t, u_est_<story>..., theta_<j>..., z_<i>..., innov_norm, rho_norm`.
pub fn write_trace_csv(path: &Path, trace: &EstimateTrace) -> Result<()> {
    let n = trace.u_est.ncols();
    let mut w = create(path)?;
    let mut header = String::from("t");
    for s in 1..=n {
        header.push_str(&format!(",u_est_{s}"));
    }
    for j in 1..=trace.theta.ncols() {
        header.push_str(&format!(",theta_{j}"));
    }
    for i in 1..=trace.z.ncols() {
        header.push_str(&format!(",z_{i}"));
    }
    header.push_str(",innov_norm,rho_norm");
    writeln!(w, "{header}")?;
    for k in 0..trace.time.len() {
        write!(w, "{}", trace.time[k])?;
        for c in 0..n {
            write!(w, ",{}", trace.u_est[(k, c)])?;
        }
        for c in 0..trace.theta.ncols() {
            write!(w, ",{}", trace.theta[(k, c)])?;
        }
        for c in 0..trace.z.ncols() {
            write!(w, ",{}", trace.z[(k, c)])?;
        }
        writeln!(w, ",{},{}", trace.innov_norm[k], trace.rho_norm[k])?;
    }
    w.flush()?;
    Ok(())
}

/// `t, u_pred_<story>...` for network predictions.
pub fn write_prediction_csv(
    path: &Path,
    time: &[f64],
    pred: &DMatrix<f64>,
    load_stories: &[usize],
) -> Result<()> {
    let mut w = create(path)?;
    let mut header = String::from("t");
    for s in load_stories {
        header.push_str(&format!(",u_pred_{s}"));
    }
    writeln!(w, "{header}")?;
    for (k, t) in time.iter().enumerate() {
        write!(w, "{t}")?;
        for r in 0..pred.nrows() {
            write!(w, ",{}", pred[(r, k)])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_loss_csv(path: &Path, train: &[f64], val: &[f64]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "epoch,train_loss,val_loss")?;
    for (e, (tr, va)) in train.iter().zip(val).enumerate() {
        writeln!(w, "{},{},{}", e + 1, tr, va)?;
    }
    w.flush()?;
    Ok(())
}

/// `t, E, retained`.
pub fn write_error_curve_csv(path: &Path, curve: &ErrorCurve) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "t,E,retained")?;
    for k in 0..curve.e.len() {
        writeln!(
            w,
            "{},{},{}",
            curve.time_grid[k],
            curve.e[k],
            u8::from(curve.retained[k])
        )?;
    }
    w.flush()?;
    Ok(())
}

const MODEL_MAGIC: &[u8; 8] = b"LDNET001";

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    config: NetworkConfig,
    norm: Normalization,
    param_count: usize,
}

/// Versioned binary container: magic, JSON header (config, normalization,
/// shapes), then raw little-endian f64 parameters.
pub fn save_model(path: &Path, trained: &TrainedNetwork) -> Result<()> {
    let flat = trained.network.to_flat();
    let header = ModelHeader {
        config: trained.config.clone(),
        norm: trained.norm.clone(),
        param_count: flat.len(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut w = create(path)?;
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&(header_json.len() as u64).to_le_bytes())?;
    w.write_all(&header_json)?;
    for v in &flat {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedNetwork> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?
        .read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..8] != MODEL_MAGIC {
        return Err(Error::MissingInput(format!(
            "{}: not a model container",
            path.display()
        )));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header_end = 16 + header_len;
    if bytes.len() < header_end {
        return Err(Error::MissingInput(format!(
            "{}: truncated header",
            path.display()
        )));
    }
    let header: ModelHeader = serde_json::from_slice(&bytes[16..header_end])?;
    let body = &bytes[header_end..];
    if body.len() != header.param_count * 8 {
        return Err(Error::MissingInput(format!(
            "{}: expected {} parameters, found {} bytes",
            path.display(),
            header.param_count,
            body.len()
        )));
    }
    let flat: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut network = Network::init(&header.config)?;
    network.from_flat(&flat);
    Ok(TrainedNetwork {
        config: header.config,
        network,
        norm: header.norm,
    })
}

pub fn sha256_hex(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let read = file.read(&mut buf)?;
        if read == 0 {
            break;
        }
        hasher.update(&buf[..read]);
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}
