//! Experiment harness: JSON configuration, presets, and the pipeline
//! subcommands (generate, train, filter, evaluate, compare).
//!
//! Stories are 1-based in configuration files and reports, matching how
//! buildings are described; indices are 0-based internally. All randomness
//! flows from one master seed through named sub-streams so each stage is
//! independently reproducible.

mod commands;
mod io;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ParameterVector, ShearBuildingSpec};
use crate::nets::{CellKind, NetworkConfig};
use crate::rkf::FilterConfig;
use crate::simulate::{DatasetParams, ScenarioSpec};

pub use commands::{
    cmd_compare, cmd_evaluate, cmd_filter, cmd_generate, cmd_train, CompareReport,
};
pub use io::{load_model, read_dataset_dir, read_numeric_csv, save_model, DatasetManifest};

/// Load scenario as configured, with 1-based stories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioConfig {
    Shaker {
        amplitude: (f64, f64),
        omega: (f64, f64),
        decay: (f64, f64),
        onset: (f64, f64),
        story: usize,
    },
    Base {
        intensity: (f64, f64),
        f_lo: f64,
        f_hi: f64,
        envelope_frac: (f64, f64, f64),
    },
    Impact {
        peak: (f64, f64),
        width: (f64, f64),
        impact_frac: (f64, f64),
        story: usize,
    },
}

impl ScenarioConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ScenarioConfig::Shaker { .. } => "shaker",
            ScenarioConfig::Base { .. } => "base",
            ScenarioConfig::Impact { .. } => "impact",
        }
    }

    fn story_to_dof(story: usize, n: usize) -> Result<usize> {
        if story == 0 || story > n {
            return Err(Error::InvalidConfig(format!(
                "story {story} outside 1..={n}"
            )));
        }
        Ok(story - 1)
    }

    pub fn to_spec(&self, n: usize) -> Result<ScenarioSpec> {
        Ok(match self {
            ScenarioConfig::Shaker {
                amplitude,
                omega,
                decay,
                onset,
                story,
            } => ScenarioSpec::Shaker {
                amplitude: *amplitude,
                omega: *omega,
                decay: *decay,
                onset: *onset,
                dof: Self::story_to_dof(*story, n)?,
            },
            ScenarioConfig::Base {
                intensity,
                f_lo,
                f_hi,
                envelope_frac,
            } => ScenarioSpec::Base {
                intensity: *intensity,
                f_lo: *f_lo,
                f_hi: *f_hi,
                envelope_frac: *envelope_frac,
            },
            ScenarioConfig::Impact {
                peak,
                width,
                impact_frac,
                story,
            } => ScenarioSpec::Impact {
                peak: *peak,
                width: *width,
                impact_frac: *impact_frac,
                dof: Self::story_to_dof(*story, n)?,
            },
        })
    }

    /// 1-based stories that carry load, i.e. the identification targets.
    pub fn load_stories(&self, n: usize) -> Vec<usize> {
        match self {
            ScenarioConfig::Shaker { story, .. } | ScenarioConfig::Impact { story, .. } => {
                vec![*story]
            }
            ScenarioConfig::Base { .. } => (1..=n).collect(),
        }
    }

    /// Per-DOF known-input mask for the filter: stories that never carry load
    /// are known zero; loaded stories are unknown. Base excitation loads
    /// every DOF, so everything is unknown there.
    pub fn known_inputs(&self, n: usize) -> Vec<Option<f64>> {
        match self {
            ScenarioConfig::Shaker { story, .. } | ScenarioConfig::Impact { story, .. } => {
                (1..=n)
                    .map(|s| if s == *story { None } else { Some(0.0) })
                    .collect()
            }
            ScenarioConfig::Base { .. } => vec![None; n],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildingConfig {
    pub n_stories: usize,
    pub masses: Vec<f64>,
    pub stiffnesses: Vec<f64>,
    pub dampings: Vec<f64>,
}

impl BuildingConfig {
    pub fn to_spec(&self) -> Result<ShearBuildingSpec> {
        let spec = ShearBuildingSpec::new(
            self.masses.clone(),
            self.stiffnesses.clone(),
            self.dampings.clone(),
        )?;
        if spec.n_stories != self.n_stories {
            return Err(Error::InvalidConfig(format!(
                "n_stories {} does not match array length {}",
                self.n_stories, spec.n_stories
            )));
        }
        Ok(spec)
    }

    pub fn from_spec(spec: &ShearBuildingSpec) -> Self {
        Self {
            n_stories: spec.n_stories,
            masses: spec.masses.clone(),
            stiffnesses: spec.stiffnesses.clone(),
            dampings: spec.dampings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub count: usize,
    pub split: (usize, usize, usize),
    pub nsr: f64,
    pub duration: f64,
    pub dt: f64,
    /// 1-based instrumented stories.
    pub measured_stories: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworksConfig {
    pub units: usize,
    pub dense_width: usize,
    pub dropout_rate: f64,
    pub kernel_width: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSettings {
    pub q_scale: f64,
    pub r_scale: f64,
    pub lambda2: f64,
    pub mu: f64,
    /// Relative offsets applied to the true parameters to form theta0.
    pub theta0_stiffness_offset: f64,
    pub theta0_damping_offset: f64,
    pub p0_scale: f64,
    pub fd_step: f64,
    /// Pseudo-measurement leak cutoff [rad/s]; 0 disables.
    pub detrend: f64,
    pub freeze_parameters: bool,
}

/// The single JSON document driving every subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub building: BuildingConfig,
    pub dataset: DatasetConfig,
    pub networks: NetworksConfig,
    pub filter: FilterSettings,
    /// When set, `compare` re-runs generation + filtering per noise level.
    #[serde(default)]
    pub nsr_sweep: Option<Vec<f64>>,
    pub output_dir: PathBuf,
    pub master_seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let spec = self.building.to_spec()?;
        let n = spec.n_stories;
        if self.dataset.measured_stories.is_empty() {
            return Err(Error::InvalidConfig("no measured stories".into()));
        }
        for &s in &self.dataset.measured_stories {
            if s == 0 || s > n {
                return Err(Error::InvalidConfig(format!("measured story {s} outside 1..={n}")));
            }
        }
        let (a, b, c) = self.dataset.split;
        if a + b + c != self.dataset.count {
            return Err(Error::InvalidConfig(format!(
                "split {:?} does not sum to count {}",
                self.dataset.split, self.dataset.count
            )));
        }
        if !(self.dataset.dt > 0.0 && self.dataset.duration > 0.0) {
            return Err(Error::InvalidConfig("dt and duration must be positive".into()));
        }
        if self.dataset.nsr < 0.0 {
            return Err(Error::InvalidConfig("nsr must be >= 0".into()));
        }
        self.scenario.to_spec(n)?;
        // realize the derived configs so their own validation runs
        self.network_config(CellKind::Lstm)?.validate()?;
        self.filter_config(&spec)?.validate()?;
        if let Some(sweep) = &self.nsr_sweep {
            if sweep.is_empty() || sweep.iter().any(|v| *v < 0.0) {
                return Err(Error::InvalidConfig("bad nsr_sweep".into()));
            }
        }
        Ok(())
    }

    pub fn dataset_params(&self) -> DatasetParams {
        DatasetParams {
            count: self.dataset.count,
            split: self.dataset.split,
            nsr: self.dataset.nsr,
            duration: self.dataset.duration,
            dt: self.dataset.dt,
            measured_dofs: self
                .dataset
                .measured_stories
                .iter()
                .map(|s| s - 1)
                .collect(),
        }
    }

    pub fn network_config(&self, cell: CellKind) -> Result<NetworkConfig> {
        let n = self.building.n_stories;
        Ok(NetworkConfig {
            cell,
            in_channels: self.dataset.measured_stories.len(),
            out_channels: self.scenario.load_stories(n).len(),
            units: self.networks.units,
            dense_width: self.networks.dense_width,
            dropout_rate: self.networks.dropout_rate,
            kernel_width: self.networks.kernel_width,
            learning_rate: self.networks.learning_rate,
            batch_size: self.networks.batch_size,
            max_epochs: self.networks.max_epochs,
            patience: self.networks.patience,
            seed: crate::seeding::substream(self.master_seed, "train", cell as u64),
        })
    }

    pub fn filter_config(&self, spec: &ShearBuildingSpec) -> Result<FilterConfig> {
        let n = spec.n_stories;
        let theta_true = ParameterVector::from_spec(spec);
        let theta0: Vec<f64> = theta_true
            .stiffnesses()
            .iter()
            .map(|k| k * (1.0 + self.filter.theta0_stiffness_offset))
            .chain(
                theta_true
                    .dampings()
                    .iter()
                    .map(|c| c * (1.0 + self.filter.theta0_damping_offset)),
            )
            .collect();
        Ok(FilterConfig {
            q_scale: self.filter.q_scale,
            r_scale: self.filter.r_scale,
            lambda2: self.filter.lambda2,
            mu: self.filter.mu,
            theta0: ParameterVector::new(theta0)?,
            z0: nalgebra::DVector::zeros(2 * n),
            p0_scale: self.filter.p0_scale,
            fd_step: self.filter.fd_step,
            known_inputs: self.scenario.known_inputs(n),
            detrend: self.filter.detrend,
            freeze_parameters: self.filter.freeze_parameters,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn reference_building() -> BuildingConfig {
    BuildingConfig::from_spec(&ShearBuildingSpec::six_story_reference())
}

fn default_networks(max_epochs: usize, patience: usize) -> NetworksConfig {
    NetworksConfig {
        units: 30,
        dense_width: 100,
        dropout_rate: 0.3,
        kernel_width: 9,
        learning_rate: 1e-4,
        batch_size: 2,
        max_epochs,
        patience,
    }
}

fn default_filter() -> FilterSettings {
    FilterSettings {
        q_scale: 1.0,
        r_scale: 1e-10,
        lambda2: 5e-2,
        mu: 5e-3,
        theta0_stiffness_offset: 0.3,
        theta0_damping_offset: 0.3,
        p0_scale: 1.0,
        fd_step: 1e-6,
        detrend: 0.3,
        freeze_parameters: false,
    }
}

fn shaker_scenario(onset_max: f64) -> ScenarioConfig {
    ScenarioConfig::Shaker {
        amplitude: (200.0, 800.0),
        omega: (0.8, 4.0),
        decay: (0.005, 0.02),
        onset: (0.0, onset_max),
        story: 6,
    }
}

/// Desk-scale preset: short sequences and training runs that finish in
/// minutes.
pub fn preset_desk() -> ExperimentConfig {
    ExperimentConfig {
        scenario: shaker_scenario(4.0),
        building: reference_building(),
        dataset: DatasetConfig {
            count: 21,
            split: (11, 4, 6),
            nsr: 0.05,
            duration: 20.0,
            dt: 0.02,
            measured_stories: vec![3, 5, 6],
        },
        networks: default_networks(500, 200),
        filter: default_filter(),
        nsr_sweep: None,
        output_dir: PathBuf::from("out/desk"),
        master_seed: 1,
    }
}

/// Full-scale preset: 200 s sequences at 100 Hz and long trainings.
pub fn preset_paper() -> ExperimentConfig {
    ExperimentConfig {
        scenario: shaker_scenario(20.0),
        building: reference_building(),
        dataset: DatasetConfig {
            count: 21,
            split: (11, 4, 6),
            nsr: 0.05,
            duration: 200.0,
            dt: 0.01,
            measured_stories: vec![3, 5, 6],
        },
        networks: default_networks(10_000, 200),
        filter: default_filter(),
        nsr_sweep: None,
        output_dir: PathBuf::from("out/paper"),
        master_seed: 1,
    }
}

/// Noise-robustness preset: filter-only sweep over matched noise
/// realizations at 5/10/15/20% NSR.
pub fn preset_noise_sweep() -> ExperimentConfig {
    let mut cfg = preset_paper();
    cfg.nsr_sweep = Some(vec![0.05, 0.10, 0.15, 0.20]);
    cfg.output_dir = PathBuf::from("out/noise_sweep");
    cfg
}

pub fn preset_by_name(name: &str) -> Result<ExperimentConfig> {
    match name {
        "desk" => Ok(preset_desk()),
        "paper" => Ok(preset_paper()),
        "noise-sweep" => Ok(preset_noise_sweep()),
        other => Err(Error::InvalidConfig(format!("unknown preset {other}"))),
    }
}

/// Caps the rayon worker pool from `LOADID_THREADS` when set. Harmless if a
/// pool already exists.
pub fn init_thread_pool() {
    if let Ok(v) = std::env::var("LOADID_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
}
