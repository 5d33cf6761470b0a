use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use loadid::cli::{
    self, cmd_compare, cmd_evaluate, cmd_filter, cmd_generate, cmd_train, ExperimentConfig,
};
use loadid::nets::CellKind;
use loadid::Result;

/// Structural load identification workbench.
#[derive(Parser)]
#[command(name = "loadid", version, about)]
struct Cli {
    /// JSON experiment configuration; overrides the preset entirely.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Built-in configuration: desk (minutes), paper (hours), noise-sweep.
    #[arg(long, global = true, default_value = "desk")]
    preset: String,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Validate the configuration and print it without computing.
    #[arg(long, global = true)]
    dry_run: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the simulated dataset (per-sequence CSVs + manifest).
    Generate,
    /// Train one network kind on the generated dataset.
    Train {
        /// lstm | gru | conv
        #[arg(value_parser = parse_cell_kind)]
        kind: CellKind,
    },
    /// Run the residual Kalman filter over the test sequences.
    Filter,
    /// Score predictions and traces against the dataset truth.
    Evaluate {
        /// Directory holding prediction/trace CSVs (defaults to the output dir).
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Full pipeline: generate, train all three networks, filter, evaluate.
    Compare,
}

fn parse_cell_kind(s: &str) -> std::result::Result<CellKind, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?,
        None => cli::preset_by_name(&cli.preset)?,
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    if cli.dry_run {
        println!("{}", cfg.to_json());
        println!("configuration valid; nothing executed");
        return Ok(());
    }
    cli::init_thread_pool();
    match &cli.command {
        Command::Generate => {
            let files = cmd_generate(&cfg)?;
            println!("wrote {} files under {}", files.len(), cfg.output_dir.display());
        }
        Command::Train { kind } => {
            let out = cmd_train(&cfg, *kind)?;
            println!("model:       {}", out.model_path.display());
            println!("loss curves: {}", out.loss_path.display());
            println!("predictions: {} files", out.prediction_paths.len());
        }
        Command::Filter => {
            let traces = cmd_filter(&cfg)?;
            println!("wrote {} trace files", traces.len());
        }
        Command::Evaluate { predictions } => {
            let dir = predictions.clone().unwrap_or_else(|| cfg.output_dir.clone());
            let table = cmd_evaluate(&cfg, &dir)?;
            print!("{}", table.to_csv());
        }
        Command::Compare => {
            let report = cmd_compare(&cfg)?;
            if let Some(summary) = &report.summary {
                print!("{}", summary.to_csv());
            }
            for (nsr, summary) in &report.sweep_summaries {
                println!("# nsr = {nsr}");
                print!("{}", summary.to_csv());
            }
            println!("run manifest: {}", report.manifest_path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
