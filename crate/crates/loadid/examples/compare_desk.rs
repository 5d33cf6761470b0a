//! A scaled-down end-to-end comparison: generate a small dataset, train all
//! three networks briefly, run the filter, and print the final-error table.
//! The full desk-scale version is `loadid compare --preset desk`.
//!
//! Run with: `cargo run --release --example compare_desk`

use loadid::cli::{self, cmd_compare, ScenarioConfig};

fn main() {
    let mut cfg = cli::preset_desk();
    cfg.dataset.count = 9;
    cfg.dataset.split = (5, 2, 2);
    cfg.dataset.duration = 10.0;
    if let ScenarioConfig::Shaker { onset, .. } = &mut cfg.scenario {
        *onset = (0.0, 2.0);
    }
    cfg.networks.max_epochs = 60;
    cfg.networks.units = 10;
    cfg.networks.dense_width = 20;
    cfg.output_dir = std::path::PathBuf::from("out/example_compare");
    cfg.master_seed = 5;

    println!("running generate -> train x3 -> filter -> evaluate ...");
    let report = cmd_compare(&cfg).expect("pipeline");
    let summary = report.summary.expect("summary table");
    print!("{}", summary.to_csv());
    println!("full outputs under {}", cfg.output_dir.display());
    println!(
        "(final_E accumulates per-sample relative load errors; lower is better, \
         and the physics-based filter column should sit well below the briefly \
         trained networks)"
    );
}
