//! End-to-end checks of the `loadid` binary: exit codes, config handling,
//! and stage chaining through the filesystem.

use std::path::Path;
use std::process::Command;

fn loadid() -> Command {
    Command::new(env!("CARGO_BIN_EXE_loadid"))
}

fn smoke_config(dir: &Path) -> String {
    serde_json::json!({
        "scenario": {
            "family": "shaker",
            "amplitude": [200.0, 800.0],
            "omega": [0.8, 4.0],
            "decay": [0.005, 0.02],
            "onset": [0.0, 1.0],
            "story": 6
        },
        "building": {
            "n_stories": 6,
            "masses": [100.0, 100.0, 100.0, 100.0, 100.0, 100.0],
            "stiffnesses": [900.0, 900.0, 1100.0, 1100.0, 1300.0, 1300.0],
            "dampings": [25.0, 25.0, 50.0, 50.0, 75.0, 75.0]
        },
        "dataset": {
            "count": 3,
            "split": [1, 1, 1],
            "nsr": 0.05,
            "duration": 4.0,
            "dt": 0.02,
            "measured_stories": [3, 5, 6]
        },
        "networks": {
            "units": 4,
            "dense_width": 8,
            "dropout_rate": 0.3,
            "kernel_width": 3,
            "learning_rate": 1e-4,
            "batch_size": 2,
            "max_epochs": 5,
            "patience": 10
        },
        "filter": {
            "q_scale": 1.0,
            "r_scale": 1e-10,
            "lambda2": 5e-2,
            "mu": 5e-3,
            "theta0_stiffness_offset": 0.3,
            "theta0_damping_offset": 0.3,
            "p0_scale": 1.0,
            "fd_step": 1e-6,
            "detrend": 0.3,
            "freeze_parameters": false
        },
        "output_dir": dir.to_string_lossy(),
        "master_seed": 11
    })
    .to_string()
}

#[test]
fn dry_run_validates_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("cfg.json");
    std::fs::write(&cfg_path, smoke_config(&tmp.path().join("out"))).unwrap();
    let output = loadid()
        .args(["compare", "--dry-run", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn invalid_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("cfg.json");
    let broken = smoke_config(tmp.path()).replace("\"count\":3", "\"count\":4");
    std::fs::write(&cfg_path, broken).unwrap();
    let output = loadid()
        .args(["generate", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn missing_dataset_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("cfg.json");
    std::fs::write(&cfg_path, smoke_config(&tmp.path().join("out"))).unwrap();
    let output = loadid()
        .args(["filter", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn unknown_preset_exits_2() {
    let output = loadid()
        .args(["generate", "--preset", "galactic"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn staged_pipeline_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg_path = tmp.path().join("cfg.json");
    std::fs::write(&cfg_path, smoke_config(&out_dir)).unwrap();

    let run = |args: &[&str]| {
        let output = loadid().args(args).arg("--config").arg(&cfg_path).output().unwrap();
        assert!(
            output.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        output
    };
    run(&["generate"]);
    assert!(out_dir.join("dataset").join("manifest.json").exists());
    run(&["train", "gru"]);
    assert!(out_dir.join("models").join("gru.bin").exists());
    run(&["filter"]);
    let evaluate = run(&["evaluate"]);
    let stdout = String::from_utf8_lossy(&evaluate.stdout);
    assert!(stdout.contains("final_E_rkf"), "summary missing rkf column: {stdout}");
    assert!(stdout.contains("final_E_gru"));
    assert!(out_dir.join("eval").join("summary.csv").exists());
}

#[test]
fn thread_cap_env_is_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg_path = tmp.path().join("cfg.json");
    std::fs::write(&cfg_path, smoke_config(&out_dir)).unwrap();
    let output = loadid()
        .env("LOADID_THREADS", "1")
        .args(["generate", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(output.status.success());
}
