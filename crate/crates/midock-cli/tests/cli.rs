use std::path::PathBuf;
use std::process::Command;

use midock_cli::{cmd_calibrate, cmd_run, cmd_sweep, CalibrateArgs, RunArgs, SweepArgs, EXIT_USAGE};

fn run_args(out: PathBuf) -> RunArgs {
    RunArgs {
        config: None,
        out: Some(out),
        seeds: "0..2".into(),
        scenario: Some("s1_hover".into()),
        disable_mi: false,
        dry_run: false,
    }
}

#[test]
fn run_writes_logs_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("batch");
    cmd_run(&run_args(out.clone())).unwrap();

    for seed in 0..=2 {
        assert!(out.join(format!("trial_{seed}.csv")).exists());
        assert!(out.join(format!("trial_{seed}.json")).exists());
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["report"]["mean_rmse_m"].as_f64().unwrap() > 0.0);
    assert_eq!(report["report"]["n_trials"].as_u64().unwrap(), 3);
    let table = std::fs::read_to_string(out.join("table.csv")).unwrap();
    assert!(table.lines().last().unwrap().starts_with("sc,"));
}

#[test]
fn run_outputs_reproducible_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    cmd_run(&run_args(a.clone())).unwrap();
    cmd_run(&run_args(b.clone())).unwrap();

    for seed in 0..=2 {
        let fa = std::fs::read(a.join(format!("trial_{seed}.csv"))).unwrap();
        let fb = std::fs::read(b.join(format!("trial_{seed}.csv"))).unwrap();
        assert_eq!(fa, fb, "trial_{seed}.csv differs");
    }
    // Aggregate reports match outside the metadata object.
    let mut ra: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    let mut rb: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(b.join("report.json")).unwrap()).unwrap();
    ra.as_object_mut().unwrap().remove("meta");
    rb.as_object_mut().unwrap().remove("meta");
    assert_eq!(ra, rb);
}

#[test]
fn missing_config_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let mut args = run_args(out.clone());
    args.config = Some(dir.path().join("no_such_config.json"));
    let err = cmd_run(&args).unwrap_err();
    assert_eq!(err.code, EXIT_USAGE);
    assert!(!out.exists(), "no partial outputs on config errors");
}

#[test]
fn dry_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dry");
    let mut args = run_args(out.clone());
    args.dry_run = true;
    cmd_run(&args).unwrap();
    assert!(!out.exists());
}

#[test]
fn calibrate_produces_unity_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cal");
    cmd_calibrate(&CalibrateArgs {
        config: None,
        out: Some(out.clone()),
        n_cal: None,
        seed: 0,
    })
    .unwrap();
    let file: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("calibration.json")).unwrap())
            .unwrap();
    let c = file["coefficients"]["c"].as_array().unwrap();
    assert_eq!(c.len(), 4);
    for v in c {
        let v = v.as_f64().unwrap();
        assert!((v - 1.0).abs() < 0.02, "coefficient {v} not near unity");
    }
}

#[test]
fn calibrate_sees_doubled_gain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(
        &cfg_path,
        r#"{
            "kind": "s1_hover",
            "chain": { "fixed_stage": 10.0, "programmable_stage": 35.0 },
            "unmodeled_gain_scale": 2.0
        }"#,
    )
    .unwrap();
    let out = dir.path().join("cal2");
    cmd_calibrate(&CalibrateArgs {
        config: Some(cfg_path),
        out: Some(out.clone()),
        n_cal: None,
        seed: 0,
    })
    .unwrap();
    let file: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("calibration.json")).unwrap())
            .unwrap();
    for v in file["coefficients"]["c"].as_array().unwrap() {
        let v = v.as_f64().unwrap();
        assert!((v - 2.0).abs() < 0.04, "coefficient {v} not near 2");
    }
}

#[test]
fn calibrate_single_frame_still_works() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cal1");
    cmd_calibrate(&CalibrateArgs {
        config: None,
        out: Some(out.clone()),
        n_cal: Some(1),
        seed: 3,
    })
    .unwrap();
    let file: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("calibration.json")).unwrap())
            .unwrap();
    assert_eq!(file["coefficients"]["n_cal"].as_u64().unwrap(), 1);
}

#[test]
fn sweep_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let base = SweepArgs {
        param: "adc_noise_sigma".into(),
        values: "0.01".into(),
        config: None,
        out: Some(dir.path().join("s")),
        seeds: "0..1".into(),
        scenario: Some("s1_hover".into()),
    };

    let mut bad_param = base.clone();
    bad_param.param = "who_knows".into();
    assert_eq!(cmd_sweep(&bad_param).unwrap_err().code, EXIT_USAGE);

    let mut bad_seeds = base.clone();
    bad_seeds.seeds = "".into();
    assert_eq!(cmd_sweep(&bad_seeds).unwrap_err().code, EXIT_USAGE);

    let mut bad_values = base;
    bad_values.values = "a,b".into();
    assert_eq!(cmd_sweep(&bad_values).unwrap_err().code, EXIT_USAGE);
}

#[test]
fn sweep_single_point_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let run_out = dir.path().join("run");
    cmd_run(&run_args(run_out.clone())).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_out.join("report.json")).unwrap())
            .unwrap();
    let run_rmse = report["report"]["mean_rmse_m"].as_f64().unwrap();

    let sweep_out = dir.path().join("sweep");
    // Defaults: the sweep point equals the configured default noise.
    cmd_sweep(&SweepArgs {
        param: "adc_noise_sigma".into(),
        values: "0.015".into(),
        config: None,
        out: Some(sweep_out.clone()),
        seeds: "0..2".into(),
        scenario: Some("s1_hover".into()),
    })
    .unwrap();
    let csv = std::fs::read_to_string(sweep_out.join("sweep.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    let sweep_rmse: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert!((sweep_rmse - run_rmse).abs() < 1e-9);
}

#[test]
fn sweep_rmse_grows_with_noise() {
    // Monte-Carlo monotonicity over a wide noise span.
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mono");
    cmd_sweep(&SweepArgs {
        param: "adc_noise_sigma".into(),
        values: "0.005,0.05,0.25".into(),
        config: None,
        out: Some(out.clone()),
        seeds: "0..5".into(),
        scenario: Some("s1_hover".into()),
    })
    .unwrap();
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rmse: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(rmse.len(), 3);
    assert!(rmse[0] < rmse[1] && rmse[1] < rmse[2], "not monotone: {rmse:?}");
}

#[test]
fn binary_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_midock");
    let dir = tempfile::tempdir().unwrap();

    // usage error: bad config path
    let out = Command::new(exe)
        .args([
            "run",
            "--config",
            "/definitely/not/here.json",
            "--out",
            dir.path().join("x").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // dry run: success
    let out = Command::new(exe)
        .args([
            "run",
            "--scenario",
            "s1_hover",
            "--seeds",
            "0..1",
            "--dry-run",
            "--out",
            dir.path().join("y").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
}
