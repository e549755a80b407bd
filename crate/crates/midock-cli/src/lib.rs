//! Batch operator interface: run scenarios, calibrate, and sweep noise or
//! solver parameters, emitting CSV logs and JSON reports for scripts and CI.
//!
//! Exit codes are a stable contract: 0 on success (trial failures are data,
//! not process errors), 2 for usage/configuration problems, 1 for internal
//! errors.

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::{Path, PathBuf};

use midock::calibration::CalibrationFile;
use midock::metrics::BatchReport;
use midock::sim::{
    calibration_episode, run_batch, ScenarioConfig, ScenarioKind, TrialLog,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "MIDOCK_OUT";

#[derive(Debug, Parser)]
#[command(name = "midock", about = "Magneto-inductive docking localization simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario batch and write per-trial logs plus aggregate reports.
    Run(RunArgs),
    /// Run a static calibration episode and persist the coefficients.
    Calibrate(CalibrateArgs),
    /// Grid over one noise or solver parameter, aggregating RMSE per point.
    Sweep(SweepArgs),
}

#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    /// Scenario config JSON; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $MIDOCK_OUT or ./out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seeds: "a..b" (inclusive), a comma list, or a single value.
    #[arg(long, default_value = "0..9")]
    pub seeds: String,
    /// Scenario kind override (baseline|s1_hover|s1_inout|s2_linear|s3_composite).
    #[arg(long)]
    pub scenario: Option<String>,
    /// Disable the MI channel (flow-only baseline).
    #[arg(long)]
    pub disable_mi: bool,
    /// Validate the configuration and write nothing.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args, Clone)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of calibration frames.
    #[arg(long)]
    pub n_cal: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Clone)]
pub struct SweepArgs {
    /// Parameter name: a NoiseConfig field (e.g. adc_noise_sigma) or a
    /// solver field (tol_x, tol_f, outlier_delta, min_amplitude_v).
    #[arg(long)]
    pub param: String,
    /// Comma-separated grid values.
    #[arg(long)]
    pub values: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "0..9")]
    pub seeds: String,
    #[arg(long)]
    pub scenario: Option<String>,
}

/// Resolved invocation for `run`: everything needed to execute a batch.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub config: ScenarioConfig,
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub dry_run: bool,
}

fn usage_err(msg: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_USAGE,
        message: msg.into(),
    }
}

fn internal_err(msg: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_INTERNAL,
        message: msg.into(),
    }
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

/// Inclusive "a..b", comma list, or single integer.
pub fn parse_seeds(spec: &str) -> CliResult<Vec<u64>> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Err(usage_err("empty seed specification"));
    }
    let parse_one = |s: &str| -> CliResult<u64> {
        s.trim()
            .parse::<u64>()
            .map_err(|_| usage_err(format!("invalid seed '{s}'")))
    };
    if let Some((a, b)) = spec.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (a, b) = (parse_one(a)?, parse_one(b)?);
        if b < a {
            return Err(usage_err(format!("seed range {a}..{b} is empty")));
        }
        return Ok((a..=b).collect());
    }
    spec.split(',').map(parse_one).collect()
}

pub fn resolve_out_dir(flag: &Option<PathBuf>) -> PathBuf {
    flag.clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Load + normalize + validate the scenario configuration.
pub fn load_config(
    path: &Option<PathBuf>,
    scenario: &Option<String>,
    disable_mi: bool,
) -> CliResult<ScenarioConfig> {
    let mut cfg: ScenarioConfig = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| usage_err(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| usage_err(format!("invalid config {}: {e}", p.display())))?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(name) = scenario {
        cfg.kind = ScenarioKind::parse(name).map_err(|e| usage_err(e.to_string()))?;
        // A kind override replaces any stale mission defaults.
        cfg.ugv_path.clear();
        cfg.setpoints.clear();
        cfg.duration_s = 0.0;
    }
    cfg.normalize();
    if disable_mi {
        cfg.disable_mi = true;
    }
    cfg.validate().map_err(|e| usage_err(e.to_string()))?;
    Ok(cfg)
}

#[derive(Serialize)]
struct ReportMeta {
    created_unix_s: u64,
    scenario: String,
    seeds: Vec<u64>,
    disable_mi: bool,
}

#[derive(Serialize)]
struct AggregateFile<'a> {
    meta: ReportMeta,
    report: &'a BatchReport,
}

#[derive(Serialize)]
struct TrialSidecar<'a> {
    seed: u64,
    scenario: String,
    events: &'a [midock::sim::Event],
    report: &'a midock::metrics::TrialReport,
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_outputs(
    out_dir: &Path,
    cfg: &ScenarioConfig,
    seeds: &[u64],
    logs: &[TrialLog],
    report: &BatchReport,
) -> CliResult<()> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| usage_err(format!("cannot create output dir {}: {e}", out_dir.display())))?;

    for (log, trial) in logs.iter().zip(report.trials.iter()) {
        let mut csv = Vec::new();
        log.write_csv(&mut csv)
            .map_err(|e| internal_err(e.to_string()))?;
        let csv_path = out_dir.join(format!("trial_{}.csv", log.seed));
        std::fs::write(&csv_path, csv).map_err(|e| internal_err(e.to_string()))?;

        let sidecar = TrialSidecar {
            seed: log.seed,
            scenario: cfg.kind.name().to_string(),
            events: &log.events,
            report: trial,
        };
        let json =
            serde_json::to_string_pretty(&sidecar).map_err(|e| internal_err(e.to_string()))?;
        std::fs::write(out_dir.join(format!("trial_{}.json", log.seed)), json)
            .map_err(|e| internal_err(e.to_string()))?;
    }

    let aggregate = AggregateFile {
        meta: ReportMeta {
            created_unix_s: now_unix(),
            scenario: cfg.kind.name().to_string(),
            seeds: seeds.to_vec(),
            disable_mi: cfg.disable_mi,
        },
        report,
    };
    let json =
        serde_json::to_string_pretty(&aggregate).map_err(|e| internal_err(e.to_string()))?;
    std::fs::write(out_dir.join("report.json"), json).map_err(|e| internal_err(e.to_string()))?;

    let mut table = Vec::new();
    report
        .write_table_csv(&mut table)
        .map_err(|e| internal_err(e.to_string()))?;
    std::fs::write(out_dir.join("table.csv"), table).map_err(|e| internal_err(e.to_string()))?;
    Ok(())
}

/// `midock run`: execute the batch and write per-trial CSV logs, JSON
/// sidecars, and the aggregate report/table. Exit 0 iff all trials executed.
pub fn cmd_run(args: &RunArgs) -> CliResult<()> {
    let manifest = RunManifest {
        config: load_config(&args.config, &args.scenario, args.disable_mi)?,
        out_dir: resolve_out_dir(&args.out),
        seeds: parse_seeds(&args.seeds)?,
        dry_run: args.dry_run,
    };
    if manifest.seeds.is_empty() {
        return Err(usage_err("no seeds given"));
    }
    if manifest.dry_run {
        println!(
            "config ok: scenario {} duration {:.1} s, {} seed(s), out {}",
            manifest.config.kind.name(),
            manifest.config.duration_s,
            manifest.seeds.len(),
            manifest.out_dir.display()
        );
        return Ok(());
    }
    let (logs, report) =
        run_batch(&manifest.config, &manifest.seeds).map_err(|e| internal_err(e.to_string()))?;
    write_outputs(&manifest.out_dir, &manifest.config, &manifest.seeds, &logs, &report)?;
    println!(
        "{}: {} trial(s), success rate {:.0}%, mean RMSE {}",
        manifest.config.kind.name(),
        report.n_trials,
        report.success_rate * 100.0,
        report
            .mean_rmse_m
            .map(|v| format!("{:.1} cm", v * 100.0))
            .unwrap_or_else(|| "n/a".into()),
    );
    Ok(())
}

/// `midock calibrate`: one static calibration episode, coefficients
/// persisted as JSON.
pub fn cmd_calibrate(args: &CalibrateArgs) -> CliResult<()> {
    let mut cfg = load_config(&args.config, &None, false)?;
    if let Some(n) = args.n_cal {
        if n == 0 {
            return Err(usage_err("--n-cal must be at least 1"));
        }
        cfg.n_cal = n;
    }
    let out_dir = resolve_out_dir(&args.out);
    let coeffs =
        calibration_episode(&cfg, args.seed).map_err(|e| internal_err(e.to_string()))?;
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| usage_err(format!("cannot create output dir {}: {e}", out_dir.display())))?;
    let path = out_dir.join("calibration.json");
    CalibrationFile::new(coeffs.clone())
        .save(&path)
        .map_err(|e| internal_err(e.to_string()))?;
    println!(
        "calibrated over {} frame(s): C = [{:.4}, {:.4}, {:.4}, {:.4}] -> {}",
        coeffs.n_cal,
        coeffs.c[0],
        coeffs.c[1],
        coeffs.c[2],
        coeffs.c[3],
        path.display()
    );
    if coeffs.n_cal < 8 {
        println!("note: few frames; coefficient variance shrinks as 1/sqrt(n_cal)");
    }
    Ok(())
}

fn set_sweep_param(cfg: &mut ScenarioConfig, name: &str, value: f64) -> CliResult<()> {
    if cfg.noise.set_by_name(name, value).is_ok() {
        return Ok(());
    }
    match name {
        "tol_x" => cfg.solver.tol_x = value,
        "tol_f" => cfg.solver.tol_f = value,
        "outlier_delta" => cfg.solver.outlier_delta = value,
        "initial_simplex_scale" => cfg.solver.initial_simplex_scale = value,
        "min_amplitude_v" => cfg.solver.min_amplitude_v = value,
        _ => return Err(usage_err(format!("unknown sweep parameter '{name}'"))),
    }
    cfg.solver.validate().map_err(|e| usage_err(e.to_string()))
}

/// `midock sweep`: grid over one parameter, one aggregate row per point.
pub fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    let base = load_config(&args.config, &args.scenario, false)?;
    let seeds = parse_seeds(&args.seeds)?;
    if seeds.is_empty() {
        return Err(usage_err("no seeds given"));
    }
    let values: Vec<f64> = args
        .values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| usage_err(format!("invalid sweep value '{v}'")))
        })
        .collect::<CliResult<Vec<f64>>>()?;
    if values.is_empty() {
        return Err(usage_err("no sweep values given"));
    }
    // Validate the parameter name before running anything.
    {
        let mut probe = base.clone();
        set_sweep_param(&mut probe, &args.param, values[0])?;
    }

    let out_dir = resolve_out_dir(&args.out);
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| usage_err(format!("cannot create output dir {}: {e}", out_dir.display())))?;

    let mut rows = String::from("param,value,mean_rmse_m,success_rate,n_success,n_trials\n");
    for value in &values {
        let mut cfg = base.clone();
        set_sweep_param(&mut cfg, &args.param, *value)?;
        let (_, report) = run_batch(&cfg, &seeds).map_err(|e| internal_err(e.to_string()))?;
        rows.push_str(&format!(
            "{},{},{},{},{},{}\n",
            args.param,
            value,
            report
                .mean_rmse_m
                .map(|v| format!("{v:.6}"))
                .unwrap_or_else(|| "nan".into()),
            report.success_rate,
            report.n_success,
            report.n_trials,
        ));
        println!(
            "{} = {}: mean RMSE {}, success {:.0}%",
            args.param,
            value,
            report
                .mean_rmse_m
                .map(|v| format!("{:.1} cm", v * 100.0))
                .unwrap_or_else(|| "n/a".into()),
            report.success_rate * 100.0
        );
    }
    std::fs::write(out_dir.join("sweep.csv"), rows).map_err(|e| internal_err(e.to_string()))?;
    Ok(())
}

pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
