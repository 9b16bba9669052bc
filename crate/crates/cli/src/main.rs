//! `qcd-lab`: estimator evaluation, detector simulation, threshold
//! calibration, and report-reproduction experiments from config files.
//!
//! Exit codes: 0 success, 1 configuration/validation error, 2 runtime
//! failure (calibration bracket, inapplicable bound, I/O).

#![forbid(unsafe_code)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use qcd_core::config::{
    apply_override, parse_experiment_table, ExperimentConfig, RunConfig, ThresholdRule,
};
use qcd_core::detectors::RunContext;
use qcd_core::error::Error;
use qcd_core::harness::experiments::{
    arl_add, bound_eval, k_sweep, mse_curves, spatial, sparse_sweep, MseCurvesConfig,
};
use qcd_core::harness::report::{format_f64, write_report, CsvRecord};
use qcd_core::harness::{calibrate_threshold, estimate_add, estimate_arl, TestSetup};
use qcd_core::model::{substream, ObservationStream, Scenario, StreamPurpose};

#[derive(Parser)]
#[command(name = "qcd-lab", version, about = "Change detection simulation lab for parallel Gaussian streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Path to the TOML config file.
    #[arg(long)]
    config: PathBuf,
    /// Dotted-path overrides, e.g. `--set run.gamma=500`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    /// Master seed; fully determines all outputs.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path (sidecar JSON lands next to it).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Estimator mean-squared error against the shift magnitude.
    Mse {
        /// Stream count.
        #[arg(long = "K", default_value_t = 10)]
        streams: usize,
        /// Estimation window length.
        #[arg(long = "w", default_value_t = 1)]
        window: u32,
        /// Replications per grid point.
        #[arg(long, default_value_t = 100_000)]
        reps: u64,
        /// Comma-separated shift magnitudes (default 0..10 by 0.5).
        #[arg(long)]
        norms: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Delay of the single-window adaptive test against its bound and
    /// approximation.
    BoundEval {
        /// Stream count; repeat for several.
        #[arg(long = "K")]
        streams: Vec<usize>,
        /// Stopping thresholds; repeat for several.
        #[arg(long = "b")]
        thresholds: Vec<f64>,
        #[arg(long, default_value_t = 2000)]
        reps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean run length to false alarm for a configured detector.
    Arl(ConfigArgs),
    /// Mean detection delay with the change present from the start.
    Add(ConfigArgs),
    /// Threshold matching a target run length.
    Calibrate(ConfigArgs),
    /// One of the report experiments, from an [experiment] config.
    Experiment(ConfigArgs),
    /// Per-step statistic dump for one observation stream.
    Trace(ConfigArgs),
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("QCD_LAB_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: QCD_LAB_THREADS must be a positive integer");
                return ExitCode::from(1);
            }
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                Error::Config(_) | Error::InvalidParameter { .. } => 1,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Mse {
            streams,
            window,
            reps,
            norms,
            seed,
            out,
        } => {
            let mut cfg = MseCurvesConfig {
                streams,
                window,
                replications: reps,
                ..MseCurvesConfig::default()
            };
            if let Some(raw) = norms {
                cfg.norm_grid = parse_f64_list(&raw)?;
            }
            let started = Instant::now();
            let result = mse_curves(&cfg, seed)?;
            write_report(
                &out,
                &result.rows,
                &serde_json::json!({"kind": "mse-curves", "params": cfg}),
                seed,
                started.elapsed().as_secs_f64(),
            )
        }
        Command::BoundEval {
            streams,
            thresholds,
            reps,
            seed,
            out,
        } => {
            let mut cfg = qcd_core::harness::experiments::BoundEvalConfig {
                replications: reps,
                ..Default::default()
            };
            if !streams.is_empty() {
                cfg.streams_grid = streams;
            }
            if !thresholds.is_empty() {
                cfg.thresholds = thresholds;
            }
            let started = Instant::now();
            let result = bound_eval(&cfg, seed)?;
            write_report(
                &out,
                &result.rows,
                &serde_json::json!({"kind": "bound-eval", "params": cfg}),
                seed,
                started.elapsed().as_secs_f64(),
            )
        }
        Command::Arl(args) => run_arl(args),
        Command::Add(args) => run_add(args),
        Command::Calibrate(args) => run_calibrate(args),
        Command::Experiment(args) => run_experiment(args),
        Command::Trace(args) => run_trace(args),
    }
}

fn parse_f64_list(raw: &str) -> Result<Vec<f64>, Error> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("could not parse `{s}` as a number")))
        })
        .collect()
}

fn load_toml_table(args: &ConfigArgs) -> Result<toml::Table, Error> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        Error::Config(format!("could not read config `{}`: {e}", args.config.display()))
    })?;
    let mut table: toml::Table = toml::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", args.config.display())))?;
    for raw in &args.overrides {
        let (path, value) = raw.split_once('=').ok_or_else(|| {
            Error::Config(format!("override `{raw}` is not of the form path=value"))
        })?;
        apply_override(&mut table, path.trim(), value.trim())?;
    }
    Ok(table)
}

fn load_run_config(args: &ConfigArgs) -> Result<RunConfig, Error> {
    let table = load_toml_table(args)?;
    let text = toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?;
    RunConfig::parse(&text)
}

fn require_out(args: &ConfigArgs) -> Result<PathBuf, Error> {
    args.out
        .clone()
        .ok_or_else(|| Error::Config("no output path; pass --out".into()))
}

/// Threshold for a resolved run config, calibrating when asked to.
fn threshold_for(
    rule: ThresholdRule,
    scenario: &Scenario,
    setup: &TestSetup,
    calibration_reps: u64,
    seed: u64,
) -> Result<(f64, Option<qcd_core::harness::Calibration>), Error> {
    Ok(match rule {
        ThresholdRule::Fixed(b) => (b, None),
        ThresholdRule::LogGamma(gamma) => (gamma.ln(), None),
        ThresholdRule::Calibrated { gamma, rel_tol } => {
            let cal = calibrate_threshold(
                &scenario.without_change(),
                setup,
                gamma,
                rel_tol,
                calibration_reps,
                seed,
            )?;
            (cal.threshold, Some(cal))
        }
    })
}

fn gamma_of(rule: ThresholdRule) -> Option<f64> {
    match rule {
        ThresholdRule::Fixed(_) => None,
        ThresholdRule::LogGamma(g) | ThresholdRule::Calibrated { gamma: g, .. } => Some(g),
    }
}

struct ScalarRow {
    names: &'static [&'static str],
    values: Vec<String>,
}

/// Single-row report with an explicit header.
fn write_scalar_report(
    out: &Path,
    row: ScalarRow,
    config: &serde_json::Value,
    seed: u64,
    wall: f64,
) -> Result<(), Error> {
    let body = format!("{}\n{}\n", row.names.join(","), row.values.join(","));
    qcd_core::harness::report::write_raw_csv(out, &body, config, seed, wall)
}

fn run_arl(args: ConfigArgs) -> Result<(), Error> {
    let out = require_out(&args)?;
    let cfg = load_run_config(&args)?;
    let resolved = cfg.resolve()?;
    let started = Instant::now();
    let scenario = resolved.scenario.without_change();
    let calibration_reps = resolved.run.calibration_replications.unwrap_or(300);
    let (threshold, _) =
        threshold_for(resolved.rule, &scenario, &resolved.setup, calibration_reps, args.seed)?;
    let reps = resolved.run.replications.unwrap_or(1000);
    let max_steps = match (resolved.run.max_steps, gamma_of(resolved.rule)) {
        (Some(m), _) => m,
        (None, Some(g)) => (20.0 * g).ceil() as u64,
        (None, None) => {
            return Err(Error::Config(
                "run needs `max_steps` when no `gamma` is given".into(),
            ))
        }
    };
    let est = estimate_arl(&scenario, &resolved.setup, threshold, reps, max_steps, args.seed)?;
    write_scalar_report(
        &out,
        ScalarRow {
            names: &["arl", "se", "censor_rate", "replications", "threshold"],
            values: vec![
                format_f64(est.arl),
                format_f64(est.se),
                format_f64(est.censor_rate),
                est.replications.to_string(),
                format_f64(threshold),
            ],
        },
        &serde_json::json!({"kind": "arl", "config": cfg}),
        args.seed,
        started.elapsed().as_secs_f64(),
    )?;
    println!(
        "arl {} se {} censor_rate {} (threshold {})",
        est.arl, est.se, est.censor_rate, threshold
    );
    Ok(())
}

fn run_add(args: ConfigArgs) -> Result<(), Error> {
    let out = require_out(&args)?;
    let cfg = load_run_config(&args)?;
    let resolved = cfg.resolve()?;
    let started = Instant::now();
    let scenario = resolved.scenario.with_change_at(1)?;
    let calibration_reps = resolved.run.calibration_replications.unwrap_or(300);
    let (threshold, _) =
        threshold_for(resolved.rule, &scenario, &resolved.setup, calibration_reps, args.seed)?;
    let reps = resolved.run.replications.unwrap_or(2000);
    let max_steps = match (resolved.run.max_steps, gamma_of(resolved.rule)) {
        (Some(m), _) => m,
        (None, Some(g)) => (20.0 * g).ceil() as u64,
        (None, None) => {
            return Err(Error::Config(
                "run needs `max_steps` when no `gamma` is given".into(),
            ))
        }
    };
    let est = estimate_add(&scenario, &resolved.setup, threshold, reps, max_steps, args.seed)?;
    if est.censor_warning {
        eprintln!(
            "warning: {:.3}% of replications were censored at {max_steps} steps; the delay \
             estimate is truncated",
            est.censor_rate * 100.0
        );
    }
    write_scalar_report(
        &out,
        ScalarRow {
            names: &["add", "se", "censor_rate", "replications", "threshold"],
            values: vec![
                format_f64(est.add),
                format_f64(est.se),
                format_f64(est.censor_rate),
                est.replications.to_string(),
                format_f64(threshold),
            ],
        },
        &serde_json::json!({"kind": "add", "config": cfg}),
        args.seed,
        started.elapsed().as_secs_f64(),
    )?;
    println!(
        "add {} se {} censor_rate {} (threshold {})",
        est.add, est.se, est.censor_rate, threshold
    );
    Ok(())
}

fn run_calibrate(args: ConfigArgs) -> Result<(), Error> {
    let out = require_out(&args)?;
    let cfg = load_run_config(&args)?;
    let resolved = cfg.resolve()?;
    let started = Instant::now();
    let (gamma, rel_tol) = match resolved.rule {
        ThresholdRule::Calibrated { gamma, rel_tol } => (gamma, rel_tol),
        ThresholdRule::LogGamma(gamma) => (gamma, resolved.run.rel_tol),
        ThresholdRule::Fixed(_) => {
            return Err(Error::Config(
                "calibrate needs `gamma` in the run section".into(),
            ))
        }
    };
    let reps = resolved
        .run
        .calibration_replications
        .or(resolved.run.replications)
        .unwrap_or(300);
    let cal = calibrate_threshold(
        &resolved.scenario.without_change(),
        &resolved.setup,
        gamma,
        rel_tol,
        reps,
        args.seed,
    )?;
    let (arl, se) = cal
        .achieved
        .map(|a| (a.arl, a.se))
        .unwrap_or((f64::NAN, f64::NAN));
    write_scalar_report(
        &out,
        ScalarRow {
            names: &["gamma", "threshold", "achieved_arl", "achieved_se", "evaluations"],
            values: vec![
                format_f64(gamma),
                format_f64(cal.threshold),
                format_f64(arl),
                format_f64(se),
                cal.evaluations.to_string(),
            ],
        },
        &serde_json::json!({"kind": "calibrate", "config": cfg}),
        args.seed,
        started.elapsed().as_secs_f64(),
    )?;
    println!("threshold {} (measured arl {arl}, {} evaluations)", cal.threshold, cal.evaluations);
    Ok(())
}

struct TraceRow {
    n: u64,
    statistic: f64,
    alarmed: bool,
}

impl CsvRecord for TraceRow {
    fn header() -> &'static [&'static str] {
        &["n", "statistic", "alarmed"]
    }
    fn fields(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            format_f64(self.statistic),
            self.alarmed.to_string(),
        ]
    }
}

fn run_trace(args: ConfigArgs) -> Result<(), Error> {
    let out = require_out(&args)?;
    let cfg = load_run_config(&args)?;
    let resolved = cfg.resolve()?;
    let started = Instant::now();
    let calibration_reps = resolved.run.calibration_replications.unwrap_or(300);
    let (threshold, _) = threshold_for(
        resolved.rule,
        &resolved.scenario,
        &resolved.setup,
        calibration_reps,
        args.seed,
    )?;
    let steps = resolved.run.max_steps.unwrap_or(200);
    let mut detector = resolved
        .setup
        .build(&resolved.scenario, threshold, RunContext::Trace)?;
    let mut stream = ObservationStream::new(
        &resolved.scenario,
        substream(args.seed, StreamPurpose::Observations, 0),
    );
    let mut x = vec![0.0; resolved.scenario.streams()];
    let mut rows = Vec::with_capacity(steps as usize);
    for _ in 0..steps {
        let n = stream.next_into(&mut x);
        let outcome = detector.step(&x);
        rows.push(TraceRow {
            n,
            statistic: outcome.statistic,
            alarmed: outcome.alarmed,
        });
    }
    write_report(
        &out,
        &rows,
        &serde_json::json!({"kind": "trace", "config": cfg, "threshold": threshold}),
        args.seed,
        started.elapsed().as_secs_f64(),
    )
}

fn run_experiment(args: ConfigArgs) -> Result<(), Error> {
    let table = load_toml_table(&args)?;
    let doc = parse_experiment_table(table)?;
    let out = args
        .out
        .clone()
        .or_else(|| doc.out.as_ref().map(PathBuf::from))
        .ok_or_else(|| Error::Config("no output path; pass --out or set `out` in config".into()))?;
    let started = Instant::now();
    let seed = args.seed;
    match &doc.config {
        ExperimentConfig::MseCurves(cfg) => {
            let result = mse_curves(cfg, seed)?;
            write_report(
                &out,
                &result.rows,
                &sidecar_config("mse-curves", cfg, &result.thresholds),
                seed,
                started.elapsed().as_secs_f64(),
            )
        }
        ExperimentConfig::BoundEval(cfg) => {
            let result = bound_eval(cfg, seed)?;
            write_report(
                &out,
                &result.rows,
                &sidecar_config("bound-eval", cfg, &result.thresholds),
                seed,
                started.elapsed().as_secs_f64(),
            )
        }
        ExperimentConfig::ArlAdd(cfg) => {
            let result = arl_add(cfg, seed)?;
            write_report(
                &out,
                &result.rows,
                &sidecar_config("arl-add", cfg, &result.thresholds),
                seed,
                started.elapsed().as_secs_f64(),
            )
        }
        ExperimentConfig::KSweep(cfg) => {
            let result = k_sweep(cfg, seed)?;
            write_report(
                &out,
                &result.rows,
                &sidecar_config("k-sweep", cfg, &result.thresholds),
                seed,
                started.elapsed().as_secs_f64(),
            )
        }
        ExperimentConfig::SparseSweep(cfg) => {
            let result = sparse_sweep(cfg, seed)?;
            write_report(
                &out,
                &result.rows,
                &sidecar_config("sparse-sweep", cfg, &result.thresholds),
                seed,
                started.elapsed().as_secs_f64(),
            )
        }
        ExperimentConfig::Spatial(cfg) => {
            let result = spatial(cfg, seed)?;
            write_report(
                &out,
                &result.rows,
                &sidecar_config("spatial", cfg, &result.thresholds),
                seed,
                started.elapsed().as_secs_f64(),
            )
        }
    }
}

fn sidecar_config<C: serde::Serialize>(
    kind: &str,
    cfg: &C,
    thresholds: &[qcd_core::harness::experiments::ResolvedThreshold],
) -> serde_json::Value {
    serde_json::json!({
        "kind": kind,
        "params": cfg,
        "resolved_thresholds": thresholds,
    })
}
