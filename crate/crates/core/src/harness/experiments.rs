//! Experiment drivers behind the shipped reports.
//!
//! Each driver is a pure function of its config and the master seed and
//! returns typed rows plus the thresholds it resolved along the way. Within
//! one experiment, every test consumes the same per-replication observation
//! streams (common random numbers), so cross-test delay differences carry
//! less Monte Carlo noise than the individual standard errors suggest.

use serde::{Deserialize, Serialize};

use crate::delay::{
    bound_minimizing_window, delay_approximation, delay_upper_bound, kl_divergence, BoundInputs,
};
use crate::detectors::{DetectorKindSpec, DetectorSpec};
use crate::error::{Error, Result};
use crate::harness::report::{format_f64, CsvRecord};
use crate::harness::{calibrate_threshold, estimate_add, ArlEstimate, TestSetup};
use crate::model::{scenario_dense, scenario_sparse, scenario_spatial, Scenario, SpatialModel};
use crate::shrinkage::{
    mse_closed_ml, mse_monte_carlo, Estimator, EstimatorKindSpec, EstimatorSpec,
};

/// How per-test thresholds are chosen in the comparison experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdPolicyKind {
    /// Bisect until the measured run length matches the target (default:
    /// puts every test at the same measured false-alarm level).
    Calibrated,
    /// Use `log(gamma)` directly.
    LogGamma,
}

impl Default for ThresholdPolicyKind {
    fn default() -> Self {
        ThresholdPolicyKind::Calibrated
    }
}

/// A threshold resolved for one (test, cell) pair, kept for the sidecar.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedThreshold {
    pub test: String,
    pub cell: String,
    pub threshold: f64,
    pub achieved_arl: Option<f64>,
    pub achieved_se: Option<f64>,
}

pub struct ExperimentOutput<R> {
    pub rows: Vec<R>,
    pub thresholds: Vec<ResolvedThreshold>,
}

fn mix_seed(master: u64, salt: u64) -> u64 {
    let mut z = master ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn ml_spec() -> EstimatorSpec {
    EstimatorSpec {
        kind: EstimatorKindSpec::Ml,
        positive_part: false,
        mu: None,
    }
}

fn js_spec() -> EstimatorSpec {
    EstimatorSpec::default()
}

/// The five standard tests of the comparison experiments.
pub fn standard_tests(max_window: usize, names: Option<&[String]>) -> Result<Vec<TestSetup>> {
    let all = ["glr", "wl-ml", "wl-js", "srrs-ml", "srrs-js"];
    let wanted: Vec<&str> = match names {
        None => all.to_vec(),
        Some(list) => {
            for n in list {
                if !all.contains(&n.as_str()) {
                    return Err(Error::Config(format!(
                        "unknown test `{n}`; available: {}",
                        all.join(", ")
                    )));
                }
            }
            list.iter().map(|s| s.as_str()).collect()
        }
    };
    Ok(wanted
        .into_iter()
        .map(|name| match name {
            "glr" => TestSetup::new(
                "glr",
                DetectorSpec::of_kind(DetectorKindSpec::Glr).with_max_window(max_window),
                ml_spec(),
            ),
            "wl-ml" => TestSetup::new(
                "wl-ml",
                DetectorSpec::of_kind(DetectorKindSpec::ParallelWlCusum)
                    .with_max_window(max_window),
                ml_spec(),
            ),
            "wl-js" => TestSetup::new(
                "wl-js",
                DetectorSpec::of_kind(DetectorKindSpec::ParallelWlCusum)
                    .with_max_window(max_window),
                js_spec(),
            ),
            "srrs-ml" => TestSetup::new(
                "srrs-ml",
                DetectorSpec::of_kind(DetectorKindSpec::Srrs),
                ml_spec(),
            ),
            "srrs-js" => TestSetup::new(
                "srrs-js",
                DetectorSpec::of_kind(DetectorKindSpec::Srrs),
                js_spec(),
            ),
            _ => unreachable!("filtered above"),
        })
        .collect())
}

/// Window-limited tests with the four spatial estimators, plus the GLR bank.
pub fn spatial_tests(max_window: usize, design: &[Vec<f64>]) -> Vec<TestSetup> {
    let parallel =
        || DetectorSpec::of_kind(DetectorKindSpec::ParallelWlCusum).with_max_window(max_window);
    vec![
        TestSetup::new("wl-js-global", parallel(), js_spec()),
        TestSetup::new(
            "wl-js-subspace",
            parallel(),
            EstimatorSpec {
                kind: EstimatorKindSpec::JsSubspace,
                positive_part: true,
                mu: None,
            },
        )
        .with_design(design.to_vec()),
        TestSetup::new(
            "wl-ls",
            parallel(),
            EstimatorSpec {
                kind: EstimatorKindSpec::LsProjection,
                positive_part: true,
                mu: None,
            },
        )
        .with_design(design.to_vec()),
        TestSetup::new("wl-ml", parallel(), ml_spec()),
        TestSetup::new(
            "glr",
            DetectorSpec::of_kind(DetectorKindSpec::Glr).with_max_window(max_window),
            ml_spec(),
        ),
    ]
}

fn resolve_threshold(
    policy: ThresholdPolicyKind,
    scenario: &Scenario,
    setup: &TestSetup,
    gamma: f64,
    rel_tol: f64,
    calibration_reps: u64,
    master_seed: u64,
    cell: &str,
    log: &mut Vec<ResolvedThreshold>,
) -> Result<f64> {
    let (threshold, achieved): (f64, Option<ArlEstimate>) = match policy {
        ThresholdPolicyKind::LogGamma => (gamma.ln(), None),
        ThresholdPolicyKind::Calibrated => {
            let cal = calibrate_threshold(scenario, setup, gamma, rel_tol, calibration_reps, master_seed)?;
            (cal.threshold, cal.achieved)
        }
    };
    log.push(ResolvedThreshold {
        test: setup.name.clone(),
        cell: cell.to_string(),
        threshold,
        achieved_arl: achieved.map(|a| a.arl),
        achieved_se: achieved.map(|a| a.se),
    });
    Ok(threshold)
}

fn default_add_cap(gamma: f64) -> u64 {
    (20.0 * gamma).ceil() as u64
}

// ---------------------------------------------------------------------------
// estimator MSE curves
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MseCurvesConfig {
    pub streams: usize,
    pub window: u32,
    pub norm_grid: Vec<f64>,
    pub replications: u64,
}

impl Default for MseCurvesConfig {
    fn default() -> Self {
        MseCurvesConfig {
            streams: 10,
            window: 1,
            norm_grid: (0..=20).map(|i| i as f64 * 0.5).collect(),
            replications: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseCurveRow {
    pub theta_norm: f64,
    pub mse_ml: f64,
    pub mse_js: f64,
    pub mse_jsplus: f64,
    pub se_js: f64,
    pub se_jsplus: f64,
}

impl CsvRecord for MseCurveRow {
    fn header() -> &'static [&'static str] {
        &["theta_norm", "mse_ml", "mse_js", "mse_jsplus", "se_js", "se_jsplus"]
    }
    fn fields(&self) -> Vec<String> {
        vec![
            format_f64(self.theta_norm),
            format_f64(self.mse_ml),
            format_f64(self.mse_js),
            format_f64(self.mse_jsplus),
            format_f64(self.se_js),
            format_f64(self.se_jsplus),
        ]
    }
}

/// MSE of the sample mean and of origin-shrinkage (plain and positive-part)
/// against the shift magnitude.
pub fn mse_curves(cfg: &MseCurvesConfig, master_seed: u64) -> Result<ExperimentOutput<MseCurveRow>> {
    let k = cfg.streams;
    let ml = Estimator::ml(k)?;
    let js = Estimator::js_point(k, None, false)?;
    let jsplus = Estimator::js_point(k, None, true)?;
    let mut rows = Vec::with_capacity(cfg.norm_grid.len());
    for (i, &norm) in cfg.norm_grid.iter().enumerate() {
        let mut theta = vec![0.0; k];
        theta[0] = norm;
        let seed = mix_seed(master_seed, i as u64);
        let a = mse_monte_carlo(&ml, &theta, cfg.window, cfg.replications, seed)?;
        let b = mse_monte_carlo(&js, &theta, cfg.window, cfg.replications, seed)?;
        let c = mse_monte_carlo(&jsplus, &theta, cfg.window, cfg.replications, seed)?;
        rows.push(MseCurveRow {
            theta_norm: norm,
            mse_ml: a.mse,
            mse_js: b.mse,
            mse_jsplus: c.mse,
            se_js: b.se,
            se_jsplus: c.se,
        });
    }
    Ok(ExperimentOutput {
        rows,
        thresholds: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// delay bound evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundEvalConfig {
    pub streams_grid: Vec<usize>,
    pub thresholds: Vec<f64>,
    pub replications: u64,
    /// Threshold at which the window is optimized.
    pub pick_threshold: f64,
    pub scan_max_window: usize,
    pub mse_table_replications: u64,
}

impl Default for BoundEvalConfig {
    fn default() -> Self {
        BoundEvalConfig {
            streams_grid: vec![10],
            thresholds: vec![2.0, 4.0, 6.0, 8.0, 10.0],
            replications: 2000,
            pick_threshold: 10.0,
            scan_max_window: 200,
            mse_table_replications: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundEvalRow {
    pub estimator: String,
    pub streams: usize,
    pub threshold: f64,
    pub window: usize,
    pub divergence: f64,
    pub mse: f64,
    pub add: f64,
    pub se: f64,
    pub bound: f64,
    pub approx: f64,
}

impl CsvRecord for BoundEvalRow {
    fn header() -> &'static [&'static str] {
        &["estimator", "streams", "b", "w", "i", "mse", "add", "se", "bound", "approx"]
    }
    fn fields(&self) -> Vec<String> {
        vec![
            self.estimator.clone(),
            self.streams.to_string(),
            format_f64(self.threshold),
            self.window.to_string(),
            format_f64(self.divergence),
            format_f64(self.mse),
            format_f64(self.add),
            format_f64(self.se),
            format_f64(self.bound),
            format_f64(self.approx),
        ]
    }
}

/// Measured delay of the single-window adaptive CuSum against the delay
/// bound and approximation, with the window optimizing the bound at
/// `pick_threshold`. The shift is flat with unit norm, so the per-sample
/// divergence is 1/2. Sample-mean MSE comes from the closed form; shrinkage
/// MSE is tabulated by Monte Carlo per window.
pub fn bound_eval(cfg: &BoundEvalConfig, master_seed: u64) -> Result<ExperimentOutput<BoundEvalRow>> {
    let mut rows = Vec::new();
    for &k in &cfg.streams_grid {
        let level = (k as f64).powf(-0.5);
        let theta = vec![level; k];
        let scenario = Scenario::new(theta.clone(), crate::model::ChangeTime::At(1), format!("flat-k{k}"))?;
        let divergence = kl_divergence(&theta);

        // shrinkage MSE table over candidate windows
        let js_est = Estimator::js_global_mean(k, true)?;
        let mut js_table = Vec::with_capacity(cfg.scan_max_window);
        for w in 1..=cfg.scan_max_window {
            let seed = mix_seed(master_seed, (k as u64) << 32 | w as u64);
            js_table.push(
                mse_monte_carlo(&js_est, &theta, w as u32, cfg.mse_table_replications, seed)?.mse,
            );
        }

        let ml_mse = |w: usize| mse_closed_ml(k, w);
        let js_mse = |w: usize| js_table[w - 1];
        let w_ml = bound_minimizing_window(cfg.pick_threshold, divergence, cfg.scan_max_window, ml_mse)?;
        let w_js = bound_minimizing_window(cfg.pick_threshold, divergence, cfg.scan_max_window, js_mse)?;

        let cases: [(&str, usize, EstimatorSpec, f64); 2] = [
            ("ml", w_ml, ml_spec(), ml_mse(w_ml)),
            ("js-global-mean", w_js, js_spec(), js_mse(w_js)),
        ];
        for (name, window, est_spec, mse) in cases {
            let setup = TestSetup::new(
                name,
                DetectorSpec::of_kind(DetectorKindSpec::WlCusum).with_window(window),
                est_spec,
            );
            for &b in &cfg.thresholds {
                let inputs = BoundInputs {
                    threshold: b,
                    window,
                    divergence,
                    mse,
                };
                let bound = delay_upper_bound(&inputs)?;
                let approx = delay_approximation(&inputs)?;
                let cap = (20.0 * bound).ceil() as u64;
                let add = estimate_add(&scenario, &setup, b, cfg.replications, cap, master_seed)?;
                rows.push(BoundEvalRow {
                    estimator: name.to_string(),
                    streams: k,
                    threshold: b,
                    window,
                    divergence,
                    mse,
                    add: add.add,
                    se: add.se,
                    bound,
                    approx,
                });
            }
        }
    }
    Ok(ExperimentOutput {
        rows,
        thresholds: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// run-length / delay tradeoff and the stream-count sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArlAddConfig {
    pub streams_grid: Vec<usize>,
    pub gamma_grid: Vec<f64>,
    pub replications: u64,
    pub calibration_replications: u64,
    pub rel_tol: f64,
    pub max_window: usize,
    pub policy: ThresholdPolicyKind,
    /// Subset of {glr, wl-ml, wl-js, srrs-ml, srrs-js}; empty means all.
    pub tests: Vec<String>,
    pub add_max_steps: Option<u64>,
}

impl Default for ArlAddConfig {
    fn default() -> Self {
        ArlAddConfig {
            streams_grid: vec![5, 30],
            gamma_grid: vec![500.0, 1000.0, 2000.0],
            replications: 2000,
            calibration_replications: 300,
            rel_tol: 0.05,
            max_window: 200,
            policy: ThresholdPolicyKind::Calibrated,
            tests: Vec::new(),
            add_max_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffRow {
    pub test: String,
    pub streams: usize,
    pub gamma: f64,
    pub threshold: f64,
    pub add: f64,
    pub se: f64,
}

impl CsvRecord for TradeoffRow {
    fn header() -> &'static [&'static str] {
        &["test", "streams", "gamma", "threshold", "add", "se"]
    }
    fn fields(&self) -> Vec<String> {
        vec![
            self.test.clone(),
            self.streams.to_string(),
            format_f64(self.gamma),
            format_f64(self.threshold),
            format_f64(self.add),
            format_f64(self.se),
        ]
    }
}

fn tests_arg(tests: &[String]) -> Option<&[String]> {
    if tests.is_empty() {
        None
    } else {
        Some(tests)
    }
}

/// Delay at matched false-alarm levels for the dense scenario, over a grid
/// of run-length targets and stream counts.
pub fn arl_add(cfg: &ArlAddConfig, master_seed: u64) -> Result<ExperimentOutput<TradeoffRow>> {
    let mut rows = Vec::new();
    let mut thresholds = Vec::new();
    for &k in &cfg.streams_grid {
        let scenario = scenario_dense(k)?;
        let never = scenario.without_change();
        for setup in standard_tests(cfg.max_window, tests_arg(&cfg.tests))? {
            for &gamma in &cfg.gamma_grid {
                let cell = format!("streams={k},gamma={gamma}");
                let b = resolve_threshold(
                    cfg.policy,
                    &never,
                    &setup,
                    gamma,
                    cfg.rel_tol,
                    cfg.calibration_replications,
                    master_seed,
                    &cell,
                    &mut thresholds,
                )?;
                let cap = cfg.add_max_steps.unwrap_or_else(|| default_add_cap(gamma));
                let add = estimate_add(&scenario, &setup, b, cfg.replications, cap, master_seed)?;
                rows.push(TradeoffRow {
                    test: setup.name.clone(),
                    streams: k,
                    gamma,
                    threshold: b,
                    add: add.add,
                    se: add.se,
                });
            }
        }
    }
    Ok(ExperimentOutput { rows, thresholds })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KSweepConfig {
    pub streams_grid: Vec<usize>,
    pub gamma: f64,
    pub replications: u64,
    pub calibration_replications: u64,
    pub rel_tol: f64,
    pub max_window: usize,
    pub policy: ThresholdPolicyKind,
    pub tests: Vec<String>,
    pub add_max_steps: Option<u64>,
}

impl Default for KSweepConfig {
    fn default() -> Self {
        KSweepConfig {
            streams_grid: vec![5, 15, 25, 35, 50],
            gamma: 2000.0,
            replications: 2000,
            calibration_replications: 300,
            rel_tol: 0.05,
            max_window: 200,
            policy: ThresholdPolicyKind::Calibrated,
            tests: Vec::new(),
            add_max_steps: None,
        }
    }
}

/// Delay against the stream count for the dense scenario at one run-length
/// target.
pub fn k_sweep(cfg: &KSweepConfig, master_seed: u64) -> Result<ExperimentOutput<TradeoffRow>> {
    let inner = ArlAddConfig {
        streams_grid: cfg.streams_grid.clone(),
        gamma_grid: vec![cfg.gamma],
        replications: cfg.replications,
        calibration_replications: cfg.calibration_replications,
        rel_tol: cfg.rel_tol,
        max_window: cfg.max_window,
        policy: cfg.policy,
        tests: cfg.tests.clone(),
        add_max_steps: cfg.add_max_steps,
    };
    arl_add(&inner, master_seed)
}

// ---------------------------------------------------------------------------
// sparse sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SparseSweepConfig {
    pub streams: usize,
    pub affected_grid: Vec<usize>,
    pub gamma: f64,
    pub replications: u64,
    pub calibration_replications: u64,
    pub rel_tol: f64,
    pub max_window: usize,
    pub policy: ThresholdPolicyKind,
    pub tests: Vec<String>,
    pub add_max_steps: Option<u64>,
}

impl Default for SparseSweepConfig {
    fn default() -> Self {
        SparseSweepConfig {
            streams: 20,
            affected_grid: vec![1, 4, 8, 12, 16, 20],
            gamma: 2000.0,
            replications: 2000,
            calibration_replications: 300,
            rel_tol: 0.05,
            max_window: 200,
            policy: ThresholdPolicyKind::Calibrated,
            tests: Vec::new(),
            add_max_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub test: String,
    pub affected: usize,
    pub gamma: f64,
    pub threshold: f64,
    pub add: f64,
    pub se: f64,
}

impl CsvRecord for SparseRow {
    fn header() -> &'static [&'static str] {
        &["test", "affected", "gamma", "threshold", "add", "se"]
    }
    fn fields(&self) -> Vec<String> {
        vec![
            self.test.clone(),
            self.affected.to_string(),
            format_f64(self.gamma),
            format_f64(self.threshold),
            format_f64(self.add),
            format_f64(self.se),
        ]
    }
}

/// Delay against the number of affected streams, total shift magnitude held
/// at one. The pre-change model does not depend on the affected count, so
/// each test is calibrated once and the threshold reused across the grid.
pub fn sparse_sweep(
    cfg: &SparseSweepConfig,
    master_seed: u64,
) -> Result<ExperimentOutput<SparseRow>> {
    let mut rows = Vec::new();
    let mut thresholds = Vec::new();
    let never = scenario_sparse(cfg.streams, 1)?.without_change();
    for setup in standard_tests(cfg.max_window, tests_arg(&cfg.tests))? {
        let cell = format!("streams={},gamma={}", cfg.streams, cfg.gamma);
        let b = resolve_threshold(
            cfg.policy,
            &never,
            &setup,
            cfg.gamma,
            cfg.rel_tol,
            cfg.calibration_replications,
            master_seed,
            &cell,
            &mut thresholds,
        )?;
        let cap = cfg
            .add_max_steps
            .unwrap_or_else(|| default_add_cap(cfg.gamma));
        for &affected in &cfg.affected_grid {
            let scenario = scenario_sparse(cfg.streams, affected)?;
            let add = estimate_add(&scenario, &setup, b, cfg.replications, cap, master_seed)?;
            rows.push(SparseRow {
                test: setup.name.clone(),
                affected,
                gamma: cfg.gamma,
                threshold: b,
                add: add.add,
                se: add.se,
            });
        }
    }
    Ok(ExperimentOutput { rows, thresholds })
}

// ---------------------------------------------------------------------------
// spatial scenario
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpatialConfig {
    pub streams: usize,
    pub sources: Vec<f64>,
    pub displacement_grid: Vec<f64>,
    pub gamma: f64,
    /// Extra run-length targets evaluated at zero displacement.
    pub gamma_grid_at_zero: Vec<f64>,
    pub replications: u64,
    pub calibration_replications: u64,
    pub rel_tol: f64,
    pub max_window: usize,
    pub policy: ThresholdPolicyKind,
    pub add_max_steps: Option<u64>,
}

impl Default for SpatialConfig {
    fn default() -> Self {
        SpatialConfig {
            streams: 20,
            sources: vec![20.0, 80.0],
            displacement_grid: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            gamma: 1000.0,
            gamma_grid_at_zero: vec![250.0, 500.0, 1000.0, 2000.0],
            replications: 2000,
            calibration_replications: 300,
            rel_tol: 0.05,
            max_window: 200,
            policy: ThresholdPolicyKind::Calibrated,
            add_max_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialRow {
    pub test: String,
    pub displacement: f64,
    pub gamma: f64,
    pub threshold: f64,
    pub add: f64,
    pub se: f64,
    pub censor_rate: f64,
}

impl CsvRecord for SpatialRow {
    fn header() -> &'static [&'static str] {
        &["test", "r", "gamma", "threshold", "add", "se", "censor_rate"]
    }
    fn fields(&self) -> Vec<String> {
        vec![
            self.test.clone(),
            format_f64(self.displacement),
            format_f64(self.gamma),
            format_f64(self.threshold),
            format_f64(self.add),
            format_f64(self.se),
            format_f64(self.censor_rate),
        ]
    }
}

/// Source-displacement robustness study. The detector-side design matrix
/// always assumes the nominal source positions; the true shift moves with
/// the displacement. Tests whose drift collapses under mismatch run into
/// the step cap, which the censor-rate column makes visible.
pub fn spatial(cfg: &SpatialConfig, master_seed: u64) -> Result<ExperimentOutput<SpatialRow>> {
    let mut rows = Vec::new();
    let mut thresholds = Vec::new();
    let base_model = SpatialModel::uniform_line(cfg.streams, cfg.sources.clone(), 0.0)?;
    let (base_scenario, design) = scenario_spatial(&base_model)?;
    let never = base_scenario.without_change();
    let cap = cfg
        .add_max_steps
        .unwrap_or_else(|| default_add_cap(cfg.gamma));

    for setup in spatial_tests(cfg.max_window, &design) {
        let cell = format!("streams={},gamma={}", cfg.streams, cfg.gamma);
        let b = resolve_threshold(
            cfg.policy,
            &never,
            &setup,
            cfg.gamma,
            cfg.rel_tol,
            cfg.calibration_replications,
            master_seed,
            &cell,
            &mut thresholds,
        )?;
        for &r in &cfg.displacement_grid {
            let model = SpatialModel::uniform_line(cfg.streams, cfg.sources.clone(), r)?;
            let (scenario, _) = scenario_spatial(&model)?;
            let add = estimate_add(&scenario, &setup, b, cfg.replications, cap, master_seed)?;
            rows.push(SpatialRow {
                test: setup.name.clone(),
                displacement: r,
                gamma: cfg.gamma,
                threshold: b,
                add: add.add,
                se: add.se,
                censor_rate: add.censor_rate,
            });
        }
        for &gamma in &cfg.gamma_grid_at_zero {
            if gamma == cfg.gamma {
                continue; // already covered by the displacement sweep at r = 0
            }
            let cell = format!("streams={},gamma={gamma}", cfg.streams);
            let b = resolve_threshold(
                cfg.policy,
                &never,
                &setup,
                gamma,
                cfg.rel_tol,
                cfg.calibration_replications,
                master_seed,
                &cell,
                &mut thresholds,
            )?;
            let cap = cfg
                .add_max_steps
                .unwrap_or_else(|| default_add_cap(gamma));
            let add = estimate_add(&base_scenario, &setup, b, cfg.replications, cap, master_seed)?;
            rows.push(SpatialRow {
                test: setup.name.clone(),
                displacement: 0.0,
                gamma,
                threshold: b,
                add: add.add,
                se: add.se,
                censor_rate: add.censor_rate,
            });
        }
    }
    Ok(ExperimentOutput { rows, thresholds })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_curve_anchors_at_zero_norm() {
        let cfg = MseCurvesConfig {
            streams: 10,
            window: 1,
            norm_grid: vec![0.0, 2.0],
            replications: 40_000,
        };
        let out = mse_curves(&cfg, 11).unwrap();
        let at0 = &out.rows[0];
        assert!((at0.mse_ml - 10.0).abs() < 0.15);
        assert!((at0.mse_js - 2.0).abs() < 4.0 * at0.se_js);
        assert!(at0.mse_jsplus <= at0.mse_js + 3.0 * (at0.se_js + at0.se_jsplus));
        for row in &out.rows {
            assert!(row.mse_jsplus <= row.mse_js + 3.0 * (row.se_js + row.se_jsplus));
            assert!(row.mse_js < row.mse_ml);
        }
    }

    #[test]
    fn mse_curves_are_reproducible() {
        let cfg = MseCurvesConfig {
            streams: 10,
            window: 2,
            norm_grid: vec![0.5],
            replications: 2000,
        };
        let a = mse_curves(&cfg, 3).unwrap();
        let b = mse_curves(&cfg, 3).unwrap();
        assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn standard_tests_validates_names() {
        assert!(standard_tests(10, Some(&["nope".to_string()])).is_err());
        let all = standard_tests(10, None).unwrap();
        assert_eq!(all.len(), 5);
        let some = standard_tests(10, Some(&["wl-js".to_string()])).unwrap();
        assert_eq!(some.len(), 1);
        assert_eq!(some[0].name, "wl-js");
    }

    #[test]
    fn sparse_sweep_smoke() {
        // tiny run exercising calibration reuse across the grid
        let cfg = SparseSweepConfig {
            streams: 6,
            affected_grid: vec![1, 6],
            gamma: 20.0,
            replications: 50,
            calibration_replications: 50,
            rel_tol: 0.25,
            max_window: 8,
            policy: ThresholdPolicyKind::LogGamma,
            tests: vec!["wl-js".to_string()],
            add_max_steps: Some(400),
        };
        let out = sparse_sweep(&cfg, 5).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert_eq!(out.thresholds.len(), 1);
        assert!(out.rows.iter().all(|r| r.add >= 1.0));
    }

    #[test]
    fn spatial_smoke() {
        let cfg = SpatialConfig {
            streams: 8,
            sources: vec![20.0, 80.0],
            displacement_grid: vec![0.0],
            gamma: 20.0,
            gamma_grid_at_zero: vec![],
            replications: 40,
            calibration_replications: 40,
            rel_tol: 0.25,
            max_window: 6,
            policy: ThresholdPolicyKind::LogGamma,
            add_max_steps: Some(300),
        };
        let out = spatial(&cfg, 6).unwrap();
        assert_eq!(out.rows.len(), 5, "five tests, one displacement each");
    }
}
