//! Cross-module integration checks of the Monte Carlo harness and report
//! pipeline that are too slow for unit tests but much cheaper than the
//! acceptance suite.

use qcd_core::harness::experiments::{
    arl_add, sparse_sweep, ArlAddConfig, SparseSweepConfig, ThresholdPolicyKind,
};
use qcd_core::harness::report::write_report;

#[test]
fn sparse_sweep_report_is_byte_identical_across_runs() {
    let cfg = SparseSweepConfig {
        streams: 6,
        affected_grid: vec![1, 6],
        gamma: 25.0,
        replications: 60,
        calibration_replications: 60,
        rel_tol: 0.2,
        max_window: 10,
        policy: ThresholdPolicyKind::Calibrated,
        tests: vec!["wl-js".to_string(), "glr".to_string()],
        add_max_steps: Some(500),
    };
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let out = sparse_sweep(&cfg, 42).unwrap();
        let path = dir.path().join(name);
        write_report(&path, &out.rows, &cfg, 42, 0.0).unwrap();
        paths.push(path);
    }
    let a = std::fs::read(&paths[0]).unwrap();
    let b = std::fs::read(&paths[1]).unwrap();
    assert_eq!(a, b, "same config and seed must reproduce the CSV exactly");
    assert!(!a.is_empty());
}

#[test]
fn eager_and_analytic_threshold_policies_agree_on_ordering() {
    // small-scale coherence check: with both policies, shrinkage stays at
    // or below the sample-mean delay on the dense scenario
    for policy in [ThresholdPolicyKind::Calibrated, ThresholdPolicyKind::LogGamma] {
        let cfg = ArlAddConfig {
            streams_grid: vec![8],
            gamma_grid: vec![60.0],
            replications: 400,
            calibration_replications: 120,
            rel_tol: 0.1,
            max_window: 40,
            policy,
            tests: vec!["wl-ml".into(), "wl-js".into()],
            add_max_steps: Some(2000),
        };
        let out = arl_add(&cfg, 9).unwrap();
        let add_of = |test: &str| {
            out.rows
                .iter()
                .find(|r| r.test == test)
                .map(|r| (r.add, r.se))
                .unwrap()
        };
        let (ml, js) = (add_of("wl-ml"), add_of("wl-js"));
        assert!(
            js.0 <= ml.0 + 3.0 * (js.1 * js.1 + ml.1 * ml.1).sqrt(),
            "{policy:?}: shrinkage {} above sample mean {}",
            js.0,
            ml.0
        );
    }
}

/// At five streams the shrinkage tests and the GLR bank are expected to sit
/// within overlapping three-standard-error bands of each other.
#[test]
fn low_dimension_tests_are_comparable() {
    let cfg = ArlAddConfig {
        streams_grid: vec![5],
        gamma_grid: vec![2000.0],
        replications: 2000,
        calibration_replications: 300,
        rel_tol: 0.05,
        max_window: 200,
        policy: ThresholdPolicyKind::Calibrated,
        tests: vec!["glr".into(), "wl-js".into(), "srrs-js".into()],
        add_max_steps: None,
    };
    let out = arl_add(&cfg, 111).unwrap();
    let get = |test: &str| {
        out.rows
            .iter()
            .find(|r| r.test == test)
            .map(|r| (r.add, r.se))
            .unwrap()
    };
    let glr = get("glr");
    for test in ["wl-js", "srrs-js"] {
        let js = get(test);
        let overlap = (js.0 - glr.0).abs() <= 3.0 * (js.1 + glr.1);
        assert!(
            overlap,
            "{test} delay {}+-{} vs glr {}+-{} not comparable",
            js.0, js.1, glr.0, glr.1
        );
    }
}
