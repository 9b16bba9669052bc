//! End-to-end checks of the `qcd-lab` binary: exit codes, file contracts,
//! and seed determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qcd_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcd-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

const RUN_CONFIG: &str = r#"
[scenario]
kind = "dense"
streams = 6

[detector]
kind = "wl-cusum"
window = 4

[estimator]
kind = "js-global-mean"

[run]
gamma = 30.0
replications = 80
max_steps = 600
"#;

#[test]
fn mse_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mse.csv");
    let res = qcd_lab(&[
        "mse",
        "--K",
        "10",
        "--w",
        "1",
        "--reps",
        "4000",
        "--norms",
        "0,1",
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("theta_norm,mse_ml,mse_js,mse_jsplus,se_js,se_jsplus\n"));
    assert_eq!(csv.lines().count(), 3);
    assert!(out.with_extension("json").exists());
    assert!(!dir.path().join("mse.csv.partial").exists());
}

#[test]
fn missing_config_exits_one_naming_the_path() {
    let res = qcd_lab(&["arl", "--config", "/nonexistent/lab.toml", "--out", "/tmp/x.csv"]);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("/nonexistent/lab.toml"), "stderr: {err}");
}

#[test]
fn unknown_config_key_exits_one_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    write(&cfg, &RUN_CONFIG.replace("[run]", "typo_key = 1\n\n[run]"));
    let res = qcd_lab(&[
        "arl",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o.csv").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("typo_key"), "stderr: {err}");
}

#[test]
fn arl_runs_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(&cfg, RUN_CONFIG);
    let out = dir.path().join("arl.csv");
    let res = qcd_lab(&[
        "arl",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("arl,se,censor_rate,replications,threshold\n"));
}

#[test]
fn trace_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(&cfg, RUN_CONFIG);
    let out1 = dir.path().join("t1.csv");
    let out2 = dir.path().join("t2.csv");
    for (out, seed) in [(&out1, "9"), (&out2, "9")] {
        let res = qcd_lab(&[
            "trace",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            seed,
            "--set",
            "run.max_steps=50",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let a = fs::read(&out1).unwrap();
    let b = fs::read(&out2).unwrap();
    assert_eq!(a, b, "same seed must give byte-identical traces");
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("n,statistic,alarmed\n"));
    assert_eq!(text.lines().count(), 51);

    // a different seed gives a different path
    let out3 = dir.path().join("t3.csv");
    let res = qcd_lab(&[
        "trace",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "10",
        "--set",
        "run.max_steps=50",
        "--out",
        out3.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    assert_ne!(fs::read(&out3).unwrap(), b);
}

#[test]
fn unreachable_calibration_tolerance_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        r#"
[scenario]
kind = "dense"
streams = 4

[detector]
kind = "cusum"

[estimator]
kind = "ml"

[run]
# with 37 replications the measured mean is a multiple of 1/37, which can
# never sit within 1e-12 of 50.3, so bisection must give up
gamma = 50.3
calibrate = true
rel_tol = 1e-12
calibration_replications = 37
"#,
    );
    let res = qcd_lab(&[
        "calibrate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("cal.csv").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("calibration failed"), "stderr: {err}");
}

#[test]
fn calibrate_reports_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        r#"
[scenario]
kind = "dense"
streams = 4

[detector]
kind = "cusum"

[estimator]
kind = "ml"

[run]
gamma = 30.0
calibrate = true
calibration_replications = 150
"#,
    );
    let out = dir.path().join("cal.csv");
    let res = qcd_lab(&[
        "calibrate",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(&out).unwrap();
    let data = csv.lines().nth(1).unwrap();
    let threshold: f64 = data.split(',').nth(1).unwrap().parse().unwrap();
    assert!(threshold <= 30f64.ln(), "known-shift threshold {threshold}");
}

#[test]
fn experiment_uses_config_out_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curves.csv");
    let cfg = dir.path().join("exp.toml");
    write(
        &cfg,
        &format!(
            r#"
[experiment]
kind = "mse-curves"
streams = 10
norm_grid = [0.0]
replications = 2000
out = "{}"
"#,
            out.display()
        ),
    );
    let res = qcd_lab(&[
        "experiment",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "7",
        "--set",
        "experiment.replications=1000",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let sidecar = fs::read_to_string(out.with_extension("json")).unwrap();
    assert!(sidecar.contains("\"replications\": 1000"), "{sidecar}");
    assert!(fs::read_to_string(&out).unwrap().lines().count() == 2);
}

#[test]
fn add_warns_on_heavy_censoring() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    // threshold far above anything reachable in 60 steps
    write(
        &cfg,
        r#"
[scenario]
kind = "dense"
streams = 4

[detector]
kind = "cusum"

[estimator]
kind = "ml"

[run]
threshold = 1e9
replications = 30
max_steps = 60
"#,
    );
    let res = qcd_lab(&[
        "add",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("add.csv").to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("censored"), "stderr: {err}");
}
