//! Monte Carlo engine: run-length and delay estimation, threshold
//! calibration, and the experiment drivers.
//!
//! Replications are embarrassingly parallel. Each one derives its own
//! ChaCha sub-stream from `(master seed, purpose, replication index)` and
//! owns a freshly built detector; results are reduced in replication order,
//! so every estimate is a pure function of its inputs and the master seed.

pub mod diagnostics;
pub mod experiments;
pub mod report;

use rayon::prelude::*;

use crate::detectors::{run_until_alarm, Detector, DetectorSpec, RunContext, RunRecord};
use crate::error::{Error, Result};
use crate::model::{substream, ObservationStream, Scenario, StreamPurpose};
use crate::shrinkage::EstimatorSpec;

/// A named detector/estimator pairing, plus the design matrix for subspace
/// estimator kinds.
#[derive(Debug, Clone)]
pub struct TestSetup {
    pub name: String,
    pub detector: DetectorSpec,
    pub estimator: EstimatorSpec,
    pub design: Option<Vec<Vec<f64>>>,
}

impl TestSetup {
    pub fn new(name: impl Into<String>, detector: DetectorSpec, estimator: EstimatorSpec) -> Self {
        TestSetup {
            name: name.into(),
            detector,
            estimator,
            design: None,
        }
    }

    pub fn with_design(mut self, design: Vec<Vec<f64>>) -> Self {
        self.design = Some(design);
        self
    }

    pub fn build(
        &self,
        scenario: &Scenario,
        threshold: f64,
        context: RunContext,
    ) -> Result<Box<dyn Detector>> {
        self.detector.build(
            scenario,
            &self.estimator,
            self.design.as_deref(),
            threshold,
            context,
        )
    }
}

/// Mean run length without a change, with its standard error and the share
/// of replications cut off at the step cap. Censored runs count at the cap,
/// biasing the estimate downward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArlEstimate {
    pub arl: f64,
    pub se: f64,
    pub censor_rate: f64,
    pub replications: u64,
}

/// Mean detection delay with the change present from the first observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AddEstimate {
    pub add: f64,
    pub se: f64,
    pub censor_rate: f64,
    /// More than 0.1% of replications were censored; the delay estimate is
    /// materially truncated.
    pub censor_warning: bool,
    pub replications: u64,
}

fn summarize(records: &[RunRecord]) -> (f64, f64, f64) {
    let n = records.len() as f64;
    let sum: f64 = records.iter().map(|r| r.stopping_time as f64).sum();
    let mean = sum / n;
    let ss: f64 = records
        .iter()
        .map(|r| {
            let d = r.stopping_time as f64 - mean;
            d * d
        })
        .sum();
    let var = if records.len() > 1 { ss / (n - 1.0) } else { 0.0 };
    let censored = records.iter().filter(|r| r.censored).count() as f64;
    (mean, (var / n).sqrt(), censored / n)
}

fn run_replications(
    scenario: &Scenario,
    setup: &TestSetup,
    threshold: f64,
    context: RunContext,
    purpose: StreamPurpose,
    reps: u64,
    max_steps: u64,
    master_seed: u64,
) -> Result<Vec<RunRecord>> {
    if reps < 1 {
        return Err(Error::invalid("replications", "must be >= 1"));
    }
    if max_steps < 1 {
        return Err(Error::invalid("max_steps", "must be >= 1"));
    }
    // surface build errors once, before fanning out
    setup.build(scenario, threshold, context)?;
    let records: Vec<RunRecord> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut detector = setup
                .build(scenario, threshold, context)
                .expect("setup validated above");
            let mut stream = ObservationStream::new(scenario, substream(master_seed, purpose, rep));
            run_until_alarm(detector.as_mut(), &mut stream, max_steps, rep)
        })
        .collect();
    Ok(records)
}

/// Estimates the average run length to false alarm. The scenario must never
/// change; runs are censored at `max_steps` (20x the target run length is
/// the conventional cap).
pub fn estimate_arl(
    scenario: &Scenario,
    setup: &TestSetup,
    threshold: f64,
    reps: u64,
    max_steps: u64,
    master_seed: u64,
) -> Result<ArlEstimate> {
    if !scenario.change_at().is_never() {
        return Err(Error::invalid(
            "scenario",
            "run-length estimation needs a scenario without a change",
        ));
    }
    let records = run_replications(
        scenario,
        setup,
        threshold,
        RunContext::RunLength,
        StreamPurpose::RunLength,
        reps,
        max_steps,
        master_seed,
    )?;
    let (arl, se, censor_rate) = summarize(&records);
    Ok(ArlEstimate {
        arl,
        se,
        censor_rate,
        replications: reps,
    })
}

/// Estimates the mean detection delay with the change active from the first
/// observation (the worst case for the tests shipped here).
pub fn estimate_add(
    scenario: &Scenario,
    setup: &TestSetup,
    threshold: f64,
    reps: u64,
    max_steps: u64,
    master_seed: u64,
) -> Result<AddEstimate> {
    match scenario.change_at() {
        crate::model::ChangeTime::At(1) => {}
        _ => {
            return Err(Error::invalid(
                "scenario",
                "delay estimation needs the change present from time 1",
            ))
        }
    }
    let records = run_replications(
        scenario,
        setup,
        threshold,
        RunContext::DetectionDelay,
        StreamPurpose::DetectionDelay,
        reps,
        max_steps,
        master_seed,
    )?;
    let (add, se, censor_rate) = summarize(&records);
    Ok(AddEstimate {
        add,
        se,
        censor_rate,
        censor_warning: censor_rate > 0.001,
        replications: reps,
    })
}

/// Result of a threshold calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub threshold: f64,
    /// Run length measured at the returned threshold (absent for the
    /// trivial-tolerance short circuit).
    pub achieved: Option<ArlEstimate>,
    pub evaluations: u32,
}

/// Step cap for calibration evaluations; keeps the expensive high-threshold
/// probes bounded while truncating well under half a percent of runs near
/// the target.
fn calibration_cap(gamma: f64) -> u64 {
    (6.0 * gamma).ceil() as u64
}

/// Finds a threshold whose measured run length matches `gamma` within
/// `rel_tol`, by bisection over thresholds.
///
/// Every evaluation reuses the same replication sub-streams (common random
/// numbers), which makes the measured run length monotone in the threshold
/// and the whole search deterministic for a fixed master seed.
///
/// The bracket starts at `log(gamma) +- 3`, which suits likelihood-ratio
/// tests whose calibrated threshold sits just below `log(gamma)`. Endpoints
/// are never evaluated directly (an endpoint probe censors at the step cap
/// and is the single most expensive measurement possible); instead the
/// bracket expands whenever bisection collapses onto an edge that no
/// midpoint has confirmed, which also reaches the GLR bank's much higher
/// thresholds through a run of cheap low-side probes.
pub fn calibrate_threshold(
    scenario: &Scenario,
    setup: &TestSetup,
    gamma: f64,
    rel_tol: f64,
    reps: u64,
    master_seed: u64,
) -> Result<Calibration> {
    if !(gamma > 1.0) {
        return Err(Error::invalid("gamma", "must be > 1"));
    }
    if !(rel_tol > 0.0) {
        return Err(Error::invalid("rel_tol", "must be > 0"));
    }
    let never = scenario.without_change();
    let log_gamma = gamma.ln();
    if rel_tol >= 1.0 {
        return Ok(Calibration {
            threshold: log_gamma,
            achieved: None,
            evaluations: 0,
        });
    }
    let cap = calibration_cap(gamma);
    let evaluations = std::cell::Cell::new(0u32);
    let eval = |b: f64| -> Result<ArlEstimate> {
        evaluations.set(evaluations.get() + 1);
        let records = run_replications(
            &never,
            setup,
            b,
            RunContext::RunLength,
            StreamPurpose::Calibration,
            reps,
            cap,
            master_seed,
        )?;
        let (arl, se, censor_rate) = summarize(&records);
        Ok(ArlEstimate {
            arl,
            se,
            censor_rate,
            replications: reps,
        })
    };

    let mut lo = log_gamma - 3.0;
    let mut hi = log_gamma + 3.0;
    // whether a measurement proved the edge sits on the expected side
    let mut lo_confirmed = false;
    let mut hi_confirmed = false;
    // last measurement, for the interpolation step below
    let mut last: Option<(f64, f64)> = None;

    for _ in 0..80 {
        if hi - lo < 1e-4 {
            if !hi_confirmed {
                if hi > log_gamma + 90.0 {
                    return Err(Error::CalibrationFailed(format!(
                        "run length still below target {gamma} near threshold {hi:.3}"
                    )));
                }
                hi += 3.0;
                continue;
            }
            if !lo_confirmed {
                if lo < log_gamma - 30.0 {
                    return Err(Error::CalibrationFailed(format!(
                        "run length still above target {gamma} near threshold {lo:.3}"
                    )));
                }
                lo -= 3.0;
                continue;
            }
            return Err(Error::CalibrationFailed(format!(
                "bisection bracket collapsed at [{lo:.5}, {hi:.5}] without reaching \
                 |run length - {gamma}| / {gamma} <= {rel_tol}; the measured run length \
                 moves in steps larger than the tolerance at {reps} replications"
            )));
        }
        // log run length is close to linear in the threshold with unit
        // slope, so a projected step from the last measurement usually
        // lands on target; keep it inside the middle half of the bracket
        // so the bracket still shrinks geometrically and the collapse
        // detection above stays reachable. The very first probe sits below
        // log(gamma): runs at thresholds under the calibrated one are the
        // cheap ones (they stop early), and the tests whose run length
        // explodes in the threshold are exactly the ones with superlinear
        // step costs.
        let width = hi - lo;
        let mid = match last {
            Some((b, a)) if a > 0.0 => {
                (b + (gamma / a).ln()).clamp(lo + 0.25 * width, hi - 0.25 * width)
            }
            None => (log_gamma - 1.5).clamp(lo + 0.25 * width, hi - 0.25 * width),
            _ => 0.5 * (lo + hi),
        };
        let at_mid = eval(mid)?;
        if (at_mid.arl - gamma).abs() / gamma <= rel_tol {
            return Ok(Calibration {
                threshold: mid,
                achieved: Some(at_mid),
                evaluations: evaluations.get(),
            });
        }
        last = Some((mid, at_mid.arl));
        if at_mid.arl < gamma {
            lo = mid;
            lo_confirmed = true;
            // approaching an edge nothing has confirmed: move it out now
            // rather than bisecting all the way into it
            if !hi_confirmed && hi - lo <= 1.5 && hi <= log_gamma + 90.0 {
                hi += 3.0;
            }
        } else {
            hi = mid;
            hi_confirmed = true;
            if !lo_confirmed && mid - lo <= 1.5 && lo >= log_gamma - 30.0 {
                lo -= 3.0;
            }
        }
    }
    Err(Error::CalibrationFailed(format!(
        "no threshold with |run length - {gamma}| / {gamma} <= {rel_tol} found \
         within 80 evaluations (bracket [{lo:.4}, {hi:.4}])"
    )))
}
