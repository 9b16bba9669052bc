//! Online stopping rules.
//!
//! Every detector consumes one observation per [`Detector::step`] call and
//! reports its current statistic plus whether the stopping threshold was
//! strictly exceeded. Detectors own their threshold; replications build a
//! fresh detector each, so state is never shared.

mod cusum;
mod glr;
mod srrs;
mod wl_cusum;

pub use cusum::Cusum;
pub use glr::WindowedGlr;
pub use srrs::{Srrs, SrrsCountRule};
pub use wl_cusum::{ParallelWlCusum, WarmupPolicy, WlCusum};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ObservationStream, Scenario};
use crate::shrinkage::EstimatorSpec;
use crate::vecops;

/// Result of feeding one observation to a detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Current decision statistic (log domain for the likelihood-ratio-sum
    /// test, natural scale otherwise).
    pub statistic: f64,
    /// Whether the statistic strictly exceeds the threshold at an eligible
    /// time.
    pub alarmed: bool,
    /// 1-based index of the observation just consumed.
    pub time: u64,
}

pub trait Detector: Send + Sync {
    fn step(&mut self, observation: &[f64]) -> StepOutcome;
    fn statistic(&self) -> f64;
    fn time(&self) -> u64;
    fn threshold(&self) -> f64;
}

/// Log-likelihood ratio of one observation under a mean `estimate` against
/// the zero-mean model: `estimate . x - |estimate|^2 / 2`.
pub fn llr_increment(estimate: &[f64], observation: &[f64]) -> Result<f64> {
    if estimate.len() != observation.len() {
        return Err(Error::invalid(
            "estimate",
            format!(
                "length {} does not match observation length {}",
                estimate.len(),
                observation.len()
            ),
        ));
    }
    Ok(llr(estimate, observation))
}

#[inline]
pub(crate) fn llr(estimate: &[f64], observation: &[f64]) -> f64 {
    vecops::dot(estimate, observation) - 0.5 * vecops::norm_sq(estimate)
}

/// Outcome of one Monte Carlo replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Alarm time, or `max_steps` when censored.
    pub stopping_time: u64,
    pub alarmed: bool,
    /// The run hit `max_steps` without an alarm.
    pub censored: bool,
    /// Replication index that derived this run's observation sub-stream.
    pub replication_seed: u64,
}

/// Feeds observations until the detector alarms or `max_steps` is reached.
pub fn run_until_alarm(
    detector: &mut dyn Detector,
    stream: &mut ObservationStream<'_>,
    max_steps: u64,
    replication_seed: u64,
) -> RunRecord {
    assert!(max_steps >= 1);
    let mut x = vec![0.0; stream_dim(stream)];
    for _ in 0..max_steps {
        let n = stream.next_into(&mut x);
        let out = detector.step(&x);
        if out.alarmed {
            return RunRecord {
                stopping_time: n,
                alarmed: true,
                censored: false,
                replication_seed,
            };
        }
    }
    RunRecord {
        stopping_time: max_steps,
        alarmed: false,
        censored: true,
        replication_seed,
    }
}

fn stream_dim(stream: &ObservationStream<'_>) -> usize {
    stream.streams()
}

/// Serializable detector description for experiment configs.
///
/// Keys that do not apply to the chosen kind are rejected at validation so a
/// misspelled or misplaced option never passes silently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub kind: DetectorKindSpec,
    /// Window length (`wl-cusum` only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    /// Largest window (`parallel-wl-cusum` and `glr`); defaults to 200.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_window: Option<usize>,
    /// Start indices whose log statistic trails the leader by more than this
    /// are dropped during run-length runs (`srrs` only); defaults to 40.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prune_delta: Option<f64>,
    /// Effective sample count rule for the running-sum test (`srrs` only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count_rule: Option<SrrsCountRule>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKindSpec {
    Cusum,
    WlCusum,
    ParallelWlCusum,
    Glr,
    Srrs,
}

pub const DEFAULT_MAX_WINDOW: usize = 200;
pub const DEFAULT_PRUNE_DELTA: f64 = 40.0;

/// What a detector instance is built for; run-length runs are the only
/// context where start-index pruning is enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunContext {
    RunLength,
    DetectionDelay,
    Trace,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        DetectorSpec {
            kind: DetectorKindSpec::ParallelWlCusum,
            window: None,
            max_window: None,
            prune_delta: None,
            count_rule: None,
        }
    }
}

impl DetectorSpec {
    pub fn of_kind(kind: DetectorKindSpec) -> Self {
        DetectorSpec {
            kind,
            ..DetectorSpec::default()
        }
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.window = Some(window);
        self
    }

    pub fn with_max_window(mut self, max_window: usize) -> Self {
        self.max_window = Some(max_window);
        self
    }

    /// Rejects options that do not belong to the configured kind.
    pub fn validate(&self) -> Result<()> {
        let reject = |field: &'static str, ok: bool| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "`{field}` is not a parameter of detector kind `{}`",
                    kind_name(self.kind)
                )))
            }
        };
        match self.kind {
            DetectorKindSpec::Cusum => {
                reject("window", self.window.is_none())?;
                reject("max_window", self.max_window.is_none())?;
                reject("prune_delta", self.prune_delta.is_none())?;
                reject("count_rule", self.count_rule.is_none())?;
            }
            DetectorKindSpec::WlCusum => {
                if self.window.is_none() {
                    return Err(Error::Config(
                        "detector kind `wl-cusum` needs `window`".into(),
                    ));
                }
                reject("max_window", self.max_window.is_none())?;
                reject("prune_delta", self.prune_delta.is_none())?;
                reject("count_rule", self.count_rule.is_none())?;
            }
            DetectorKindSpec::ParallelWlCusum | DetectorKindSpec::Glr => {
                reject("window", self.window.is_none())?;
                reject("prune_delta", self.prune_delta.is_none())?;
                reject("count_rule", self.count_rule.is_none())?;
            }
            DetectorKindSpec::Srrs => {
                reject("window", self.window.is_none())?;
                reject("max_window", self.max_window.is_none())?;
            }
        }
        if let Some(w) = self.window {
            if w < 1 {
                return Err(Error::Config("`window` must be >= 1".into()));
            }
        }
        if let Some(w) = self.max_window {
            if w < 1 {
                return Err(Error::Config("`max_window` must be >= 1".into()));
            }
        }
        if let Some(d) = self.prune_delta {
            if !(d > 0.0) {
                return Err(Error::Config("`prune_delta` must be > 0".into()));
            }
        }
        Ok(())
    }

    /// Builds a detector for `scenario` at the given threshold.
    ///
    /// `design` supplies the spatial design matrix for subspace estimator
    /// kinds; `context` controls start-index pruning.
    pub fn build(
        &self,
        scenario: &Scenario,
        estimator: &EstimatorSpec,
        design: Option<&[Vec<f64>]>,
        threshold: f64,
        context: RunContext,
    ) -> Result<Box<dyn Detector>> {
        self.validate()?;
        let streams = scenario.streams();
        Ok(match self.kind {
            DetectorKindSpec::Cusum => Box::new(Cusum::new(
                scenario.post_change_mean().to_vec(),
                threshold,
            )?),
            DetectorKindSpec::WlCusum => {
                let est = estimator.build(streams, design)?;
                Box::new(WlCusum::new(est, self.window.unwrap(), threshold)?)
            }
            DetectorKindSpec::ParallelWlCusum => {
                let est = estimator.build(streams, design)?;
                let max_window = self.max_window.unwrap_or(DEFAULT_MAX_WINDOW);
                Box::new(ParallelWlCusum::new(est, max_window, threshold)?)
            }
            DetectorKindSpec::Glr => {
                let max_window = self.max_window.unwrap_or(DEFAULT_MAX_WINDOW);
                Box::new(WindowedGlr::new(streams, max_window, threshold)?)
            }
            DetectorKindSpec::Srrs => {
                let est = estimator.build(streams, design)?;
                let mut srrs = Srrs::new(est, threshold)?;
                if let Some(rule) = self.count_rule {
                    srrs = srrs.with_count_rule(rule);
                }
                if context == RunContext::RunLength {
                    srrs = srrs
                        .with_prune_delta(Some(self.prune_delta.unwrap_or(DEFAULT_PRUNE_DELTA)));
                }
                Box::new(srrs)
            }
        })
    }
}

fn kind_name(kind: DetectorKindSpec) -> &'static str {
    match kind {
        DetectorKindSpec::Cusum => "cusum",
        DetectorKindSpec::WlCusum => "wl-cusum",
        DetectorKindSpec::ParallelWlCusum => "parallel-wl-cusum",
        DetectorKindSpec::Glr => "glr",
        DetectorKindSpec::Srrs => "srrs",
    }
}
