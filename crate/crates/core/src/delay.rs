//! Closed-form run-length quantities.
//!
//! The central object is the post-change drift of an adaptive test: the KL
//! divergence of the true shift minus half the mean-squared error of the
//! plug-in estimate at the test's window. A positive drift makes the delay
//! bound and the Wald-style approximation below applicable; both are
//! monotone in the divergence and the MSE, and both shrink as the estimator
//! improves.

use crate::error::{Error, Result};
use crate::vecops;

/// KL divergence per observation between the shifted and the zero-mean
/// unit-variance Gaussian models: half the squared shift norm.
pub fn kl_divergence(mean_shift: &[f64]) -> f64 {
    0.5 * vecops::norm_sq(mean_shift)
}

/// Expected per-step increment of an adaptive statistic after the change:
/// `divergence - mse / 2`. May be negative; callers decide what to do then.
pub fn drift(divergence: f64, mse: f64) -> f64 {
    divergence - 0.5 * mse
}

/// Inputs for the delay bound and approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// Stopping threshold in nats.
    pub threshold: f64,
    /// Estimation window length.
    pub window: usize,
    /// KL divergence of the true shift.
    pub divergence: f64,
    /// MSE of the estimate built from a full window.
    pub mse: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) {
            return Err(Error::invalid("threshold", "must be > 0"));
        }
        if self.window < 1 {
            return Err(Error::invalid("window", "must be >= 1"));
        }
        if !(self.divergence > 0.0) {
            return Err(Error::invalid("divergence", "must be > 0"));
        }
        if self.mse < 0.0 {
            return Err(Error::invalid("mse", "must be >= 0"));
        }
        Ok(())
    }

    fn drift(&self) -> f64 {
        drift(self.divergence, self.mse)
    }
}

/// Which denominator the delay bound divides by. The half-MSE form is the
/// default; the full-MSE variant is kept for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundForm {
    HalfMse,
    FullMse,
}

/// Non-asymptotic upper bound on the worst-case detection delay of the
/// windowed adaptive CuSum:
/// `(threshold + (window + 1) * divergence + 2) / (divergence - mse / 2)`.
///
/// Requires positive drift.
pub fn delay_upper_bound(inputs: &BoundInputs) -> Result<f64> {
    delay_upper_bound_with(BoundForm::HalfMse, inputs)
}

pub fn delay_upper_bound_with(form: BoundForm, inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let denom = match form {
        BoundForm::HalfMse => inputs.drift(),
        BoundForm::FullMse => inputs.divergence - inputs.mse,
    };
    if denom <= 0.0 {
        return Err(Error::BoundInapplicable(format!(
            "non-positive drift {denom:.6} (divergence {:.6}, mse {:.6}); enlarge the window",
            inputs.divergence, inputs.mse
        )));
    }
    let numer = inputs.threshold + (inputs.window as f64 + 1.0) * inputs.divergence + 2.0;
    Ok(numer / denom)
}

/// Wald-style delay approximation: `window + threshold / drift`.
pub fn delay_approximation(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let drift = inputs.drift();
    if drift <= 0.0 {
        return Err(Error::BoundInapplicable(format!(
            "non-positive drift {drift:.6}; enlarge the window"
        )));
    }
    Ok(inputs.window as f64 + inputs.threshold / drift)
}

/// Smallest window giving the PLAIN sample-mean estimator a non-negative
/// drift: `ceil(streams / |shift|^2)`. Shrinkage estimators have strictly
/// smaller MSE, so the same window gives them strictly positive drift.
///
/// When only a floor on the interesting shift magnitudes is known, sizing a
/// parallel bank's largest window as `ceil(streams / floor^2)` guarantees
/// some member has positive drift for every shift above the floor.
pub fn min_window_for_positive_drift(shift_norm_sq: f64, streams: usize) -> Result<usize> {
    if !(shift_norm_sq > 0.0) {
        return Err(Error::invalid("shift_norm_sq", "must be > 0"));
    }
    Ok((streams as f64 / shift_norm_sq).ceil() as usize)
}

/// Objective minimized by [`best_window`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowObjective {
    UpperBound,
    Approximation,
}

/// Scans `1..=max_window` for the window minimizing the delay upper bound
/// (or the approximation) under a per-window MSE model. Ties break toward
/// the smaller window; errors when no window yields positive drift.
pub fn best_window(
    objective: WindowObjective,
    threshold: f64,
    divergence: f64,
    max_window: usize,
    mse_at: impl Fn(usize) -> f64,
) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for w in 1..=max_window {
        let inputs = BoundInputs {
            threshold,
            window: w,
            divergence,
            mse: mse_at(w),
        };
        let value = match objective {
            WindowObjective::UpperBound => delay_upper_bound(&inputs),
            WindowObjective::Approximation => delay_approximation(&inputs),
        };
        if let Ok(v) = value {
            if best.map_or(true, |(_, b)| v < b) {
                best = Some((w, v));
            }
        }
    }
    best.map(|(w, _)| w).ok_or_else(|| {
        Error::BoundInapplicable(format!(
            "no window in 1..={max_window} yields positive drift at divergence {divergence:.6}"
        ))
    })
}

/// `bound_minimizing_window` per the published interface name.
pub fn bound_minimizing_window(
    threshold: f64,
    divergence: f64,
    max_window: usize,
    mse_at: impl Fn(usize) -> f64,
) -> Result<usize> {
    best_window(WindowObjective::UpperBound, threshold, divergence, max_window, mse_at)
}
