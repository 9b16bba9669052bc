//! Statistical self-checks.
//!
//! The running likelihood-ratio-sum statistic satisfies `E[R_n] = n` under
//! the no-change model whenever every plug-in estimate is built strictly
//! from past observations. Checking that by naively averaging `R_n - n`
//! does not work: each ratio term has infinite variance (its log is roughly
//! Gaussian, so the mean lives in a tail that a feasible sample never
//! visits), and the naive average undershoots systematically at any
//! realistic replication count.
//!
//! The check here instead estimates each per-start mean `E[exp(L)]` with a
//! defensive mixture: half the replications sample the no-change model, the
//! other half sample the plug-in change measure (drawing each observation
//! around the current estimate), and every path is scored with
//! `2 L / (1 + L)`, which is bounded by 2. The estimator is unbiased for
//! the same expectation with finite variance, so a tight four-sigma band
//! around zero is meaningful.

use rand_distr::{Distribution, StandardNormal};

use crate::detectors::llr_increment;
use crate::error::{Error, Result};
use crate::model::{substream, StreamPurpose};
use crate::shrinkage::Estimator;

/// Mixture-sampled estimate of `E[R_horizon] - horizon` under the no-change
/// model, with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleCheck {
    pub horizon: usize,
    pub residual: f64,
    pub se: f64,
}

impl MartingaleCheck {
    pub fn within(&self, sigmas: f64) -> bool {
        self.residual.abs() <= sigmas * self.se
    }
}

/// Estimates `E[R_n] - n` for the ratio-sum statistic with plug-in
/// `estimator`, at `reps` replications per start age.
///
/// The per-age likelihood ratios are rebuilt here from the same estimator
/// and log-likelihood increment used by the detector; the detector's
/// incremental bookkeeping is tied to that recomputation by its own
/// equivalence tests.
pub fn srrs_martingale_residual(
    estimator: &Estimator,
    horizon: usize,
    reps: u64,
    master_seed: u64,
) -> Result<MartingaleCheck> {
    if horizon < 1 {
        return Err(Error::invalid("horizon", "must be >= 1"));
    }
    if reps < 4 {
        return Err(Error::invalid("reps", "must be >= 4"));
    }
    let mut residual = 0.0;
    let mut variance = 0.0;
    // age 1 contributes a ratio of exactly one; nothing to sample
    for age in 2..=horizon {
        let (mean, se) = mixture_ratio_mean(estimator, age, reps, master_seed)?;
        residual += mean - 1.0;
        variance += se * se;
    }
    Ok(MartingaleCheck {
        horizon,
        residual,
        se: variance.sqrt(),
    })
}

/// Defensive-mixture estimate of `E[exp(L_age)]` for one start age.
fn mixture_ratio_mean(
    estimator: &Estimator,
    age: usize,
    reps: u64,
    master_seed: u64,
) -> Result<(f64, f64)> {
    let k = estimator.streams();
    let mut strata_sum = [0.0f64; 2];
    let mut strata_sq = [0.0f64; 2];
    let mut strata_n = [0u64; 2];
    let mut sum_vec = vec![0.0; k];
    let mut mean_vec = vec![0.0; k];
    let mut estimate = vec![0.0; k];
    let mut x = vec![0.0; k];
    for rep in 0..reps {
        // proportional allocation: even replications sample the no-change
        // model, odd ones the plug-in change measure
        let shifted = rep % 2 == 1;
        let mut rng = substream(
            master_seed,
            StreamPurpose::Diagnostics,
            (age as u64) << 32 | rep,
        );
        sum_vec.fill(0.0);
        let mut log_ratio = 0.0;
        for step in 0..age {
            if step == 0 {
                estimate.fill(0.0);
            } else {
                for (m, s) in mean_vec.iter_mut().zip(&sum_vec) {
                    *m = s / step as f64;
                }
                estimator.estimate_into(&mean_vec, step as u32, &mut estimate);
            }
            for (xi, e) in x.iter_mut().zip(&estimate) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *xi = if shifted { e + z } else { z };
            }
            log_ratio += llr_increment(&estimate, &x)?;
            for (s, xi) in sum_vec.iter_mut().zip(&x) {
                *s += xi;
            }
        }
        // 2 L / (1 + L), evaluated stably through the logistic function
        let score = 2.0 / (1.0 + (-log_ratio).exp());
        let idx = usize::from(shifted);
        strata_sum[idx] += score;
        strata_sq[idx] += score * score;
        strata_n[idx] += 1;
    }
    let mut mean = 0.0;
    let mut var = 0.0;
    for s in 0..2 {
        let n = strata_n[s] as f64;
        let m = strata_sum[s] / n;
        let v = ((strata_sq[s] - strata_sum[s] * strata_sum[s] / n) / (n - 1.0)).max(0.0);
        mean += 0.5 * m;
        var += 0.25 * v / n;
    }
    Ok((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residual_centers_on_zero_for_shrinkage_estimator() {
        let est = Estimator::js_global_mean(10, true).unwrap();
        let check = srrs_martingale_residual(&est, 20, 4000, 77).unwrap();
        assert!(
            check.within(4.0),
            "residual {} exceeds 4 x {}",
            check.residual,
            check.se
        );
        assert!(check.se < 0.2, "mixture estimator should be tight");
    }

    #[test]
    fn score_flags_a_peeking_ratio() {
        // scoring each observation against itself (a deliberate look-ahead)
        // breaks the ratio normalization; the bounded score drifts toward
        // its ceiling instead of averaging one
        let k = 4;
        let reps = 4000u64;
        let mut sum = 0.0;
        for rep in 0..reps {
            let mut rng = substream(5, StreamPurpose::Diagnostics, rep);
            let mut log_ratio = 0.0;
            let mut x = vec![0.0; k];
            for _ in 0..3 {
                for xi in x.iter_mut() {
                    *xi = StandardNormal.sample(&mut rng);
                }
                let peeking = x.clone();
                log_ratio += llr_increment(&peeking, &x).unwrap();
            }
            sum += 2.0 / (1.0 + (-log_ratio as f64).exp());
        }
        let mean = sum / reps as f64;
        assert!(mean > 1.5, "peeking should inflate the score, got {mean}");
    }
}
