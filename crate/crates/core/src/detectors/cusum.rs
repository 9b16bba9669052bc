use crate::detectors::{llr, Detector, StepOutcome};
use crate::error::{Error, Result};
use crate::vecops;

/// CuSum with a fully known post-change mean.
///
/// The statistic is the running maximum over change-point hypotheses of the
/// cumulative log-likelihood ratio, maintained by the positive-part
/// recursion `W_n = max(W_{n-1}, 0) + llr(x_n)`. The clamp applies to the
/// previous value, so the statistic itself may dip below zero for one step.
#[derive(Debug, Clone)]
pub struct Cusum {
    shift: Vec<f64>,
    threshold: f64,
    statistic: f64,
    time: u64,
}

impl Cusum {
    pub fn new(shift: Vec<f64>, threshold: f64) -> Result<Self> {
        if shift.is_empty() || vecops::norm_sq(&shift) == 0.0 {
            return Err(Error::invalid("shift", "known shift must be non-zero"));
        }
        Ok(Cusum {
            shift,
            threshold,
            statistic: 0.0,
            time: 0,
        })
    }
}

impl Detector for Cusum {
    fn step(&mut self, observation: &[f64]) -> StepOutcome {
        self.time += 1;
        let inc = llr(&self.shift, observation);
        self.statistic = self.statistic.max(0.0) + inc;
        StepOutcome {
            statistic: self.statistic,
            alarmed: self.statistic > self.threshold,
            time: self.time,
        }
    }

    fn statistic(&self) -> f64 {
        self.statistic
    }

    fn time(&self) -> u64 {
        self.time
    }

    fn threshold(&self) -> f64 {
        self.threshold
    }
}
