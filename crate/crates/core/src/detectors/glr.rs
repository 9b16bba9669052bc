use std::collections::VecDeque;

use crate::detectors::{Detector, StepOutcome};
use crate::error::{Error, Result};

/// Window-limited GLR test for an unknown Gaussian mean shift.
///
/// At time n the statistic is the supremum over start points `t` within the
/// window of the likelihood ratio maximized over the shift, which collapses
/// to `max_t (n - t + 1) * |mean(x_t..x_n)|^2 / 2`. Computed from a rolling
/// deque of prefix sums.
pub struct WindowedGlr {
    max_window: usize,
    threshold: f64,
    time: u64,
    statistic: f64,
    // prefix sums P_j for the last max_window+1 indices, oldest in front;
    // starts holding P_0 = 0
    prefixes: VecDeque<Vec<f64>>,
}

impl WindowedGlr {
    pub fn new(streams: usize, max_window: usize, threshold: f64) -> Result<Self> {
        if streams < 1 {
            return Err(Error::invalid("streams", "must be >= 1"));
        }
        if max_window < 1 {
            return Err(Error::invalid("max_window", "must be >= 1"));
        }
        let mut prefixes = VecDeque::with_capacity(max_window + 2);
        prefixes.push_back(vec![0.0; streams]);
        Ok(WindowedGlr {
            max_window,
            threshold,
            time: 0,
            statistic: 0.0,
            prefixes,
        })
    }

    pub fn max_window(&self) -> usize {
        self.max_window
    }
}

impl Detector for WindowedGlr {
    fn step(&mut self, observation: &[f64]) -> StepOutcome {
        self.time += 1;
        // drop the prefix that fell out of every admissible window
        let mut new_prefix = if self.prefixes.len() == self.max_window + 1 {
            self.prefixes.pop_front().expect("deque non-empty")
        } else {
            vec![0.0; observation.len()]
        };
        let latest = self.prefixes.back().expect("deque holds the zero prefix");
        for ((p, last), x) in new_prefix.iter_mut().zip(latest).zip(observation) {
            *p = last + x;
        }

        // offset o from the back gives start t = n - o, window length o + 1
        let mut best = f64::NEG_INFINITY;
        for (offset, old) in self.prefixes.iter().rev().enumerate() {
            let len = (offset + 1) as f64;
            let mut diff_sq = 0.0;
            for (p, q) in new_prefix.iter().zip(old) {
                let d = p - q;
                diff_sq += d * d;
            }
            best = best.max(diff_sq / (2.0 * len));
        }
        self.prefixes.push_back(new_prefix);
        self.statistic = best;
        StepOutcome {
            statistic: best,
            alarmed: best > self.threshold,
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
