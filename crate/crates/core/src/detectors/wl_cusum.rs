use std::collections::VecDeque;

use crate::detectors::{llr, Detector, StepOutcome};
use crate::error::{Error, Result};
use crate::shrinkage::Estimator;
use crate::vecops;

/// How the adaptive CuSum statistic behaves while the estimation window is
/// still filling (the stopping rule never fires there either way).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarmupPolicy {
    /// Statistic stays at zero until the window holds `window` observations;
    /// the first increment is applied at time `window + 1`.
    FreezeUntilEligible,
    /// Increments accrue from the first step, with the estimate built from
    /// however many observations are available (zero estimate at time 1).
    AccrueFromStart,
}

/// Statistic values carried out of warm-up change the delay behaviour at low
/// thresholds noticeably; starting flat at the first eligible step tracks the
/// Wald-style delay approximation across the whole threshold range, so that
/// is the default.
pub const DEFAULT_WARMUP: WarmupPolicy = WarmupPolicy::FreezeUntilEligible;

/// Window-limited adaptive CuSum: the likelihood ratio of each observation is
/// evaluated at an estimate built from the `window` observations strictly
/// before it, and accumulated through the positive-part recursion. No alarm
/// may fire before time `window + 1`.
#[derive(Debug, Clone)]
pub struct WlCusum {
    estimator: Estimator,
    window: usize,
    threshold: f64,
    policy: WarmupPolicy,
    statistic: f64,
    time: u64,
    buf: VecDeque<Vec<f64>>,
    sum: Vec<f64>,
    mean_scratch: Vec<f64>,
    estimate_scratch: Vec<f64>,
}

impl WlCusum {
    pub fn new(estimator: Estimator, window: usize, threshold: f64) -> Result<Self> {
        if window < 1 {
            return Err(Error::invalid("window", "must be >= 1"));
        }
        let streams = estimator.streams();
        Ok(WlCusum {
            estimator,
            window,
            threshold,
            policy: DEFAULT_WARMUP,
            statistic: 0.0,
            time: 0,
            buf: VecDeque::with_capacity(window + 1),
            sum: vec![0.0; streams],
            mean_scratch: vec![0.0; streams],
            estimate_scratch: vec![0.0; streams],
        })
    }

    pub fn with_warmup_policy(mut self, policy: WarmupPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Estimate that will score the NEXT observation (for inspection/tests).
    pub fn current_estimate(&mut self) -> Vec<f64> {
        let count = self.buf.len();
        if count == 0 {
            return vec![0.0; self.sum.len()];
        }
        for (m, s) in self.mean_scratch.iter_mut().zip(&self.sum) {
            *m = s / count as f64;
        }
        self.estimator
            .estimate_into(&self.mean_scratch, count as u32, &mut self.estimate_scratch);
        self.estimate_scratch.clone()
    }

    fn advance_window(&mut self, observation: &[f64]) {
        vecops::add_assign(&mut self.sum, observation);
        let mut slot = if self.buf.len() == self.window {
            let old = self.buf.pop_front().expect("window non-empty");
            vecops::sub_assign(&mut self.sum, &old);
            old
        } else {
            vec![0.0; observation.len()]
        };
        slot.copy_from_slice(observation);
        self.buf.push_back(slot);
    }
}

impl Detector for WlCusum {
    fn step(&mut self, observation: &[f64]) -> StepOutcome {
        self.time += 1;
        let n = self.time;
        let eligible = n > self.window as u64;
        let scoring = match self.policy {
            WarmupPolicy::FreezeUntilEligible => eligible,
            WarmupPolicy::AccrueFromStart => true,
        };
        if scoring {
            let count = self.buf.len();
            let inc = if count == 0 {
                0.0
            } else {
                let scale = 1.0 / count as f64;
                let sum_x: f64 = observation.iter().sum();
                let means = self.sum.iter().map(|s| s * scale);
                match self
                    .estimator
                    .fused_step_llr(means, observation, sum_x, count as u32)
                {
                    Some(inc) => inc,
                    None => {
                        for (m, s) in self.mean_scratch.iter_mut().zip(&self.sum) {
                            *m = s * scale;
                        }
                        self.estimator.estimate_into(
                            &self.mean_scratch,
                            count as u32,
                            &mut self.estimate_scratch,
                        );
                        llr(&self.estimate_scratch, observation)
                    }
                }
            };
            self.statistic = self.statistic.max(0.0) + inc;
        }
        self.advance_window(observation);
        StepOutcome {
            statistic: self.statistic,
            alarmed: eligible && self.statistic > self.threshold,
            time: n,
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

/// Bank of window-limited CuSum tests with windows `1..=max_window` sharing
/// one threshold; alarms as soon as any member alarms and reports the largest
/// member statistic. Observation history is stored once and shared.
pub struct ParallelWlCusum {
    estimator: Estimator,
    max_window: usize,
    threshold: f64,
    policy: WarmupPolicy,
    time: u64,
    statistic: f64,
    history: VecDeque<Vec<f64>>,
    // flat per-window running sums; window w occupies [(w-1)*K, w*K)
    sums: Vec<f64>,
    stats: Vec<f64>,
    mean_scratch: Vec<f64>,
    estimate_scratch: Vec<f64>,
}

impl ParallelWlCusum {
    pub fn new(estimator: Estimator, max_window: usize, threshold: f64) -> Result<Self> {
        if max_window < 1 {
            return Err(Error::invalid("max_window", "must be >= 1"));
        }
        let streams = estimator.streams();
        Ok(ParallelWlCusum {
            estimator,
            max_window,
            threshold,
            policy: DEFAULT_WARMUP,
            time: 0,
            statistic: 0.0,
            history: VecDeque::with_capacity(max_window + 2),
            sums: vec![0.0; max_window * streams],
            stats: vec![0.0; max_window],
            mean_scratch: vec![0.0; streams],
            estimate_scratch: vec![0.0; streams],
        })
    }

    pub fn with_warmup_policy(mut self, policy: WarmupPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn max_window(&self) -> usize {
        self.max_window
    }

    pub fn member_statistics(&self) -> &[f64] {
        &self.stats
    }
}

impl Detector for ParallelWlCusum {
    fn step(&mut self, observation: &[f64]) -> StepOutcome {
        let streams = observation.len();
        self.time += 1;
        let n = self.time;
        let sum_x: f64 = observation.iter().sum();
        let mut alarmed = false;
        let mut best = f64::NEG_INFINITY;
        for w in 1..=self.max_window {
            let eligible = n > w as u64;
            let scoring = match self.policy {
                WarmupPolicy::FreezeUntilEligible => eligible,
                WarmupPolicy::AccrueFromStart => true,
            };
            if scoring {
                let count = (n - 1).min(w as u64) as usize;
                let inc = if count == 0 {
                    0.0
                } else {
                    let sum = &self.sums[(w - 1) * streams..w * streams];
                    let scale = 1.0 / count as f64;
                    let means = sum.iter().map(|s| s * scale);
                    match self
                        .estimator
                        .fused_step_llr(means, observation, sum_x, count as u32)
                    {
                        Some(inc) => inc,
                        None => {
                            for (m, s) in self.mean_scratch.iter_mut().zip(sum) {
                                *m = s * scale;
                            }
                            self.estimator.estimate_into(
                                &self.mean_scratch,
                                count as u32,
                                &mut self.estimate_scratch,
                            );
                            llr(&self.estimate_scratch, observation)
                        }
                    }
                };
                self.stats[w - 1] = self.stats[w - 1].max(0.0) + inc;
            }
            if eligible && self.stats[w - 1] > self.threshold {
                alarmed = true;
            }
            best = best.max(self.stats[w - 1]);
        }

        // advance the shared history and every window sum
        let mut slot = if self.history.len() > self.max_window {
            self.history.pop_front().expect("history non-empty")
        } else {
            vec![0.0; streams]
        };
        slot.copy_from_slice(observation);
        self.history.push_back(slot);
        let len = self.history.len();
        for w in 1..=self.max_window {
            let sum = &mut self.sums[(w - 1) * streams..w * streams];
            vecops::add_assign(sum, observation);
            if len > w {
                let leaving = &self.history[len - 1 - w];
                vecops::sub_assign(sum, leaving);
            }
        }

        self.statistic = best;
        StepOutcome {
            statistic: best,
            alarmed,
            time: n,
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{scenario_dense, substream, ObservationStream, StreamPurpose};

    fn ml(streams: usize) -> Estimator {
        Estimator::ml(streams).unwrap()
    }

    fn random_sequence(streams: usize, steps: usize, seed: u64) -> Vec<Vec<f64>> {
        let scenario = scenario_dense(streams).unwrap();
        let mut stream = ObservationStream::new(
            &scenario,
            substream(seed, StreamPurpose::Observations, 0),
        );
        let mut out = Vec::with_capacity(steps);
        let mut x = vec![0.0; streams];
        for _ in 0..steps {
            stream.next_into(&mut x);
            out.push(x.clone());
        }
        out
    }

    /// From-scratch reference: recomputes the window mean and the recursion
    /// at every step without any incremental state.
    fn direct_path(
        estimator: &Estimator,
        window: usize,
        policy: WarmupPolicy,
        xs: &[Vec<f64>],
    ) -> Vec<f64> {
        let mut stats = Vec::with_capacity(xs.len());
        let mut s = 0.0f64;
        for (idx, x) in xs.iter().enumerate() {
            let n = idx + 1;
            let scoring = match policy {
                WarmupPolicy::FreezeUntilEligible => n > window,
                WarmupPolicy::AccrueFromStart => true,
            };
            if scoring {
                let hi = n - 1; // exclusive of x_n
                let slice = &xs[if n > window { n - 1 - window } else { 0 }..hi];
                let inc = if slice.is_empty() {
                    0.0
                } else {
                    let k = x.len();
                    let mut mean = vec![0.0; k];
                    for row in slice {
                        for (m, v) in mean.iter_mut().zip(row) {
                            *m += v;
                        }
                    }
                    for m in &mut mean {
                        *m /= slice.len() as f64;
                    }
                    let est = estimator.estimate(
                        &crate::shrinkage::SufficientStat::new(mean, slice.len() as u32).unwrap(),
                    );
                    llr(&est, x)
                };
                s = s.max(0.0) + inc;
            }
            stats.push(s);
        }
        stats
    }

    #[test]
    fn never_alarms_during_warmup() {
        for policy in [WarmupPolicy::FreezeUntilEligible, WarmupPolicy::AccrueFromStart] {
            let mut det = WlCusum::new(ml(2), 5, -1e9).unwrap().with_warmup_policy(policy);
            let xs = random_sequence(2, 8, 3);
            for (idx, x) in xs.iter().enumerate() {
                let out = det.step(x);
                if idx < 5 {
                    assert!(!out.alarmed, "no alarm allowed at step {}", idx + 1);
                } else {
                    assert!(out.alarmed, "threshold below any value must alarm once eligible");
                }
            }
        }
    }

    #[test]
    fn window_of_one_scores_against_previous_observation() {
        let mut det = WlCusum::new(ml(2), 1, 1e9).unwrap();
        let xs = random_sequence(2, 10, 4);
        let mut expected = 0.0f64;
        for (idx, x) in xs.iter().enumerate() {
            let out = det.step(x);
            if idx >= 1 {
                let est = &xs[idx - 1];
                expected = expected.max(0.0) + llr(est, x);
                assert!((out.statistic - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn incremental_matches_direct_recomputation() {
        let xs = random_sequence(3, 30, 5);
        for policy in [WarmupPolicy::FreezeUntilEligible, WarmupPolicy::AccrueFromStart] {
            let mut det = WlCusum::new(ml(3), 3, 1e9).unwrap().with_warmup_policy(policy);
            let direct = direct_path(&ml(3), 3, policy, &xs);
            for (x, want) in xs.iter().zip(direct) {
                let got = det.step(x).statistic;
                let tol = 1e-8 * want.abs().max(1.0);
                assert!((got - want).abs() <= tol, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn parallel_with_one_window_equals_single_test() {
        let xs = random_sequence(2, 25, 6);
        let mut single = WlCusum::new(ml(2), 1, 3.0).unwrap();
        let mut par = ParallelWlCusum::new(ml(2), 1, 3.0).unwrap();
        for x in &xs {
            let a = single.step(x);
            let b = par.step(x);
            assert!((a.statistic - b.statistic).abs() < 1e-12);
            assert_eq!(a.alarmed, b.alarmed);
        }
    }

    #[test]
    fn parallel_members_match_standalone_tests() {
        let xs = random_sequence(2, 40, 7);
        let max_window = 6;
        let mut par = ParallelWlCusum::new(ml(2), max_window, 1e9).unwrap();
        let mut singles: Vec<WlCusum> = (1..=max_window)
            .map(|w| WlCusum::new(ml(2), w, 1e9).unwrap())
            .collect();
        for x in &xs {
            let out = par.step(x);
            let mut best = f64::NEG_INFINITY;
            for (w, s) in singles.iter_mut().enumerate() {
                let o = s.step(x);
                let member = par.member_statistics()[w];
                assert!(
                    (o.statistic - member).abs() < 1e-10,
                    "window {} diverged: {} vs {}",
                    w + 1,
                    o.statistic,
                    member
                );
                best = best.max(o.statistic);
            }
            assert!((out.statistic - best).abs() < 1e-10);
        }
    }

    #[test]
    fn parallel_stops_no_later_than_each_member() {
        let xs = random_sequence(2, 60, 8);
        let threshold = 0.8;
        let stop_of = |mut d: WlCusum| -> Option<usize> {
            for (i, x) in xs.iter().enumerate() {
                if d.step(x).alarmed {
                    return Some(i);
                }
            }
            None
        };
        let mut par = ParallelWlCusum::new(ml(2), 5, threshold).unwrap();
        let par_stop = xs.iter().position(|x| par.step(x).alarmed);
        for w in 1..=5 {
            let member_stop = stop_of(WlCusum::new(ml(2), w, threshold).unwrap());
            if let (Some(p), Some(m)) = (par_stop, member_stop) {
                assert!(p <= m);
            } else if par_stop.is_none() {
                assert!(member_stop.is_none());
            }
        }
    }

    #[test]
    fn reference_bank_size_constructs() {
        let det = ParallelWlCusum::new(ml(4), 200, 5.0).unwrap();
        assert_eq!(det.max_window(), 200);
    }
}
