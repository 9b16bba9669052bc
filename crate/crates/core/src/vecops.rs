//! Small fixed-length vector helpers used in the detector hot loops.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

#[inline]
pub fn mean(a: &[f64]) -> f64 {
    a.iter().sum::<f64>() / a.len() as f64
}

/// `out += a`
#[inline]
pub fn add_assign(out: &mut [f64], a: &[f64]) {
    for (o, x) in out.iter_mut().zip(a) {
        *o += x;
    }
}

/// `out -= a`
#[inline]
pub fn sub_assign(out: &mut [f64], a: &[f64]) {
    for (o, x) in out.iter_mut().zip(a) {
        *o -= x;
    }
}

/// `out += c * a`
#[inline]
pub fn axpy(out: &mut [f64], c: f64, a: &[f64]) {
    for (o, x) in out.iter_mut().zip(a) {
        *o += c * x;
    }
}

/// Streaming log-sum-exp accumulator.
///
/// Tracks `log(sum_i exp(v_i))` without ever forming the raw exponentials,
/// so statistics tens of nats above the stopping threshold stay finite.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    // sum of exp(v_i - max); at least 1 once any term was added
    scaled_sum: f64,
}

impl LogSumExp {
    pub fn new() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            scaled_sum: 0.0,
        }
    }

    pub fn add(&mut self, value: f64) {
        if value <= self.max {
            self.scaled_sum += (value - self.max).exp();
        } else {
            self.scaled_sum = self.scaled_sum * (self.max - value).exp() + 1.0;
            self.max = value;
        }
    }

    pub fn value(&self) -> f64 {
        if self.scaled_sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled_sum.ln()
        }
    }
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

/// `log(sum exp(values))` over a slice.
#[cfg_attr(not(test), allow(dead_code))]
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let mut acc = LogSumExp::new();
    for &v in values {
        acc.add(v);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_matches_naive_small() {
        let vals: [f64; 4] = [0.5, -1.2, 2.0, 0.0];
        let naive = vals.iter().map(|v: &f64| v.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&vals) - naive).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_stable_for_large_inputs() {
        // naive exp() overflows here
        let vals = [1000.0, 1002.0, 998.0];
        let expected = 1002.0 + (1.0f64 + (-2.0f64).exp() + (-4.0f64).exp()).ln();
        assert!((log_sum_exp(&vals) - expected).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_empty_is_neg_infinity() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn single_zero_term_gives_zero() {
        assert_eq!(log_sum_exp(&[0.0]), 0.0);
    }
}
