//! Point estimators of the post-change mean and their mean-squared error.
//!
//! Every estimator here is a pure function of the sufficient statistic
//! `(sample mean, sample count)` of the observations feeding it. The
//! James-Stein family shrinks the sample mean toward a target (a fixed
//! point, the empirical global mean, or a linear subspace) by a data-driven
//! factor; the positive-part variants clamp that factor at zero and are the
//! default inside the detectors. Dominance over the plain sample mean
//! requires enough streams (3 for a point target, 4 for the global mean,
//! `target dimension < streams - 2` for a subspace), which is enforced at
//! construction.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{substream, StreamPurpose};
use crate::vecops;

/// Sample mean and effective sample count of an estimation window.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStat {
    pub mean: Vec<f64>,
    pub count: u32,
}

impl SufficientStat {
    pub fn new(mean: Vec<f64>, count: u32) -> Result<Self> {
        if count < 1 {
            return Err(Error::invalid("count", "must be >= 1"));
        }
        Ok(SufficientStat { mean, count })
    }
}

/// Orthogonal projection onto the column space of a design matrix.
///
/// Built once via a QR factorization; the stored basis is orthonormal, so
/// applying the projection never touches the normal equations.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    streams: usize,
    dim: usize,
    // row-major orthonormal basis, dim rows of length streams
    basis: Vec<f64>,
}

impl Projection {
    /// `columns` are the design matrix columns (each of length `streams`).
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::invalid("columns", "need at least one column"));
        }
        let streams = columns[0].len();
        if columns.iter().any(|c| c.len() != streams) {
            return Err(Error::invalid("columns", "ragged design matrix"));
        }
        let dim = columns.len();
        if dim > streams {
            return Err(Error::invalid(
                "columns",
                "more columns than rows; column space is not proper",
            ));
        }
        let mat = DMatrix::from_fn(streams, dim, |r, c| columns[c][r]);
        let frob = mat.norm();
        let qr = mat.qr();
        let r = qr.r();
        let tol = 1e-10 * frob.max(1.0);
        for j in 0..dim {
            if r[(j, j)].abs() <= tol {
                return Err(Error::invalid(
                    "columns",
                    format!("design matrix is rank deficient (pivot {j} ~ 0)"),
                ));
            }
        }
        let q = qr.q();
        let mut basis = vec![0.0; dim * streams];
        for j in 0..dim {
            for i in 0..streams {
                basis[j * streams + i] = q[(i, j)];
            }
        }
        Ok(Projection { streams, dim, basis })
    }

    pub fn streams(&self) -> usize {
        self.streams
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes the projection of `x` into `out`.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.streams);
        debug_assert_eq!(out.len(), self.streams);
        out.fill(0.0);
        for j in 0..self.dim {
            let row = &self.basis[j * self.streams..(j + 1) * self.streams];
            let c = vecops::dot(row, x);
            vecops::axpy(out, c, row);
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.streams];
        self.apply_into(x, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Ml,
    JsPoint { target: Vec<f64>, positive_part: bool },
    JsGlobalMean { positive_part: bool },
    JsSubspace { projection: Projection, positive_part: bool },
    LsProjection { projection: Projection },
}

/// A validated, immutable estimator of the post-change mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimator {
    streams: usize,
    kind: Kind,
}

impl Estimator {
    /// Plain sample mean.
    pub fn ml(streams: usize) -> Result<Self> {
        if streams < 1 {
            return Err(Error::invalid("streams", "must be >= 1"));
        }
        Ok(Estimator { streams, kind: Kind::Ml })
    }

    /// Shrinkage toward a fixed point (`None` means the origin).
    /// Requires at least 3 streams.
    pub fn js_point(streams: usize, target: Option<Vec<f64>>, positive_part: bool) -> Result<Self> {
        if streams < 3 {
            return Err(Error::invalid(
                "streams",
                format!("point shrinkage dominates the sample mean only for streams >= 3 (got {streams})"),
            ));
        }
        let target = target.unwrap_or_else(|| vec![0.0; streams]);
        if target.len() != streams {
            return Err(Error::invalid("target", "length must equal streams"));
        }
        Ok(Estimator {
            streams,
            kind: Kind::JsPoint { target, positive_part },
        })
    }

    /// Shrinkage toward the empirical global mean of the window.
    /// Requires at least 4 streams.
    pub fn js_global_mean(streams: usize, positive_part: bool) -> Result<Self> {
        if streams < 4 {
            return Err(Error::invalid(
                "streams",
                format!("global-mean shrinkage dominates the sample mean only for streams >= 4 (got {streams})"),
            ));
        }
        Ok(Estimator {
            streams,
            kind: Kind::JsGlobalMean { positive_part },
        })
    }

    /// Shrinkage toward the column space of a design matrix.
    /// Requires `columns < streams - 2`.
    pub fn js_subspace(streams: usize, columns: &[Vec<f64>], positive_part: bool) -> Result<Self> {
        let projection = Projection::from_columns(columns)?;
        if projection.streams() != streams {
            return Err(Error::invalid("columns", "row count must equal streams"));
        }
        if projection.dim() + 2 >= streams {
            return Err(Error::invalid(
                "columns",
                format!(
                    "subspace shrinkage dominates the sample mean only for dimension < streams - 2 \
                     (got dimension {} with {} streams)",
                    projection.dim(),
                    streams
                ),
            ));
        }
        Ok(Estimator {
            streams,
            kind: Kind::JsSubspace { projection, positive_part },
        })
    }

    /// Least-squares fit within the design's column space (no shrinkage).
    pub fn ls_projection(streams: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let projection = Projection::from_columns(columns)?;
        if projection.streams() != streams {
            return Err(Error::invalid("columns", "row count must equal streams"));
        }
        Ok(Estimator {
            streams,
            kind: Kind::LsProjection { projection },
        })
    }

    pub fn streams(&self) -> usize {
        self.streams
    }

    /// Short name for report columns.
    pub fn kind_name(&self) -> &'static str {
        match &self.kind {
            Kind::Ml => "ml",
            Kind::JsPoint { .. } => "js-point",
            Kind::JsGlobalMean { .. } => "js-global-mean",
            Kind::JsSubspace { .. } => "js-subspace",
            Kind::LsProjection { .. } => "ls-projection",
        }
    }

    /// Dimension of the shrinkage target (0 for a point target).
    pub fn target_dim(&self) -> Option<usize> {
        match &self.kind {
            Kind::Ml => None,
            Kind::JsPoint { .. } => Some(0),
            Kind::JsGlobalMean { .. } => Some(1),
            Kind::JsSubspace { projection, .. } | Kind::LsProjection { projection } => {
                Some(projection.dim())
            }
        }
    }

    pub fn estimate(&self, stat: &SufficientStat) -> Vec<f64> {
        let mut out = vec![0.0; self.streams];
        self.estimate_into(&stat.mean, stat.count, &mut out);
        out
    }

    /// Core estimate, allocation-free.
    ///
    /// `count == 0` is accepted as the boundary case of the running tests
    /// whose effective sample size can be one less than the window length:
    /// the shrinkage factor degenerates and the estimate collapses to the
    /// shrink target (the sample mean for the plain estimator).
    pub fn estimate_into(&self, mean: &[f64], count: u32, out: &mut [f64]) {
        debug_assert_eq!(mean.len(), self.streams);
        debug_assert_eq!(out.len(), self.streams);
        match &self.kind {
            Kind::Ml => out.copy_from_slice(mean),
            Kind::JsPoint { target, positive_part } => {
                let residual_sq: f64 = mean
                    .iter()
                    .zip(target)
                    .map(|(m, t)| (m - t) * (m - t))
                    .sum();
                let f = shrink_factor(
                    self.streams as f64 - 2.0,
                    count,
                    residual_sq,
                    *positive_part,
                );
                match f {
                    Some(f) => {
                        for ((o, m), t) in out.iter_mut().zip(mean).zip(target) {
                            *o = f * (m - t) + t;
                        }
                    }
                    None => out.copy_from_slice(target),
                }
            }
            Kind::JsGlobalMean { positive_part } => {
                let m = vecops::mean(mean);
                let residual_sq: f64 = mean.iter().map(|v| (v - m) * (v - m)).sum();
                let f = shrink_factor(
                    self.streams as f64 - 3.0,
                    count,
                    residual_sq,
                    *positive_part,
                );
                match f {
                    Some(f) => {
                        for (o, v) in out.iter_mut().zip(mean) {
                            *o = f * (v - m) + m;
                        }
                    }
                    None => out.fill(m),
                }
            }
            Kind::JsSubspace { projection, positive_part } => {
                projection.apply_into(mean, out);
                let residual_sq: f64 = mean
                    .iter()
                    .zip(out.iter())
                    .map(|(v, p)| (v - p) * (v - p))
                    .sum();
                let f = shrink_factor(
                    (self.streams - projection.dim()) as f64 - 2.0,
                    count,
                    residual_sq,
                    *positive_part,
                );
                if let Some(f) = f {
                    for (o, v) in out.iter_mut().zip(mean) {
                        *o = f * (v - *o) + *o;
                    }
                }
                // degenerate residual: the projection already sits in `out`
            }
            Kind::LsProjection { projection } => projection.apply_into(mean, out),
        }
    }
}

/// Shrinkage factor `1 - excess / (count * residual_sq)`, optionally clamped
/// at zero. `None` signals the degenerate cases (zero residual or zero
/// count) whose limit is the shrink target itself.
fn shrink_factor(excess: f64, count: u32, residual_sq: f64, positive_part: bool) -> Option<f64> {
    if residual_sq == 0.0 || count == 0 {
        return None;
    }
    let f = 1.0 - excess / (count as f64 * residual_sq);
    if positive_part && f < 0.0 {
        None
    } else {
        Some(f)
    }
}

impl Estimator {
    /// Single-pass log-likelihood-ratio increment for the detector hot
    /// loops: equivalent to materializing the estimate from the window mean
    /// and scoring `observation`, but with one fused traversal. Only the
    /// kinds whose estimate has a two-term decomposition along the
    /// observation support it; others return `None` and take the general
    /// path.
    ///
    /// `means` yields the window mean components; `sum_x` is the
    /// precomputed component sum of `observation`.
    pub(crate) fn fused_step_llr(
        &self,
        means: impl Iterator<Item = f64>,
        observation: &[f64],
        sum_x: f64,
        effective: u32,
    ) -> Option<f64> {
        match &self.kind {
            Kind::Ml => {
                let mut dot = 0.0;
                let mut ssq = 0.0;
                for (m, x) in means.zip(observation) {
                    dot += m * x;
                    ssq += m * m;
                }
                Some(dot - 0.5 * ssq)
            }
            Kind::JsGlobalMean { positive_part } => {
                let k = self.streams as f64;
                let mut sum_m = 0.0;
                let mut dot = 0.0;
                let mut ssq = 0.0;
                for (m, x) in means.zip(observation) {
                    sum_m += m;
                    dot += m * x;
                    ssq += m * m;
                }
                let center = sum_m / k;
                let residual_sq = (ssq - k * center * center).max(0.0);
                let f = shrink_factor(k - 3.0, effective, residual_sq, *positive_part)
                    .unwrap_or(0.0);
                // estimate = f * (mean - center) + center componentwise
                let dot_est = f * (dot - center * sum_x) + center * sum_x;
                let norm_est = f * f * residual_sq + k * center * center;
                Some(dot_est - 0.5 * norm_est)
            }
            _ => None,
        }
    }
}

/// Exact MSE of the plain sample mean over a window: `streams / window`.
pub fn mse_closed_ml(streams: usize, window: usize) -> f64 {
    assert!(streams >= 1 && window >= 1);
    streams as f64 / window as f64
}

/// Exact MSE of subspace shrinkage when the true mean lies in the target:
/// `(target_dim + 2) / window`. A point target has dimension 0, the global
/// mean dimension 1.
pub fn mse_closed_js_on_target(target_dim: usize, window: usize) -> f64 {
    assert!(window >= 1);
    (target_dim as f64 + 2.0) / window as f64
}

/// Monte Carlo MSE of an estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseEstimate {
    pub mse: f64,
    pub se: f64,
}

/// Estimates `E || estimate - truth ||^2` by drawing `reps` independent
/// window means `N(truth, I / window)` and applying the estimator to each.
pub fn mse_monte_carlo(
    estimator: &Estimator,
    truth: &[f64],
    window: u32,
    reps: u64,
    master_seed: u64,
) -> Result<MseEstimate> {
    if truth.len() != estimator.streams() {
        return Err(Error::invalid("truth", "length must equal estimator streams"));
    }
    if window < 1 || reps < 1 {
        return Err(Error::invalid("window", "window and reps must be >= 1"));
    }
    let k = truth.len();
    let scale = 1.0 / (window as f64).sqrt();
    let mut rng = substream(master_seed, StreamPurpose::EstimatorMse, 0);
    let mut mean = vec![0.0; k];
    let mut est = vec![0.0; k];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..reps {
        for (m, t) in mean.iter_mut().zip(truth) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *m = t + scale * z;
        }
        estimator.estimate_into(&mean, window, &mut est);
        let err: f64 = est
            .iter()
            .zip(truth)
            .map(|(e, t)| (e - t) * (e - t))
            .sum();
        sum += err;
        sum_sq += err * err;
    }
    let n = reps as f64;
    let mse = sum / n;
    let var = ((sum_sq - sum * sum / n) / (n - 1.0)).max(0.0);
    Ok(MseEstimate {
        mse,
        se: (var / n).sqrt(),
    })
}

/// Serializable estimator description used by configs and experiment sidecars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    pub kind: EstimatorKindSpec,
    /// Clamp the shrinkage factor at zero (detector default).
    #[serde(default = "default_positive_part")]
    pub positive_part: bool,
    /// Point-shrinkage target; defaults to the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
}

fn default_positive_part() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKindSpec {
    Ml,
    JsPoint,
    JsGlobalMean,
    JsSubspace,
    LsProjection,
}

impl Default for EstimatorSpec {
    /// Positive-part global-mean shrinkage, the all-experiment default.
    fn default() -> Self {
        EstimatorSpec {
            kind: EstimatorKindSpec::JsGlobalMean,
            positive_part: true,
            mu: None,
        }
    }
}

impl EstimatorSpec {
    /// Builds the estimator; subspace and least-squares kinds need the
    /// design-matrix columns of the spatial model.
    pub fn build(&self, streams: usize, design: Option<&[Vec<f64>]>) -> Result<Estimator> {
        match self.kind {
            EstimatorKindSpec::Ml => Estimator::ml(streams),
            EstimatorKindSpec::JsPoint => {
                Estimator::js_point(streams, self.mu.clone(), self.positive_part)
            }
            EstimatorKindSpec::JsGlobalMean => {
                Estimator::js_global_mean(streams, self.positive_part)
            }
            EstimatorKindSpec::JsSubspace => {
                let design = design.ok_or_else(|| {
                    Error::Config(
                        "estimator kind `js-subspace` needs a spatial scenario supplying the design matrix"
                            .into(),
                    )
                })?;
                Estimator::js_subspace(streams, design, self.positive_part)
            }
            EstimatorKindSpec::LsProjection => {
                let design = design.ok_or_else(|| {
                    Error::Config(
                        "estimator kind `ls-projection` needs a spatial scenario supplying the design matrix"
                            .into(),
                    )
                })?;
                Estimator::ls_projection(streams, design)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stat(mean: Vec<f64>, count: u32) -> SufficientStat {
        SufficientStat::new(mean, count).unwrap()
    }

    #[test]
    fn ml_is_identity() {
        let e = Estimator::ml(3).unwrap();
        let s = stat(vec![0.3, -1.2, 4.0], 5);
        assert_eq!(e.estimate(&s), s.mean);
    }

    #[test]
    fn point_shrinkage_direct_value() {
        // residual norm^2 = 4, excess = 1, factor = 1 - 1/4
        let e = Estimator::js_point(3, None, false).unwrap();
        let got = e.estimate(&stat(vec![2.0, 0.0, 0.0], 1));
        assert_eq!(got, vec![1.5, 0.0, 0.0]);
    }

    #[test]
    fn positive_part_clamps_to_target() {
        // residual norm^2 = 0.5 < excess 1, factor would be -1
        let e = Estimator::js_point(3, None, true).unwrap();
        let got = e.estimate(&stat(vec![0.5, 0.5, 0.0], 1));
        assert_eq!(got, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn unclamped_factor_may_overshoot() {
        let e = Estimator::js_point(3, None, false).unwrap();
        let got = e.estimate(&stat(vec![0.5, 0.5, 0.0], 1));
        // factor = 1 - 1/0.5 = -1
        assert_eq!(got, vec![-0.5, -0.5, 0.0]);
    }

    #[test]
    fn global_mean_degenerate_direction_returns_mean() {
        let e = Estimator::js_global_mean(4, false).unwrap();
        let got = e.estimate(&stat(vec![0.7; 4], 3));
        assert_eq!(got, vec![0.7; 4]);
    }

    #[test]
    fn point_degenerate_returns_target() {
        let mu = vec![1.0, 2.0, 3.0];
        let e = Estimator::js_point(3, Some(mu.clone()), false).unwrap();
        assert_eq!(e.estimate(&stat(mu.clone(), 2)), mu);
    }

    #[test]
    fn construction_gates_on_stream_count() {
        assert!(Estimator::js_point(2, None, true).is_err());
        assert!(Estimator::js_point(3, None, true).is_ok());
        assert!(Estimator::js_global_mean(3, true).is_err());
        assert!(Estimator::js_global_mean(4, true).is_ok());
    }

    #[test]
    fn subspace_dimension_gate() {
        let cols = vec![vec![1.0, 0.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0, 0.0]];
        assert!(Estimator::js_subspace(5, &cols, true).is_ok());
        let cols3 = vec![
            vec![1.0, 0.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0, 0.0],
        ];
        assert!(Estimator::js_subspace(5, &cols3, true).is_err());
    }

    #[test]
    fn rank_deficient_design_rejected() {
        let cols = vec![vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0], vec![2.0, 2.0, 0.0, 0.0, 0.0, 0.0]];
        assert!(Projection::from_columns(&cols).is_err());
    }

    #[test]
    fn projection_is_idempotent_and_symmetric() {
        let cols = vec![
            vec![1.0, 0.5, -0.3, 2.0, 0.1, -1.0],
            vec![0.0, 1.5, 0.7, -0.2, 0.9, 0.4],
        ];
        let p = Projection::from_columns(&cols).unwrap();
        let x = vec![0.3, -1.0, 2.0, 0.5, -0.7, 1.1];
        let px = p.apply(&x);
        let ppx = p.apply(&px);
        for (a, b) in px.iter().zip(&ppx) {
            assert!((a - b).abs() < 1e-10);
        }
        // symmetry: <Px, y> == <x, Py>
        let y = vec![1.0, 0.2, -0.4, 0.9, 2.0, -1.3];
        let py = p.apply(&y);
        let lhs = vecops::dot(&px, &y);
        let rhs = vecops::dot(&x, &py);
        assert!((lhs - rhs).abs() < 1e-10);
        // projection reproduces the design columns
        for c in &cols {
            let pc = p.apply(c);
            for (a, b) in pc.iter().zip(c) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn subspace_span_of_ones_matches_global_mean() {
        let k = 6;
        let ones = vec![vec![1.0; k]];
        let sub = Estimator::js_subspace(k, &ones, false).unwrap();
        let gm = Estimator::js_global_mean(k, false).unwrap();
        let s = stat(vec![0.9, -0.3, 1.7, 0.2, -1.1, 0.5], 3);
        let a = sub.estimate(&s);
        let b = gm.estimate(&s);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn point_shrinkage_is_translation_of_origin_shrinkage() {
        let k = 5;
        let mu = vec![0.4, -0.2, 1.0, 0.0, 2.0];
        let at_mu = Estimator::js_point(k, Some(mu.clone()), false).unwrap();
        let at_zero = Estimator::js_point(k, None, false).unwrap();
        let x = vec![1.4, 0.3, -0.5, 0.8, 2.5];
        let shifted: Vec<f64> = x.iter().zip(&mu).map(|(a, b)| a - b).collect();
        let direct = at_mu.estimate(&stat(x, 4));
        let via_shift: Vec<f64> = at_zero
            .estimate(&stat(shifted, 4))
            .iter()
            .zip(&mu)
            .map(|(a, b)| a + b)
            .collect();
        for (a, b) in direct.iter().zip(&via_shift) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn count_scaling_only_through_factor() {
        // (1 - f_w) * w must not depend on w away from the clamp
        let e = Estimator::js_point(4, None, false).unwrap();
        let x = vec![1.0, 2.0, -0.5, 0.3];
        let f = |w: u32| {
            let est = e.estimate(&stat(x.clone(), w));
            est[0] / x[0] // componentwise factor
        };
        let (f1, f5) = (f(1), f(5));
        assert!(((1.0 - f1) * 1.0 - (1.0 - f5) * 5.0).abs() < 1e-12);
    }

    #[test]
    fn closed_forms() {
        assert_eq!(mse_closed_ml(10, 1), 10.0);
        assert_eq!(mse_closed_ml(10, 5), 2.0);
        assert_eq!(mse_closed_ml(3, 3), 1.0);
        assert_eq!(mse_closed_js_on_target(0, 1), 2.0);
        assert_eq!(mse_closed_js_on_target(1, 1), 3.0);
        assert_eq!(mse_closed_js_on_target(2, 4), 1.0);
    }

    #[test]
    fn monte_carlo_matches_ml_closed_form() {
        let e = Estimator::ml(10).unwrap();
        let theta = vec![0.4; 10];
        let got = mse_monte_carlo(&e, &theta, 1, 50_000, 42).unwrap();
        assert!((got.mse - 10.0).abs() < 3.0 * got.se, "mse {} se {}", got.mse, got.se);
    }

    #[test]
    fn monte_carlo_point_shrinkage_on_target() {
        let e = Estimator::js_point(10, None, false).unwrap();
        let theta = vec![0.0; 10];
        let got = mse_monte_carlo(&e, &theta, 1, 50_000, 43).unwrap();
        assert!((got.mse - 2.0).abs() < 3.0 * got.se, "mse {} se {}", got.mse, got.se);
    }

    #[test]
    fn monte_carlo_dominance_over_magnitude_grid() {
        let ml = Estimator::ml(10).unwrap();
        let js = Estimator::js_point(10, None, false).unwrap();
        for norm in [0.0, 1.0, 2.0, 4.0] {
            let mut theta = vec![0.0; 10];
            theta[0] = norm;
            let a = mse_monte_carlo(&js, &theta, 1, 30_000, 44).unwrap();
            let b = mse_monte_carlo(&ml, &theta, 1, 30_000, 44).unwrap();
            assert!(
                a.mse < b.mse,
                "shrinkage should win at norm {norm}: {} vs {}",
                a.mse,
                b.mse
            );
        }
    }

    #[test]
    fn estimate_lies_between_target_and_mean_with_positive_part() {
        let e = Estimator::js_global_mean(5, true).unwrap();
        let x = vec![1.0, -0.4, 0.2, 2.2, 0.9];
        let m = vecops::mean(&x);
        let est = e.estimate(&stat(x.clone(), 1));
        for (v, o) in x.iter().zip(&est) {
            let lo = m.min(*v) - 1e-12;
            let hi = m.max(*v) + 1e-12;
            assert!(*o >= lo && *o <= hi);
        }
    }

    #[test]
    fn spec_builds_default_global_mean() {
        let spec = EstimatorSpec::default();
        let e = spec.build(10, None).unwrap();
        assert_eq!(e.kind_name(), "js-global-mean");
        assert!(spec.build(3, None).is_err()); // needs >= 4 streams
    }

    #[test]
    fn spec_subspace_requires_design() {
        let spec = EstimatorSpec {
            kind: EstimatorKindSpec::JsSubspace,
            positive_part: true,
            mu: None,
        };
        assert!(spec.build(10, None).is_err());
    }
}
