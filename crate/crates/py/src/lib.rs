//! Python bindings: scenarios, shrinkage estimators, online detectors, the
//! delay formulas, and the Monte Carlo harness entry points.
//!
//! Build with `cargo build -p qcd-py --release`; the resulting
//! `libqcd_lab.so` imports as the `qcd_lab` module (see
//! `python/smoke_test.py`).

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use qcd_core::detectors::{DetectorKindSpec, DetectorSpec, RunContext};
use qcd_core::error::Error;
use qcd_core::harness;
use qcd_core::model::{self, ChangeTime, StreamPurpose};
use qcd_core::shrinkage::{self, EstimatorKindSpec, EstimatorSpec, SufficientStat};
use qcd_core::{delay, detectors};

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Config(_) | Error::InvalidParameter { .. } => {
            PyValueError::new_err(err.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Post-change mean scenario plus, for spatial models, the detector-side
/// design matrix.
#[pyclass(module = "qcd_lab", skip_from_py_object)]
#[derive(Clone)]
struct Scenario {
    inner: model::Scenario,
    design: Option<Vec<Vec<f64>>>,
}

#[pymethods]
impl Scenario {
    /// Shift `[1, 2, ..., K]` normalized to unit length.
    #[staticmethod]
    fn dense(streams: usize) -> PyResult<Self> {
        Ok(Scenario {
            inner: model::scenario_dense(streams).map_err(to_py_err)?,
            design: None,
        })
    }

    /// First `affected` streams shifted by `affected**-0.5` each.
    #[staticmethod]
    fn sparse(streams: usize, affected: usize) -> PyResult<Self> {
        Ok(Scenario {
            inner: model::scenario_sparse(streams, affected).map_err(to_py_err)?,
            design: None,
        })
    }

    /// Sensors on a line, sources at nominal positions displaced by `r`.
    #[staticmethod]
    #[pyo3(signature = (streams, sources, displacement = 0.0))]
    fn spatial(streams: usize, sources: Vec<f64>, displacement: f64) -> PyResult<Self> {
        let model = model::SpatialModel::uniform_line(streams, sources, displacement)
            .map_err(to_py_err)?;
        let (inner, design) = model::scenario_spatial(&model).map_err(to_py_err)?;
        Ok(Scenario {
            inner,
            design: Some(design),
        })
    }

    /// Arbitrary non-zero shift vector.
    #[staticmethod]
    #[pyo3(signature = (theta, label = "custom"))]
    fn custom(theta: Vec<f64>, label: &str) -> PyResult<Self> {
        Ok(Scenario {
            inner: model::Scenario::new(theta, ChangeTime::At(1), label).map_err(to_py_err)?,
            design: None,
        })
    }

    #[getter]
    fn streams(&self) -> usize {
        self.inner.streams()
    }

    #[getter]
    fn post_change_mean(&self) -> Vec<f64> {
        self.inner.post_change_mean().to_vec()
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label().to_string()
    }

    /// Design-matrix columns of the spatial model, if any.
    #[getter]
    fn design(&self) -> Option<Vec<Vec<f64>>> {
        self.design.clone()
    }

    /// Same shift, change active from time `t` (1-based).
    fn with_change_at(&self, t: u64) -> PyResult<Self> {
        Ok(Scenario {
            inner: self.inner.with_change_at(t).map_err(to_py_err)?,
            design: self.design.clone(),
        })
    }

    /// Same dimensions, no change ever occurs.
    fn without_change(&self) -> Self {
        Scenario {
            inner: self.inner.without_change(),
            design: self.design.clone(),
        }
    }

    /// Draws `steps` observations from the replication sub-stream
    /// `(seed, replication)`.
    #[pyo3(signature = (steps, seed, replication = 0))]
    fn observations(&self, steps: usize, seed: u64, replication: u64) -> Vec<Vec<f64>> {
        let mut stream = model::ObservationStream::new(
            &self.inner,
            model::substream(seed, StreamPurpose::Observations, replication),
        );
        let mut x = vec![0.0; self.inner.streams()];
        (0..steps)
            .map(|_| {
                stream.next_into(&mut x);
                x.clone()
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(label='{}', streams={})",
            self.inner.label(),
            self.inner.streams()
        )
    }
}

/// Point estimator of the post-change mean.
#[pyclass(module = "qcd_lab", skip_from_py_object)]
#[derive(Clone)]
struct Estimator {
    inner: shrinkage::Estimator,
}

#[pymethods]
impl Estimator {
    /// Plain sample mean.
    #[staticmethod]
    fn ml(streams: usize) -> PyResult<Self> {
        Ok(Estimator {
            inner: shrinkage::Estimator::ml(streams).map_err(to_py_err)?,
        })
    }

    /// Shrinkage toward a fixed point (origin by default); needs >= 3 streams.
    #[staticmethod]
    #[pyo3(signature = (streams, mu = None, positive_part = true))]
    fn js_point(streams: usize, mu: Option<Vec<f64>>, positive_part: bool) -> PyResult<Self> {
        Ok(Estimator {
            inner: shrinkage::Estimator::js_point(streams, mu, positive_part)
                .map_err(to_py_err)?,
        })
    }

    /// Shrinkage toward the window's global mean; needs >= 4 streams.
    #[staticmethod]
    #[pyo3(signature = (streams, positive_part = true))]
    fn js_global_mean(streams: usize, positive_part: bool) -> PyResult<Self> {
        Ok(Estimator {
            inner: shrinkage::Estimator::js_global_mean(streams, positive_part)
                .map_err(to_py_err)?,
        })
    }

    /// Shrinkage toward the column space of `columns`; needs
    /// `len(columns) < streams - 2`.
    #[staticmethod]
    #[pyo3(signature = (streams, columns, positive_part = true))]
    fn js_subspace(streams: usize, columns: Vec<Vec<f64>>, positive_part: bool) -> PyResult<Self> {
        Ok(Estimator {
            inner: shrinkage::Estimator::js_subspace(streams, &columns, positive_part)
                .map_err(to_py_err)?,
        })
    }

    /// Least-squares fit within the column space of `columns`.
    #[staticmethod]
    fn ls_projection(streams: usize, columns: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Estimator {
            inner: shrinkage::Estimator::ls_projection(streams, &columns).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind_name()
    }

    #[getter]
    fn streams(&self) -> usize {
        self.inner.streams()
    }

    /// Estimate from a window's sample mean and observation count.
    fn estimate(&self, mean: Vec<f64>, count: u32) -> PyResult<Vec<f64>> {
        if mean.len() != self.inner.streams() {
            return Err(PyValueError::new_err("mean length must equal streams"));
        }
        let stat = SufficientStat::new(mean, count).map_err(to_py_err)?;
        Ok(self.inner.estimate(&stat))
    }

    /// Monte Carlo `(mse, se)` at the given truth and window length.
    fn mse_monte_carlo(
        &self,
        truth: Vec<f64>,
        window: u32,
        reps: u64,
        seed: u64,
    ) -> PyResult<(f64, f64)> {
        let got = shrinkage::mse_monte_carlo(&self.inner, &truth, window, reps, seed)
            .map_err(to_py_err)?;
        Ok((got.mse, got.se))
    }

    fn __repr__(&self) -> String {
        format!("Estimator(kind='{}', streams={})", self.inner.kind_name(), self.inner.streams())
    }
}

/// A detector/estimator pairing that the harness functions can run.
#[pyclass(module = "qcd_lab", skip_from_py_object)]
#[derive(Clone)]
struct TestSetup {
    inner: harness::TestSetup,
}

fn estimator_spec(kind: &str, positive_part: bool, mu: Option<Vec<f64>>) -> PyResult<EstimatorSpec> {
    let kind = match kind {
        "ml" => EstimatorKindSpec::Ml,
        "js-point" => EstimatorKindSpec::JsPoint,
        "js-global-mean" => EstimatorKindSpec::JsGlobalMean,
        "js-subspace" => EstimatorKindSpec::JsSubspace,
        "ls-projection" => EstimatorKindSpec::LsProjection,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown estimator kind `{other}`; expected ml, js-point, js-global-mean, \
                 js-subspace or ls-projection"
            )))
        }
    };
    Ok(EstimatorSpec {
        kind,
        positive_part,
        mu,
    })
}

#[pymethods]
impl TestSetup {
    /// CuSum with the scenario's shift taken as known.
    #[staticmethod]
    fn cusum() -> Self {
        TestSetup {
            inner: harness::TestSetup::new(
                "cusum",
                DetectorSpec::of_kind(DetectorKindSpec::Cusum),
                EstimatorSpec {
                    kind: EstimatorKindSpec::Ml,
                    positive_part: false,
                    mu: None,
                },
            ),
        }
    }

    /// Single-window adaptive CuSum.
    #[staticmethod]
    #[pyo3(signature = (window, estimator = "js-global-mean", positive_part = true, mu = None))]
    fn wl_cusum(
        window: usize,
        estimator: &str,
        positive_part: bool,
        mu: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        Ok(TestSetup {
            inner: harness::TestSetup::new(
                format!("wl-{estimator}"),
                DetectorSpec::of_kind(DetectorKindSpec::WlCusum).with_window(window),
                estimator_spec(estimator, positive_part, mu)?,
            ),
        })
    }

    /// Bank of adaptive CuSum tests with windows `1..=max_window`.
    #[staticmethod]
    #[pyo3(signature = (max_window = 200, estimator = "js-global-mean", positive_part = true, mu = None))]
    fn parallel_wl_cusum(
        max_window: usize,
        estimator: &str,
        positive_part: bool,
        mu: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        Ok(TestSetup {
            inner: harness::TestSetup::new(
                format!("parallel-wl-{estimator}"),
                DetectorSpec::of_kind(DetectorKindSpec::ParallelWlCusum)
                    .with_max_window(max_window),
                estimator_spec(estimator, positive_part, mu)?,
            ),
        })
    }

    /// Window-limited GLR bank.
    #[staticmethod]
    #[pyo3(signature = (max_window = 200))]
    fn glr(max_window: usize) -> Self {
        TestSetup {
            inner: harness::TestSetup::new(
                "glr",
                DetectorSpec::of_kind(DetectorKindSpec::Glr).with_max_window(max_window),
                EstimatorSpec {
                    kind: EstimatorKindSpec::Ml,
                    positive_part: false,
                    mu: None,
                },
            ),
        }
    }

    /// Running likelihood-ratio-sum test with plug-in estimates.
    #[staticmethod]
    #[pyo3(signature = (estimator = "js-global-mean", positive_part = true, mu = None, prune_delta = None))]
    fn srrs(
        estimator: &str,
        positive_part: bool,
        mu: Option<Vec<f64>>,
        prune_delta: Option<f64>,
    ) -> PyResult<Self> {
        let mut spec = DetectorSpec::of_kind(DetectorKindSpec::Srrs);
        spec.prune_delta = prune_delta;
        Ok(TestSetup {
            inner: harness::TestSetup::new(
                format!("srrs-{estimator}"),
                spec,
                estimator_spec(estimator, positive_part, mu)?,
            ),
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    /// Online detector instance for this setup at a threshold.
    #[pyo3(signature = (scenario, threshold, for_run_length = false))]
    fn build(&self, scenario: &Scenario, threshold: f64, for_run_length: bool) -> PyResult<Detector> {
        let mut setup = self.inner.clone();
        if setup.design.is_none() {
            if let Some(d) = &scenario.design {
                setup = setup.with_design(d.clone());
            }
        }
        let context = if for_run_length {
            RunContext::RunLength
        } else {
            RunContext::DetectionDelay
        };
        Ok(Detector {
            inner: setup
                .build(&scenario.inner, threshold, context)
                .map_err(to_py_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("TestSetup(name='{}')", self.inner.name)
    }
}

fn setup_with_design(setup: &TestSetup, scenario: &Scenario) -> harness::TestSetup {
    let mut inner = setup.inner.clone();
    if inner.design.is_none() {
        if let Some(d) = &scenario.design {
            inner = inner.with_design(d.clone());
        }
    }
    inner
}

/// Online stopping rule; feed observations one by one.
#[pyclass(module = "qcd_lab")]
struct Detector {
    inner: Box<dyn detectors::Detector>,
}

#[pymethods]
impl Detector {
    /// Consumes one observation; returns `(statistic, alarmed, time)`.
    fn step(&mut self, observation: Vec<f64>) -> (f64, bool, u64) {
        let out = self.inner.step(&observation);
        (out.statistic, out.alarmed, out.time)
    }

    #[getter]
    fn statistic(&self) -> f64 {
        self.inner.statistic()
    }

    #[getter]
    fn time(&self) -> u64 {
        self.inner.time()
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.threshold()
    }
}

/// Mean run length to false alarm: `(arl, se, censor_rate)`.
#[pyfunction]
#[pyo3(signature = (scenario, setup, threshold, reps, max_steps, seed = 0))]
fn estimate_arl(
    scenario: &Scenario,
    setup: &TestSetup,
    threshold: f64,
    reps: u64,
    max_steps: u64,
    seed: u64,
) -> PyResult<(f64, f64, f64)> {
    let inner = setup_with_design(setup, scenario);
    let est = harness::estimate_arl(
        &scenario.inner.without_change(),
        &inner,
        threshold,
        reps,
        max_steps,
        seed,
    )
    .map_err(to_py_err)?;
    Ok((est.arl, est.se, est.censor_rate))
}

/// Mean detection delay with the change present from the first observation:
/// `(add, se, censor_rate)`.
#[pyfunction]
#[pyo3(signature = (scenario, setup, threshold, reps, max_steps, seed = 0))]
fn estimate_add(
    scenario: &Scenario,
    setup: &TestSetup,
    threshold: f64,
    reps: u64,
    max_steps: u64,
    seed: u64,
) -> PyResult<(f64, f64, f64)> {
    let inner = setup_with_design(setup, scenario);
    let est = harness::estimate_add(
        &scenario.inner.with_change_at(1).map_err(to_py_err)?,
        &inner,
        threshold,
        reps,
        max_steps,
        seed,
    )
    .map_err(to_py_err)?;
    Ok((est.add, est.se, est.censor_rate))
}

/// Threshold whose measured run length matches `gamma` within `rel_tol`:
/// `(threshold, evaluations)`.
#[pyfunction]
#[pyo3(signature = (scenario, setup, gamma, rel_tol = 0.05, reps = 300, seed = 0))]
fn calibrate_threshold(
    scenario: &Scenario,
    setup: &TestSetup,
    gamma: f64,
    rel_tol: f64,
    reps: u64,
    seed: u64,
) -> PyResult<(f64, u32)> {
    let inner = setup_with_design(setup, scenario);
    let cal = harness::calibrate_threshold(&scenario.inner, &inner, gamma, rel_tol, reps, seed)
        .map_err(to_py_err)?;
    Ok((cal.threshold, cal.evaluations))
}

/// KL divergence of a mean shift against the zero-mean unit-variance model.
#[pyfunction]
fn kl_divergence(mean_shift: Vec<f64>) -> f64 {
    delay::kl_divergence(&mean_shift)
}

/// Post-change drift of an adaptive statistic: `divergence - mse / 2`.
#[pyfunction]
fn drift(divergence: f64, mse: f64) -> f64 {
    delay::drift(divergence, mse)
}

/// Non-asymptotic delay upper bound of the windowed adaptive test.
#[pyfunction]
fn delay_upper_bound(threshold: f64, window: usize, divergence: f64, mse: f64) -> PyResult<f64> {
    delay::delay_upper_bound(&delay::BoundInputs {
        threshold,
        window,
        divergence,
        mse,
    })
    .map_err(to_py_err)
}

/// Wald-style delay approximation: `window + threshold / drift`.
#[pyfunction]
fn delay_approximation(threshold: f64, window: usize, divergence: f64, mse: f64) -> PyResult<f64> {
    delay::delay_approximation(&delay::BoundInputs {
        threshold,
        window,
        divergence,
        mse,
    })
    .map_err(to_py_err)
}

/// Smallest window giving the plain sample mean non-negative drift.
#[pyfunction]
fn min_window_for_positive_drift(shift_norm_sq: f64, streams: usize) -> PyResult<usize> {
    delay::min_window_for_positive_drift(shift_norm_sq, streams).map_err(to_py_err)
}

/// Window minimizing the delay bound under the sample-mean MSE `streams/w`.
#[pyfunction]
fn bound_minimizing_window_ml(
    threshold: f64,
    divergence: f64,
    streams: usize,
    max_window: usize,
) -> PyResult<usize> {
    delay::bound_minimizing_window(threshold, divergence, max_window, |w| {
        shrinkage::mse_closed_ml(streams, w)
    })
    .map_err(to_py_err)
}

/// Window minimizing the delay bound under a tabulated per-window MSE.
#[pyfunction]
fn bound_minimizing_window_table(
    threshold: f64,
    divergence: f64,
    mse_table: Vec<f64>,
) -> PyResult<usize> {
    if mse_table.is_empty() {
        return Err(PyValueError::new_err("mse_table must be non-empty"));
    }
    delay::bound_minimizing_window(threshold, divergence, mse_table.len(), |w| mse_table[w - 1])
        .map_err(to_py_err)
}

/// Exact MSE of the sample mean: `streams / window`.
#[pyfunction]
fn mse_closed_ml(streams: usize, window: usize) -> f64 {
    shrinkage::mse_closed_ml(streams, window)
}

/// Exact shrinkage MSE when the truth lies in the target:
/// `(target_dim + 2) / window`.
#[pyfunction]
fn mse_closed_js_on_target(target_dim: usize, window: usize) -> f64 {
    shrinkage::mse_closed_js_on_target(target_dim, window)
}

#[pymodule]
fn qcd_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_class::<Estimator>()?;
    m.add_class::<TestSetup>()?;
    m.add_class::<Detector>()?;
    m.add_function(wrap_pyfunction!(estimate_arl, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_add, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(kl_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(drift, m)?)?;
    m.add_function(wrap_pyfunction!(delay_upper_bound, m)?)?;
    m.add_function(wrap_pyfunction!(delay_approximation, m)?)?;
    m.add_function(wrap_pyfunction!(min_window_for_positive_drift, m)?)?;
    m.add_function(wrap_pyfunction!(bound_minimizing_window_ml, m)?)?;
    m.add_function(wrap_pyfunction!(bound_minimizing_window_table, m)?)?;
    m.add_function(wrap_pyfunction!(mse_closed_ml, m)?)?;
    m.add_function(wrap_pyfunction!(mse_closed_js_on_target, m)?)?;
    Ok(())
}
