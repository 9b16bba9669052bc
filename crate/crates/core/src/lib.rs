//! Quickest detection of a mean shift across parallel Gaussian data streams.
//!
//! The crate provides:
//!
//! - [`model`]: post-change mean scenarios (dense, sparse, spatial) and a
//!   deterministic multivariate Gaussian observation generator.
//! - [`shrinkage`]: point estimators of the post-change mean (maximum
//!   likelihood, James-Stein variants, least-squares projection) together
//!   with closed-form and Monte Carlo mean-squared-error evaluation.
//! - [`detectors`]: online stopping rules: CuSum with known shift,
//!   window-limited adaptive CuSum (single and parallel multi-window),
//!   window-limited GLR, and the running likelihood-ratio-sum test with
//!   plug-in estimates.
//! - [`delay`]: closed-form run-length quantities: KL divergence,
//!   estimator-degraded drift, a non-asymptotic delay upper bound, a
//!   Wald-style delay approximation, and window-size selection.
//! - [`harness`]: Monte Carlo engine for average-run-length and detection
//!   delay estimation, threshold calibration, and the experiment drivers
//!   behind the shipped CSV reports.
//! - [`config`]: declarative TOML experiment configuration shared by the
//!   CLI and the harness.

#![forbid(unsafe_code)]

pub mod config;
pub mod delay;
pub mod detectors;
pub mod error;
pub mod harness;
pub mod model;
pub mod shrinkage;

mod vecops;

pub use error::{Error, Result};
