//! Declarative experiment configuration.
//!
//! Config files are TOML with flat key-value sections. Unknown keys anywhere
//! are hard errors naming the offending key, and keys that do not belong to
//! the selected kind are rejected too, so typos never silently fall back to
//! defaults.
//!
//! Two file shapes exist:
//!
//! - run configs with `[scenario]`, `[detector]`, `[estimator]`, `[run]`
//!   sections, used by the `arl`, `add`, `calibrate`, and `trace` commands;
//! - experiment configs with a single `[experiment]` section whose `kind`
//!   selects one of the report drivers.

use serde::{Deserialize, Serialize};

use crate::detectors::DetectorSpec;
use crate::error::{Error, Result};
use crate::harness::experiments::{
    ArlAddConfig, BoundEvalConfig, KSweepConfig, MseCurvesConfig, SparseSweepConfig, SpatialConfig,
};
use crate::harness::TestSetup;
use crate::model::{
    scenario_dense, scenario_sparse, scenario_spatial, ChangeTime, Scenario, SpatialModel,
};
use crate::shrinkage::EstimatorSpec;

fn toml_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

// ---------------------------------------------------------------------------
// scenario section
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKindSpec {
    Dense,
    Sparse,
    Spatial,
    Custom,
}

/// Change time in configs: a 1-based index or the string `"never"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChangeAtSpec {
    At(u64),
    Keyword(String),
}

impl ChangeAtSpec {
    pub fn resolve(&self) -> Result<ChangeTime> {
        match self {
            ChangeAtSpec::At(t) => {
                if *t == 0 {
                    Err(Error::Config("`change_at` must be >= 1".into()))
                } else {
                    Ok(ChangeTime::At(*t))
                }
            }
            ChangeAtSpec::Keyword(w) if w == "never" => Ok(ChangeTime::Never),
            ChangeAtSpec::Keyword(w) => Err(Error::Config(format!(
                "`change_at` must be an integer or \"never\", got \"{w}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKindSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub streams: Option<usize>,
    /// Number of shifted streams (`sparse` only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affected: Option<usize>,
    /// Explicit shift vector (`custom` only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub change_at: Option<ChangeAtSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Nominal source positions (`spatial` only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<Vec<f64>>,
    /// True source displacement (`spatial` only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub displacement: Option<f64>,
}

impl ScenarioSpec {
    /// Builds the scenario and, for spatial configs, the design matrix.
    pub fn build(&self) -> Result<(Scenario, Option<Vec<Vec<f64>>>)> {
        let forbid = |field: &str, absent: bool| -> Result<()> {
            if absent {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "`{field}` is not a parameter of scenario kind `{}`",
                    match self.kind {
                        ScenarioKindSpec::Dense => "dense",
                        ScenarioKindSpec::Sparse => "sparse",
                        ScenarioKindSpec::Spatial => "spatial",
                        ScenarioKindSpec::Custom => "custom",
                    }
                )))
            }
        };
        let need_streams = || {
            self.streams
                .ok_or_else(|| Error::Config("scenario needs `streams`".into()))
        };
        let (mut scenario, design) = match self.kind {
            ScenarioKindSpec::Dense => {
                forbid("affected", self.affected.is_none())?;
                forbid("theta", self.theta.is_none())?;
                forbid("sources", self.sources.is_none())?;
                forbid("displacement", self.displacement.is_none())?;
                (scenario_dense(need_streams()?)?, None)
            }
            ScenarioKindSpec::Sparse => {
                forbid("theta", self.theta.is_none())?;
                forbid("sources", self.sources.is_none())?;
                forbid("displacement", self.displacement.is_none())?;
                let affected = self
                    .affected
                    .ok_or_else(|| Error::Config("sparse scenario needs `affected`".into()))?;
                (scenario_sparse(need_streams()?, affected)?, None)
            }
            ScenarioKindSpec::Spatial => {
                forbid("affected", self.affected.is_none())?;
                forbid("theta", self.theta.is_none())?;
                let model = SpatialModel::uniform_line(
                    need_streams()?,
                    self.sources.clone().unwrap_or_else(|| vec![20.0, 80.0]),
                    self.displacement.unwrap_or(0.0),
                )?;
                let (scenario, design) = scenario_spatial(&model)?;
                (scenario, Some(design))
            }
            ScenarioKindSpec::Custom => {
                forbid("affected", self.affected.is_none())?;
                forbid("sources", self.sources.is_none())?;
                forbid("displacement", self.displacement.is_none())?;
                let theta = self
                    .theta
                    .clone()
                    .ok_or_else(|| Error::Config("custom scenario needs `theta`".into()))?;
                if let Some(k) = self.streams {
                    if k != theta.len() {
                        return Err(Error::Config(format!(
                            "`streams` = {k} does not match theta length {}",
                            theta.len()
                        )));
                    }
                }
                let label = self.label.clone().unwrap_or_else(|| "custom".into());
                (Scenario::new(theta, ChangeTime::At(1), label)?, None)
            }
        };
        if let Some(change) = &self.change_at {
            scenario = match change.resolve()? {
                ChangeTime::Never => scenario.without_change(),
                ChangeTime::At(t) => scenario.with_change_at(t)?,
            };
        }
        Ok((scenario, design))
    }
}

// ---------------------------------------------------------------------------
// run configs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub replications: Option<u64>,
    pub max_steps: Option<u64>,
    /// Fixed stopping threshold in nats.
    pub threshold: Option<f64>,
    /// Run-length target; without `calibrate` the threshold is `log(gamma)`.
    pub gamma: Option<f64>,
    pub calibrate: bool,
    pub rel_tol: f64,
    pub calibration_replications: Option<u64>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            replications: None,
            max_steps: None,
            threshold: None,
            gamma: None,
            calibrate: false,
            rel_tol: 0.05,
            calibration_replications: None,
        }
    }
}

/// Threshold rule resolved from a run section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdRule {
    Fixed(f64),
    LogGamma(f64),
    Calibrated { gamma: f64, rel_tol: f64 },
}

impl RunSection {
    pub fn threshold_rule(&self) -> Result<ThresholdRule> {
        match (self.threshold, self.gamma, self.calibrate) {
            (Some(_), Some(_), _) => Err(Error::Config(
                "set either `threshold` or `gamma`, not both".into(),
            )),
            (Some(b), None, false) => Ok(ThresholdRule::Fixed(b)),
            (Some(_), None, true) => Err(Error::Config(
                "`calibrate` needs `gamma`, not a fixed `threshold`".into(),
            )),
            (None, Some(g), false) => Ok(ThresholdRule::LogGamma(g)),
            (None, Some(g), true) => Ok(ThresholdRule::Calibrated {
                gamma: g,
                rel_tol: self.rel_tol,
            }),
            (None, None, _) => Err(Error::Config(
                "run section needs `threshold` or `gamma`".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub detector: DetectorSpec,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub run: RunSection,
}

/// A run config with every piece built and validated.
#[derive(Debug)]
pub struct ResolvedRun {
    pub scenario: Scenario,
    pub setup: TestSetup,
    pub rule: ThresholdRule,
    pub run: RunSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(toml_err)?;
        Ok(cfg)
    }

    pub fn resolve(&self) -> Result<ResolvedRun> {
        let (scenario, design) = self.scenario.build()?;
        self.detector.validate()?;
        // building the estimator validates the stream-count gates up front
        let _ = self
            .estimator
            .build(scenario.streams(), design.as_deref())
            .map_err(|e| Error::Config(e.to_string()))?;
        let mut setup = TestSetup::new(
            format!("{:?}", self.detector.kind).to_lowercase(),
            self.detector.clone(),
            self.estimator.clone(),
        );
        if let Some(d) = design {
            setup = setup.with_design(d);
        }
        let rule = self.run.threshold_rule()?;
        Ok(ResolvedRun {
            scenario,
            setup,
            rule,
            run: self.run.clone(),
        })
    }
}

// ---------------------------------------------------------------------------
// experiment configs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    MseCurves,
    BoundEval,
    ArlAdd,
    KSweep,
    SparseSweep,
    Spatial,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::MseCurves => "mse-curves",
            ExperimentKind::BoundEval => "bound-eval",
            ExperimentKind::ArlAdd => "arl-add",
            ExperimentKind::KSweep => "k-sweep",
            ExperimentKind::SparseSweep => "sparse-sweep",
            ExperimentKind::Spatial => "spatial",
        }
    }
}

#[derive(Debug, Clone)]
pub enum ExperimentConfig {
    MseCurves(MseCurvesConfig),
    BoundEval(BoundEvalConfig),
    ArlAdd(ArlAddConfig),
    KSweep(KSweepConfig),
    SparseSweep(SparseSweepConfig),
    Spatial(SpatialConfig),
}

impl ExperimentConfig {
    pub fn kind(&self) -> ExperimentKind {
        match self {
            ExperimentConfig::MseCurves(_) => ExperimentKind::MseCurves,
            ExperimentConfig::BoundEval(_) => ExperimentKind::BoundEval,
            ExperimentConfig::ArlAdd(_) => ExperimentKind::ArlAdd,
            ExperimentConfig::KSweep(_) => ExperimentKind::KSweep,
            ExperimentConfig::SparseSweep(_) => ExperimentKind::SparseSweep,
            ExperimentConfig::Spatial(_) => ExperimentKind::Spatial,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentDoc {
    pub config: ExperimentConfig,
    /// Output CSV path from the config, overridable on the command line.
    pub out: Option<String>,
}

/// Parses an experiment config, dispatching on `experiment.kind`.
pub fn parse_experiment(text: &str) -> Result<ExperimentDoc> {
    let table: toml::Table = toml::from_str(text).map_err(toml_err)?;
    parse_experiment_table(table)
}

pub fn parse_experiment_table(table: toml::Table) -> Result<ExperimentDoc> {
    for key in table.keys() {
        if key != "experiment" {
            return Err(Error::Config(format!(
                "unknown section `{key}`; experiment configs have a single [experiment] section"
            )));
        }
    }
    let section = table
        .get("experiment")
        .ok_or_else(|| Error::Config("missing [experiment] section".into()))?
        .as_table()
        .ok_or_else(|| Error::Config("[experiment] must be a table".into()))?
        .clone();

    let mut section = section;
    let kind = section
        .remove("kind")
        .ok_or_else(|| Error::Config("[experiment] needs `kind`".into()))?;
    let kind = kind
        .as_str()
        .ok_or_else(|| Error::Config("`kind` must be a string".into()))?
        .to_string();
    let out = match section.remove("out") {
        None => None,
        Some(v) => Some(
            v.as_str()
                .ok_or_else(|| Error::Config("`out` must be a string".into()))?
                .to_string(),
        ),
    };
    let rest = toml::Value::Table(section);
    let config = match kind.as_str() {
        "mse-curves" => ExperimentConfig::MseCurves(rest.try_into().map_err(toml_err)?),
        "bound-eval" => ExperimentConfig::BoundEval(rest.try_into().map_err(toml_err)?),
        "arl-add" => ExperimentConfig::ArlAdd(rest.try_into().map_err(toml_err)?),
        "k-sweep" => ExperimentConfig::KSweep(rest.try_into().map_err(toml_err)?),
        "sparse-sweep" => ExperimentConfig::SparseSweep(rest.try_into().map_err(toml_err)?),
        "spatial" => ExperimentConfig::Spatial(rest.try_into().map_err(toml_err)?),
        other => {
            return Err(Error::Config(format!(
                "unknown experiment kind `{other}`; expected one of mse-curves, bound-eval, \
                 arl-add, k-sweep, sparse-sweep, spatial"
            )))
        }
    };
    Ok(ExperimentDoc { config, out })
}

/// Applies a `--set path=value` override to a parsed TOML document.
///
/// The path is dot-separated (`experiment.gamma`); the value is parsed as a
/// TOML literal, falling back to a bare string. Downstream deserialization
/// still rejects keys that do not exist.
pub fn apply_override(doc: &mut toml::Table, path: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override path `{path}`")));
    }
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        table = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override path `{path}` crosses a non-table")))?;
    }
    let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("x = {raw}")) {
        Ok(mut t) => t.remove("x").expect("key written above"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    table.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}
