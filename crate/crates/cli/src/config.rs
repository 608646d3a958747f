//! Experiment configuration: parsing, hashing and validation.

use std::path::{Path, PathBuf};

use ergolab::estimators::{GammaSettings, QuadSettings};
use ergolab::expsum::{WeightDist, WeylBoundMode, WeylPhase};
use ergolab::rates::AChoice;
use ergolab::{ExponentInputs, FourierObservable, StatePoint, SystemSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Twisted,
    Sparse,
    Weights,
    Alpha,
    Beta,
    AuditVprop1,
    ExpsumOracle,
    RatesCalc,
    RatesFit,
}

impl Experiment {
    pub fn label(self) -> &'static str {
        match self {
            Experiment::Twisted => "twisted",
            Experiment::Sparse => "sparse",
            Experiment::Weights => "weights",
            Experiment::Alpha => "alpha",
            Experiment::Beta => "beta",
            Experiment::AuditVprop1 => "audit-vprop1",
            Experiment::ExpsumOracle => "expsum-oracle",
            Experiment::RatesCalc => "rates-calc",
            Experiment::RatesFit => "rates-fit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointSpec {
    Coords(Vec<f64>),
    State(StatePoint),
    Keyword(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub system: Option<SystemSpec>,
    #[serde(default)]
    pub observable: Option<FourierObservable>,
    #[serde(default)]
    pub observables: Option<Vec<FourierObservable>>,
    #[serde(default)]
    pub point: Option<PointSpec>,
    #[serde(default)]
    pub grid: Vec<f64>,
    #[serde(default)]
    pub params: Value,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// Parsed config together with its hash.
pub struct Loaded {
    pub config: ExperimentConfig,
    pub hash: String,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

pub fn load(path: &Path, seed_override: Option<u64>) -> CliResult<Loaded> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse(&text, seed_override)
}

pub fn parse(text: &str, seed_override: Option<u64>) -> CliResult<Loaded> {
    let mut raw: Value = serde_json::from_str(text).map_err(|e| invalid(format!("config is not JSON: {e}")))?;
    let obj = raw.as_object_mut().ok_or_else(|| invalid("config must be a JSON object"))?;
    if let Some(s) = seed_override {
        obj.insert("seed".into(), Value::from(s));
    }
    let config: ExperimentConfig = serde_json::from_value(raw.clone()).map_err(|e| invalid(e.to_string()))?;
    // the hash ignores where the output goes
    if let Some(o) = raw.as_object_mut() {
        o.remove("output");
        o.insert("seed".into(), Value::from(config.seed));
    }
    let canonical = serde_json::to_string(&raw).expect("JSON value serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    let hash: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    Ok(Loaded { config, hash })
}

/// Parses `params` into a typed struct; an absent map means all defaults.
pub fn params<T: for<'de> Deserialize<'de>>(v: &Value) -> CliResult<T> {
    let v = if v.is_null() { Value::Object(Default::default()) } else { v.clone() };
    serde_json::from_value(v).map_err(|e| invalid(format!("params: {e}")))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct TwistedParams {
    /// Fixed twist; when absent the sup over twists is reported.
    pub a: Option<Vec<f64>>,
    #[serde(default)]
    pub gamma: GammaSettings<f64>,
    #[serde(default)]
    pub quad: QuadSettings<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct BetaParams {
    #[serde(default = "one")]
    pub samples: usize,
    #[serde(default)]
    pub quad: QuadSettings<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum AlphaMode {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct AlphaParams {
    #[serde(default = "exact")]
    pub mode: AlphaMode,
    #[serde(default = "mc_samples")]
    pub samples: usize,
    #[serde(default)]
    pub quad: QuadSettings<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct SparseParams {
    pub eps: Vec<f64>,
    pub weights: Option<WeightDist>,
    /// Kernel width for the smoothing audit (flows only).
    pub delta: Option<f64>,
    /// Twist used by the smoothing audit.
    pub a: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct WeightsParams {
    pub dist: WeightDist,
    pub delta: f64,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default = "four")]
    pub oversample: usize,
    #[serde(default = "one")]
    pub replicas: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct VpropParams {
    /// Explicit `H` per grid point; otherwise `round(T^hExponent)`.
    pub h: Option<Vec<i64>>,
    #[serde(default = "third")]
    pub h_exponent: f64,
    #[serde(default = "one")]
    pub points: usize,
    #[serde(default = "pairs")]
    pub pairs: usize,
    #[serde(default)]
    pub gamma: GammaSettings<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct ExpsumParams {
    pub phase: WeylPhase<f64>,
    pub bound: WeylBoundMode<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RatesCalcParams {
    #[serde(flatten)]
    pub inputs: ExponentInputs,
    pub a: Option<AChoiceSpec>,
}

/// `"optimize"` or explicit exponents.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum AChoiceSpec {
    Given(Vec<f64>),
    Keyword(String),
}

impl AChoiceSpec {
    pub fn resolve(&self) -> CliResult<AChoice<f64>> {
        match self {
            AChoiceSpec::Given(a) => Ok(AChoice::Given(a.clone())),
            AChoiceSpec::Keyword(k) if k == "optimize" => Ok(AChoice::Optimize),
            AChoiceSpec::Keyword(k) => Err(invalid(format!("a must be a list or \"optimize\", got {k:?}"))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct RatesFitParams {
    pub inputs: Vec<PathBuf>,
    pub statistic: Option<String>,
}

fn one() -> usize {
    1
}
fn four() -> usize {
    4
}
fn pairs() -> usize {
    64
}
fn mc_samples() -> usize {
    100_000
}
fn third() -> f64 {
    1.0 / 3.0
}
fn exact() -> AlphaMode {
    AlphaMode::Exact
}

impl ExperimentConfig {
    pub fn system(&self) -> CliResult<&SystemSpec> {
        let s = self.system.as_ref().ok_or_else(|| invalid(format!("{} needs a system", self.experiment.label())))?;
        s.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(s)
    }

    /// The observables, `observable` first.
    pub fn observable_list(&self) -> Vec<FourierObservable> {
        let mut v: Vec<FourierObservable> = self.observable.iter().cloned().collect();
        if let Some(more) = &self.observables {
            v.extend(more.iter().cloned());
        }
        v
    }

    pub fn observable(&self, sys: &SystemSpec) -> CliResult<FourierObservable> {
        let f = self
            .observable_list()
            .into_iter()
            .next()
            .ok_or_else(|| invalid(format!("{} needs an observable", self.experiment.label())))?;
        check_observable(&f, sys)?;
        Ok(f)
    }

    /// Grid values, strictly increasing and positive; integral when
    /// `integral` is set.
    pub fn grid(&self, integral: bool) -> CliResult<Vec<f64>> {
        if self.grid.is_empty() {
            return Err(invalid("grid is empty"));
        }
        for w in self.grid.windows(2) {
            if !(w[1] > w[0]) {
                return Err(invalid("grid must be strictly increasing"));
            }
        }
        for &t in &self.grid {
            if !(t > 0.0) || !t.is_finite() {
                return Err(invalid(format!("grid values must be positive, got {t}")));
            }
            if integral && t.fract() != 0.0 {
                return Err(invalid(format!("grid value {t} must be an integer here")));
            }
        }
        Ok(self.grid.clone())
    }
}

pub fn check_observable(f: &FourierObservable, sys: &SystemSpec) -> CliResult<()> {
    if !f.is_zero() || f.dim() != 0 {
        f.check_dim(sys.phase_dim()).map_err(|e| invalid(format!("observable: {e}")))?;
    }
    Ok(())
}
