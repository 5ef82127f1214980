//! JSON experiment configs.
//!
//! ```json
//! { "experiment": "kl-descent", "seed": 7, "output_dir": "out", "plot": true, "params": { ... } }
//! ```
//!
//! Parse errors carry the line and column in the config file and the dotted
//! path of the offending field.

use std::fmt;
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use uqlab::kl_descent::BetaScheme;
use uqlab::shift::{EnvSpec, DEFAULT_TOLERANCE};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    KlDescent,
    PredictInterval,
    BiasVariance,
    Omitted,
    ErrorsX,
    LabelNoise,
    Missing,
    Shift,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::KlDescent,
        Experiment::PredictInterval,
        Experiment::BiasVariance,
        Experiment::Omitted,
        Experiment::ErrorsX,
        Experiment::LabelNoise,
        Experiment::Missing,
        Experiment::Shift,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::KlDescent => "kl-descent",
            Experiment::PredictInterval => "predict-interval",
            Experiment::BiasVariance => "bias-variance",
            Experiment::Omitted => "omitted",
            Experiment::ErrorsX => "errors-x",
            Experiment::LabelNoise => "label-noise",
            Experiment::Missing => "missing",
            Experiment::Shift => "shift",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub plot: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub plot: bool,
    pub params: Params,
    /// The effective config (after overrides, without `output_dir`), as
    /// echoed into the metadata sidecar.
    pub echo: serde_json::Value,
}

#[derive(Debug, Clone)]
pub enum Params {
    KlDescent(KlDescentParams),
    PredictInterval(PredictIntervalParams),
    BiasVariance(BiasVarianceParams),
    Omitted(OmittedParams),
    ErrorsX(ErrorsXParams),
    LabelNoise(LabelNoiseParams),
    Missing(MissingParams),
    Shift(ShiftParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorName {
    Pinv,
    Ridge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KlDescentParams {
    pub n: usize,
    pub p_max: usize,
    pub sigma: f64,
    pub replications: usize,
    /// Defaults to every `p` in `1..=p_max`.
    pub p_grid: Option<Vec<usize>>,
    pub settings: Vec<BetaScheme>,
    pub estimators: Vec<EstimatorName>,
    /// Defaults to `sigma^2 / sqrt(10)`.
    pub ridge_lambda: Option<f64>,
}

impl Default for KlDescentParams {
    fn default() -> Self {
        Self {
            n: 100,
            p_max: 200,
            sigma: 0.1,
            replications: 100,
            p_grid: None,
            settings: vec![BetaScheme::Decreasing, BetaScheme::Constant],
            estimators: vec![EstimatorName::Pinv],
            ridge_lambda: None,
        }
    }
}

/// Simple linear model `y = intercept + slope * x + sigma * eps` with `x`
/// uniform on `x_range`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictIntervalParams {
    pub n: usize,
    pub intercept: f64,
    pub slope: f64,
    pub sigma: f64,
    pub x_range: [f64; 2],
    pub level: f64,
    /// Extra replications for an empirical coverage check; 0 skips it.
    pub coverage_replications: usize,
}

impl Default for PredictIntervalParams {
    fn default() -> Self {
        Self {
            n: 20,
            intercept: 1.0,
            slope: 0.5,
            sigma: 1.0,
            x_range: [0.0, 10.0],
            level: 0.9,
            coverage_replications: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum FitterParam {
    Ols,
    Pinv,
    Zero,
    Ridge {
        #[serde(default)]
        lambda: Option<f64>,
    },
    /// OLS without the listed (0-based) columns.
    Omit { columns: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasVarianceParams {
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub x0: Vec<f64>,
    pub n_train: Vec<usize>,
    pub replications: usize,
    pub fitters: Vec<FitterParam>,
}

impl Default for BiasVarianceParams {
    fn default() -> Self {
        Self {
            beta: vec![1.0, 2.0, -1.0],
            sigma2: 1.0,
            x0: vec![1.0, 0.5, -0.5],
            n_train: vec![20],
            replications: 2000,
            fitters: vec![FitterParam::Ols, FitterParam::Omit { columns: vec![2] }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmittedParams {
    pub x_values: Vec<String>,
    pub z_values: Vec<String>,
    pub pz_given_x: Vec<Vec<f64>>,
    pub mean_y: Vec<Vec<f64>>,
    pub var_y: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeModel {
    pub mu_z: f64,
    pub tau2: f64,
    pub omega2: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorsXParams {
    pub model: MeModel,
    pub x_values: Vec<f64>,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: f64,
    #[serde(default = "default_mc_draws")]
    pub mc_draws: usize,
    #[serde(default = "default_draws")]
    pub slope_draws: usize,
}

fn default_bandwidth() -> f64 {
    0.05
}

fn default_mc_draws() -> usize {
    1_000_000
}

fn default_draws() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelNoiseParams {
    pub classes: Vec<String>,
    pub pz_given_x: Vec<f64>,
    /// Row `z` is `P(Y = . | Z = z)`.
    pub error_matrix: Vec<Vec<f64>>,
    #[serde(default = "default_draws")]
    pub simulate_draws: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EfficiencyParams {
    pub features: usize,
    pub cell_missing_rate: f64,
    pub n: usize,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissingParams {
    pub x_values: Vec<String>,
    pub y_values: Vec<f64>,
    pub joint: Vec<Vec<f64>>,
    pub response: Vec<Vec<f64>>,
    #[serde(default)]
    pub efficiency: Option<EfficiencyParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftParams {
    pub train: EnvSpec,
    pub deploy: EnvSpec,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig<'a> {
    experiment: Experiment,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    #[serde(default)]
    plot: bool,
    #[serde(borrow, default)]
    params: Option<&'a RawValue>,
}

/// 1-based line and column of byte `offset` in `source`.
fn position(source: &str, offset: usize) -> (usize, usize) {
    let before = &source[..offset];
    let line = before.matches('\n').count() + 1;
    let col = offset - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

/// serde_json appends " at line L column C"; we report our own position.
fn strip_position(msg: &str) -> &str {
    msg.find(" at line ").map_or(msg, |i| &msg[..i])
}

fn located(line: usize, column: usize, field: &str, message: &str) -> CliError {
    if field.is_empty() {
        CliError::Config(format!("line {line}, column {column}: {message}"))
    } else {
        CliError::Config(format!("line {line}, column {column}, field `{field}`: {message}"))
    }
}

fn deserialize_located<'de, T: Deserialize<'de>>(text: &'de str, source: &str, prefix: &str) -> Result<T, CliError> {
    // `text` is a slice of `source`, so its offset recovers absolute positions.
    let offset = text.as_ptr() as usize - source.as_ptr() as usize;
    let mut de = serde_json::Deserializer::from_str(text);
    let (base_line, base_col) = position(source, offset);
    let absolute = |e: &serde_json::Error| {
        if e.line() <= 1 {
            (base_line, base_col + e.column().saturating_sub(1))
        } else {
            (base_line + e.line() - 1, e.column())
        }
    };
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let (line, column) = absolute(&inner);
        let field = match (prefix.is_empty(), path.as_str()) {
            (_, ".") => prefix.to_string(),
            (true, p) => p.to_string(),
            (false, p) => format!("{prefix}.{p}"),
        };
        located(line, column, &field, strip_position(&inner.to_string()))
    })?;
    de.end().map_err(|e| {
        let (line, column) = absolute(&e);
        located(line, column, "", strip_position(&e.to_string()))
    })?;
    Ok(value)
}

fn params_of<T: DeserializeOwned + Default>(raw: Option<&RawValue>, source: &str) -> Result<T, CliError> {
    match raw {
        Some(r) => deserialize_located(r.get(), source, "params"),
        None => Ok(T::default()),
    }
}

fn required<T: DeserializeOwned>(raw: Option<&RawValue>, source: &str) -> Result<T, CliError> {
    match raw {
        Some(r) => deserialize_located(r.get(), source, "params"),
        None => Err(CliError::Config("missing field `params`".into())),
    }
}

pub fn parse(source: &str, overrides: &Overrides) -> Result<ExperimentConfig, CliError> {
    let raw: RawConfig = deserialize_located(source, source, "")?;
    let seed = overrides
        .seed
        .or(raw.seed)
        .ok_or_else(|| CliError::Config("missing field `seed` (set it in the config or pass --seed)".into()))?;
    let p = raw.params;
    let params = match raw.experiment {
        Experiment::KlDescent => Params::KlDescent(params_of(p, source)?),
        Experiment::PredictInterval => Params::PredictInterval(params_of(p, source)?),
        Experiment::BiasVariance => Params::BiasVariance(params_of(p, source)?),
        Experiment::Omitted => Params::Omitted(required(p, source)?),
        Experiment::ErrorsX => Params::ErrorsX(required(p, source)?),
        Experiment::LabelNoise => Params::LabelNoise(required(p, source)?),
        Experiment::Missing => Params::Missing(required(p, source)?),
        Experiment::Shift => Params::Shift(required(p, source)?),
    };
    let plot = raw.plot || overrides.plot;
    let echo = serde_json::json!({
        "experiment": raw.experiment,
        "seed": seed,
        "plot": plot,
        "params": params.to_value(),
    });
    Ok(ExperimentConfig {
        experiment: raw.experiment,
        seed,
        output_dir: overrides.out.clone().or(raw.output_dir).unwrap_or_else(|| PathBuf::from(".")),
        plot,
        params,
        echo,
    })
}

impl Params {
    /// Parameters with defaults filled in.
    pub fn to_value(&self) -> serde_json::Value {
        let v = match self {
            Params::KlDescent(p) => serde_json::to_value(p),
            Params::PredictInterval(p) => serde_json::to_value(p),
            Params::BiasVariance(p) => serde_json::to_value(p),
            Params::Omitted(p) => serde_json::to_value(p),
            Params::ErrorsX(p) => serde_json::to_value(p),
            Params::LabelNoise(p) => serde_json::to_value(p),
            Params::Missing(p) => serde_json::to_value(p),
            Params::Shift(p) => serde_json::to_value(p),
        };
        v.expect("params serialize to JSON")
    }
}
