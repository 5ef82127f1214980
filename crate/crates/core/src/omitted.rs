//! Omitted-variable bias and variance mixing over a finite-support `Z`.
//!
//! A model that conditions on `x` alone sees the mixture over `Z | x` of the
//! full-model conditionals. Its mean is the weighted average of the full-model
//! means, and its variance is the average full-model variance plus the
//! average squared bias.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{parallel_samples, std_normal, McEstimate, RngStream};

const PROB_TOL: f64 = 1e-12;

/// `P(Z = z | x)`, `E(Y | x, z)` and `Var(Y | x, z)` tabulated over finite
/// supports. Tables are indexed `[x][z]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteZSpec {
    pub x_values: Vec<String>,
    pub z_values: Vec<String>,
    pub pz_given_x: Vec<Vec<f64>>,
    pub mean_y: Vec<Vec<f64>>,
    pub var_y: Vec<Vec<f64>>,
}

impl DiscreteZSpec {
    /// Spec with a single feature value labelled `"x"`.
    pub fn at_single_x(z_values: &[&str], weights: Vec<f64>, means: Vec<f64>, vars: Vec<f64>) -> Result<Self> {
        let spec = Self {
            x_values: vec!["x".into()],
            z_values: z_values.iter().map(|s| s.to_string()).collect(),
            pz_given_x: vec![weights],
            mean_y: vec![means],
            var_y: vec![vars],
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let (nx, nz) = (self.x_values.len(), self.z_values.len());
        if nx == 0 || nz == 0 {
            return Err(Error::invalid("x and z supports must be nonempty"));
        }
        for (name, table) in [("pz_given_x", &self.pz_given_x), ("mean_y", &self.mean_y), ("var_y", &self.var_y)] {
            if table.len() != nx || table.iter().any(|r| r.len() != nz) {
                return Err(Error::invalid(format!("{name} must be {nx} x {nz}")));
            }
            if table.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("{name} has non-finite entries")));
            }
        }
        for (i, row) in self.pz_given_x.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&w| w < 0.0) || (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::invalid(format!(
                    "P(Z | x = {}) is not a probability vector (sum {sum})",
                    self.x_values[i]
                )));
            }
        }
        if let Some(i) = self.var_y.iter().position(|r| r.iter().any(|&v| v < 0.0)) {
            return Err(Error::invalid(format!("negative Var(Y | x = {}, z)", self.x_values[i])));
        }
        Ok(())
    }

    fn x_index(&self, x: &str) -> Result<usize> {
        self.x_values
            .iter()
            .position(|v| v == x)
            .ok_or_else(|| Error::Unknown { kind: "x value", value: x.into() })
    }

    fn z_index(&self, z: &str) -> Result<usize> {
        self.z_values
            .iter()
            .position(|v| v == z)
            .ok_or_else(|| Error::Unknown { kind: "z value", value: z.into() })
    }
}

/// `E(Y | x) = sum_z E(Y | x, z) P(z | x)`.
pub fn marginal_mean(spec: &DiscreteZSpec, x: &str) -> Result<f64> {
    let i = spec.x_index(x)?;
    Ok(weighted_mean(&spec.pz_given_x[i], &spec.mean_y[i]))
}

fn weighted_mean(w: &[f64], v: &[f64]) -> f64 {
    w.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// `E(Y | x, z) - E(Y | x)`.
pub fn ovb_bias(spec: &DiscreteZSpec, x: &str, z: &str) -> Result<f64> {
    let i = spec.x_index(x)?;
    let k = spec.z_index(z)?;
    Ok(spec.mean_y[i][k] - marginal_mean(spec, x)?)
}

/// How the full-model variance at `z` compares with the marginal variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceClass {
    /// The full model is less variable than the marginal model.
    Under,
    Over,
    Equal,
}

impl VarianceClass {
    pub fn label(&self) -> &'static str {
        match self {
            VarianceClass::Under => "under",
            VarianceClass::Over => "over",
            VarianceClass::Equal => "equal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZTerm {
    pub z: String,
    pub weight: f64,
    pub cond_mean: f64,
    pub cond_var: f64,
    pub bias: f64,
    pub classification: VarianceClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvbReport {
    pub x: String,
    pub marginal_mean: f64,
    pub marginal_var: f64,
    /// `E_{Z|x}[Var(Y | x, Z)]`.
    pub mean_cond_var: f64,
    /// `E_{Z|x}[bias(x, Z)^2]`.
    pub mean_sq_bias: f64,
    pub per_z: Vec<ZTerm>,
}

/// Law of total variance for the model that omits `Z`.
pub fn marginal_variance(spec: &DiscreteZSpec, x: &str) -> Result<OvbReport> {
    let i = spec.x_index(x)?;
    let w = &spec.pz_given_x[i];
    let mean = weighted_mean(w, &spec.mean_y[i]);
    let mean_cond_var = weighted_mean(w, &spec.var_y[i]);
    let biases: Vec<f64> = spec.mean_y[i].iter().map(|m| m - mean).collect();
    let mean_sq_bias: f64 = w.iter().zip(&biases).map(|(a, b)| a * b * b).sum();
    let marginal_var = mean_cond_var + mean_sq_bias;
    let tol = 1e-12 * marginal_var.abs().max(1.0);
    let per_z = spec
        .z_values
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let cond_var = spec.var_y[i][k];
            let classification = if (cond_var - marginal_var).abs() <= tol {
                VarianceClass::Equal
            } else if cond_var < marginal_var {
                VarianceClass::Under
            } else {
                VarianceClass::Over
            };
            ZTerm {
                z: z.clone(),
                weight: w[k],
                cond_mean: spec.mean_y[i][k],
                cond_var,
                bias: biases[k],
                classification,
            }
        })
        .collect();
    Ok(OvbReport {
        x: x.into(),
        marginal_mean: mean,
        marginal_var,
        mean_cond_var,
        mean_sq_bias,
        per_z,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryOvb {
    pub variance_heterogeneous: bool,
    pub biased: bool,
    /// Bias without variance heterogeneity: `p1 = 1 - p2` with `p1 != p2`.
    pub exception_case: bool,
}

/// Binary `Y` with success probabilities `p1`, `p2` at two values of `Z`.
///
/// `p(1-p)` is symmetric about 1/2, so equal variances at distinct means
/// happen exactly when `p1 = 1 - p2`.
pub fn binary_ovb_classifier(p1: f64, p2: f64) -> Result<BinaryOvb> {
    for p in [p1, p2] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("success probability {p} outside [0, 1]")));
        }
    }
    let eq = |a: f64, b: f64| (a - b).abs() <= PROB_TOL;
    let biased = !eq(p1, p2);
    let variance_heterogeneous = !eq(p1 * (1.0 - p1), p2 * (1.0 - p2));
    Ok(BinaryOvb {
        variance_heterogeneous,
        biased,
        exception_case: biased && eq(p1, 1.0 - p2),
    })
}

/// Linear conditional means `beta0 + beta_x x + beta_z z` for binary `Z`
/// with `P(Z = 1 | x) = logistic(a + b x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimpsonModel {
    pub beta0: f64,
    pub beta_x: f64,
    pub beta_z: f64,
    pub a: f64,
    pub b: f64,
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

impl SimpsonModel {
    pub fn pz1(&self, x: f64) -> f64 {
        logistic(self.a + self.b * x)
    }

    pub fn pz1_derivative(&self, x: f64) -> f64 {
        let s = self.pz1(x);
        self.b * s * (1.0 - s)
    }

    pub fn marginal_mean(&self, x: f64) -> f64 {
        self.beta0 + self.beta_x * x + self.beta_z * self.pz1(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalEffect {
    /// `sum_z dE(Y|x,z)/dx * P(z|x)`.
    pub term_effect: f64,
    /// `sum_z E(Y|x,z) * dP(z|x)/dx`.
    pub term_distribution: f64,
    pub full_model_effect: f64,
}

pub fn marginal_effect_terms(model: &SimpsonModel, x: f64) -> MarginalEffect {
    let term_effect = model.beta_x;
    // dP(Z=0|x)/dx = -dP(Z=1|x)/dx, so only the beta_z part survives.
    let d1 = model.pz1_derivative(x);
    let term_distribution = (model.beta0 + model.beta_x * x) * -d1 + (model.beta0 + model.beta_x * x + model.beta_z) * d1;
    MarginalEffect {
        term_effect,
        term_distribution,
        full_model_effect: term_effect + term_distribution,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalMoments {
    pub mean: McEstimate,
    /// Mean of `n/(n-1) (y - ybar)^2`, an unbiased variance estimate.
    pub variance: McEstimate,
}

/// Sample `z ~ P(Z | x)` then `y ~ N(E(Y|x,z), Var(Y|x,z))`.
pub fn mc_marginal_moments(spec: &DiscreteZSpec, x: &str, n_draws: usize, stream: RngStream) -> Result<MarginalMoments> {
    if n_draws < 2 {
        return Err(Error::invalid("need at least 2 draws"));
    }
    let i = spec.x_index(x)?;
    let w = &spec.pz_given_x[i];
    let (means, sds): (Vec<f64>, Vec<f64>) = (0..w.len()).map(|k| (spec.mean_y[i][k], spec.var_y[i][k].sqrt())).unzip();
    let ys = parallel_samples(stream, n_draws, |rng| {
        let k = sample_index(w, rand::Rng::random::<f64>(rng));
        means[k] + sds[k] * std_normal(rng)
    });
    moments_of(&ys)
}

pub(crate) fn moments_of(ys: &[f64]) -> Result<MarginalMoments> {
    let mean = McEstimate::from_samples(ys)?;
    let scale = ys.len() as f64 / (ys.len() - 1) as f64;
    let dev: Vec<f64> = ys.iter().map(|y| scale * (y - mean.mean).powi(2)).collect();
    Ok(MarginalMoments {
        mean,
        variance: McEstimate::from_samples(&dev)?,
    })
}

/// Inverse-CDF pick from a probability vector given `u ~ U[0, 1)`.
pub(crate) fn sample_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = k;
        if u < acc {
            return k;
        }
    }
    last
}
