//! Missing responses over finite `(X, Y)` supports.
//!
//! `X` is always observed and `Y` is observed when the response indicator
//! `R = 1`. Complete-case analysis conditions on `R = 1`, which reweights the
//! population conditional by the bias factor `P(R=1|y,x) / P(R=1|x)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{replicate, McEstimate, RngStream};

const PROB_TOL: f64 = 1e-12;

/// Tables are indexed `[x][y]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingSpec {
    pub x_values: Vec<String>,
    pub y_values: Vec<f64>,
    /// `P(X = x, Y = y)`.
    pub joint: Vec<Vec<f64>>,
    /// `P(R = 1 | y, x)`.
    pub response: Vec<Vec<f64>>,
}

impl MissingSpec {
    pub fn validate(&self) -> Result<()> {
        let (nx, ny) = (self.x_values.len(), self.y_values.len());
        if nx == 0 || ny == 0 {
            return Err(Error::invalid("x and y supports must be nonempty"));
        }
        if self.y_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("y values must be finite"));
        }
        for (name, t) in [("joint", &self.joint), ("response", &self.response)] {
            if t.len() != nx || t.iter().any(|r| r.len() != ny) {
                return Err(Error::invalid(format!("{name} must be {nx} x {ny}")));
            }
        }
        if self.joint.iter().flatten().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("joint has negative or non-finite entries"));
        }
        let total: f64 = self.joint.iter().flatten().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::invalid(format!("joint sums to {total}, not 1")));
        }
        for (i, row) in self.response.iter().enumerate() {
            if let Some(k) = row.iter().position(|r| !(0.0..=1.0).contains(r)) {
                return Err(Error::invalid(format!(
                    "response P(R=1 | y = {}, x = {}) = {} is not a probability",
                    self.y_values[k], self.x_values[i], row[k]
                )));
            }
            let px: f64 = self.joint[i].iter().sum();
            if px > 0.0 && self.response_rate_at(i) <= 0.0 {
                return Err(Error::invalid(format!(
                    "P(R=1 | x = {}) is 0, so complete cases are undefined there",
                    self.x_values[i]
                )));
            }
        }
        Ok(())
    }

    fn x_index(&self, x: &str) -> Result<usize> {
        self.x_values
            .iter()
            .position(|v| v == x)
            .ok_or_else(|| Error::Unknown { kind: "x value", value: x.into() })
    }

    fn response_rate_at(&self, i: usize) -> f64 {
        let mut observed = self.response[i].iter().zip(&self.joint[i]).filter(|(_, p)| **p > 0.0).map(|(r, _)| *r);
        if let Some(first) = observed.next() {
            // A response rate constant in y is returned as is, so MCAR bias factors are exactly 1.
            if observed.all(|r| r == first) {
                return first;
            }
        }
        let px: f64 = self.joint[i].iter().sum();
        self.joint[i].iter().zip(&self.response[i]).map(|(p, r)| p * r).sum::<f64>() / px
    }

    /// `P(R = 1 | x)`.
    pub fn response_rate(&self, x: &str) -> Result<f64> {
        let i = self.x_index(x)?;
        population_at(self, i)?;
        Ok(self.response_rate_at(i))
    }
}

fn population_at(spec: &MissingSpec, i: usize) -> Result<Vec<f64>> {
    let px: f64 = spec.joint[i].iter().sum();
    if px <= 0.0 {
        return Err(Error::invalid(format!("P(x = {}) = 0", spec.x_values[i])));
    }
    Ok(spec.joint[i].iter().map(|p| p / px).collect())
}

/// `P(Y = y | x)`.
pub fn population_conditional(spec: &MissingSpec, x: &str) -> Result<Vec<f64>> {
    population_at(spec, spec.x_index(x)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompleteCase {
    /// `P(Y = y | x, R = 1)`.
    pub probs: Vec<f64>,
    pub bias_factor: Vec<f64>,
}

pub fn complete_case_conditional(spec: &MissingSpec, x: &str) -> Result<CompleteCase> {
    let i = spec.x_index(x)?;
    let pop = population_at(spec, i)?;
    let rate = spec.response_rate_at(i);
    if !(rate > 0.0) {
        return Err(Error::invalid(format!("P(R=1 | x = {x}) = 0")));
    }
    let bias_factor: Vec<f64> = spec.response[i].iter().map(|r| r / rate).collect();
    let probs = pop.iter().zip(&bias_factor).map(|(p, b)| b * p).collect();
    Ok(CompleteCase { probs, bias_factor })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MechanismClass {
    Mcar,
    Mar,
    Mnar,
}

impl MechanismClass {
    pub fn label(&self) -> &'static str {
        match self {
            MechanismClass::Mcar => "MCAR",
            MechanismClass::Mar => "MAR",
            MechanismClass::Mnar => "MNAR",
        }
    }
}

/// MCAR: response constant over all cells with positive mass. MAR: constant
/// in `y` within each `x`. MNAR otherwise.
pub fn classify_mechanism(spec: &MissingSpec) -> MechanismClass {
    let cells = |i: usize| {
        spec.response[i]
            .iter()
            .zip(&spec.joint[i])
            .filter(|(_, p)| **p > 0.0)
            .map(|(r, _)| *r)
            .collect::<Vec<f64>>()
    };
    let constant = |v: &[f64]| v.iter().all(|r| (r - v[0]).abs() <= PROB_TOL);
    let mut all = Vec::new();
    let mut within_x = true;
    for i in 0..spec.x_values.len() {
        let c = cells(i);
        if !c.is_empty() && !constant(&c) {
            within_x = false;
        }
        all.extend(c);
    }
    if all.is_empty() || constant(&all) {
        MechanismClass::Mcar
    } else if within_x {
        MechanismClass::Mar
    } else {
        MechanismClass::Mnar
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub r: u8,
    /// `P(R = r | x)`.
    pub weight: f64,
    pub cond_mean: f64,
    pub cond_var: f64,
    /// `E(Y | x, r) - E(Y | x)`.
    pub bias: f64,
    /// `(1 - P(R = r | x)) (E(Y | x, r) - E(Y | x, R != r))`.
    pub factored_bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceDecomposition {
    pub population_mean: f64,
    pub population_var: f64,
    /// `sum_r P(r|x) [Var(Y|x,r) + bias(x,r)^2]`.
    pub reconstructed_var: f64,
    /// Respondents first; strata with zero weight are omitted.
    pub per_stratum: Vec<Stratum>,
}

fn mean_var(probs: &[f64], ys: &[f64]) -> (f64, f64) {
    let m: f64 = probs.iter().zip(ys).map(|(p, y)| p * y).sum();
    let v: f64 = probs.iter().zip(ys).map(|(p, y)| p * (y - m) * (y - m)).sum();
    (m, v)
}

pub fn variance_decomposition(spec: &MissingSpec, x: &str) -> Result<VarianceDecomposition> {
    let i = spec.x_index(x)?;
    let pop = population_at(spec, i)?;
    let ys = &spec.y_values;
    let (population_mean, population_var) = mean_var(&pop, ys);
    // Unnormalized P(y, r | x) for r = 1 and r = 0.
    let resp: Vec<f64> = pop.iter().zip(&spec.response[i]).map(|(p, r)| p * r).collect();
    let nonresp: Vec<f64> = pop.iter().zip(&spec.response[i]).map(|(p, r)| p * (1.0 - r)).collect();
    let w1: f64 = resp.iter().sum();
    let w0: f64 = nonresp.iter().sum();
    let moments = |cells: &[f64], w: f64| {
        let normed: Vec<f64> = cells.iter().map(|c| c / w).collect();
        mean_var(&normed, ys)
    };
    let mut per_stratum = Vec::with_capacity(2);
    if w1 > 0.0 && w0 > 0.0 {
        let (m1, v1) = moments(&resp, w1);
        let (m0, v0) = moments(&nonresp, w0);
        for (r, w, m, v, other) in [(1u8, w1, m1, v1, m0), (0u8, w0, m0, v0, m1)] {
            per_stratum.push(Stratum {
                r,
                weight: w,
                cond_mean: m,
                cond_var: v,
                bias: m - population_mean,
                factored_bias: (1.0 - w) * (m - other),
            });
        }
    } else {
        let r = if w1 > 0.0 { 1 } else { 0 };
        per_stratum.push(Stratum {
            r,
            weight: 1.0,
            cond_mean: population_mean,
            cond_var: population_var,
            bias: 0.0,
            factored_bias: 0.0,
        });
    }
    let reconstructed_var = per_stratum.iter().map(|s| s.weight * (s.cond_var + s.bias * s.bias)).sum();
    Ok(VarianceDecomposition {
        population_mean,
        population_var,
        reconstructed_var,
        per_stratum,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    /// `(1 - rate)^k`.
    pub analytic_fraction: f64,
    /// Mean complete-case share over replications of `n` units.
    pub simulated_fraction: McEstimate,
}

/// Share of units kept by complete-case analysis when each of `k` feature
/// cells is missing independently with probability `rate`.
pub fn complete_case_efficiency(
    k_features: usize,
    cell_missing_rate: f64,
    n: usize,
    reps: usize,
    stream: RngStream,
) -> Result<Efficiency> {
    if !(0.0..1.0).contains(&cell_missing_rate) {
        return Err(Error::invalid(format!("missing rate must lie in [0, 1), got {cell_missing_rate}")));
    }
    if n == 0 || reps < 2 {
        return Err(Error::invalid("need n >= 1 units and reps >= 2"));
    }
    let fractions = replicate(stream, reps, |_, s| {
        let mut rng = s.generator();
        let complete = (0..n)
            .filter(|_| {
                // Draw every cell so the stream layout does not depend on early exits.
                let mut ok = true;
                for _ in 0..k_features {
                    ok &= rng.random::<f64>() >= cell_missing_rate;
                }
                ok
            })
            .count();
        Ok(complete as f64 / n as f64)
    })?;
    Ok(Efficiency {
        analytic_fraction: (1.0 - cell_missing_rate).powi(k_features as i32),
        simulated_fraction: McEstimate::from_samples(&fractions)?,
    })
}
