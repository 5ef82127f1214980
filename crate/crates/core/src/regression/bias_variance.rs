use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ols_fit, pinv_fit, predict, ridge_fit, Dataset};
use crate::error::{Error, Result};
use crate::sim::{replicate, std_normal, Generator, McEstimate, RngStream};

/// `y = x' beta + eps`, `eps ~ N(0, sigma2)`, with `x ~ N(0, I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussianTruth {
    pub beta: Vec<f64>,
    pub sigma2: f64,
}

impl LinearGaussianTruth {
    pub fn validate(&self) -> Result<()> {
        if self.beta.is_empty() || self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("beta must be a nonempty finite vector"));
        }
        if !(self.sigma2 >= 0.0) || !self.sigma2.is_finite() {
            return Err(Error::invalid(format!("sigma2 must be finite and >= 0, got {}", self.sigma2)));
        }
        Ok(())
    }

    pub fn mean_at(&self, x0: &[f64]) -> f64 {
        self.beta.iter().zip(x0).map(|(b, x)| b * x).sum()
    }

    /// `n` rows drawn row-major, then `n` noise terms.
    pub(crate) fn draw(&self, rng: &mut Generator, n: usize) -> Result<Dataset> {
        let p = self.beta.len();
        let mut x = DMatrix::zeros(n, p);
        for i in 0..n {
            for j in 0..p {
                x[(i, j)] = std_normal(rng);
            }
        }
        let sigma = self.sigma2.sqrt();
        let beta = DVector::from_column_slice(&self.beta);
        let mut y = &x * beta;
        for v in y.iter_mut() {
            *v += sigma * std_normal(rng);
        }
        Dataset::new(x, y)
    }
}

/// A fitting procedure evaluated at a single query point.
pub trait Fitter: Sync {
    fn name(&self) -> String;
    fn fit_predict(&self, data: &Dataset, x0: &[f64]) -> Result<f64>;
}

pub struct OlsFitter;

impl Fitter for OlsFitter {
    fn name(&self) -> String {
        "ols".into()
    }
    fn fit_predict(&self, data: &Dataset, x0: &[f64]) -> Result<f64> {
        predict(&ols_fit(data)?, x0)
    }
}

pub struct PinvFitter;

impl Fitter for PinvFitter {
    fn name(&self) -> String {
        "pinv".into()
    }
    fn fit_predict(&self, data: &Dataset, x0: &[f64]) -> Result<f64> {
        predict(&pinv_fit(data)?, x0)
    }
}

pub struct RidgeFitter {
    pub lambda: f64,
}

impl Fitter for RidgeFitter {
    fn name(&self) -> String {
        format!("ridge({})", self.lambda)
    }
    fn fit_predict(&self, data: &Dataset, x0: &[f64]) -> Result<f64> {
        predict(&ridge_fit(data, self.lambda)?, x0)
    }
}

/// OLS on all columns except `omit`.
pub struct OmitColumnsFitter {
    pub omit: Vec<usize>,
}

impl Fitter for OmitColumnsFitter {
    fn name(&self) -> String {
        let cols: Vec<String> = self.omit.iter().map(usize::to_string).collect();
        format!("ols-omit[{}]", cols.join(" "))
    }
    fn fit_predict(&self, data: &Dataset, x0: &[f64]) -> Result<f64> {
        let keep: Vec<usize> = (0..data.p()).filter(|j| !self.omit.contains(j)).collect();
        let fit = ols_fit(&data.select_columns(&keep)?)?;
        let x0_keep: Vec<f64> = keep.iter().map(|&j| x0[j]).collect();
        predict(&fit, &x0_keep)
    }
}

/// Always predicts 0.
pub struct ZeroFitter;

impl Fitter for ZeroFitter {
    fn name(&self) -> String {
        "zero".into()
    }
    fn fit_predict(&self, _data: &Dataset, _x0: &[f64]) -> Result<f64> {
        Ok(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasVarianceReport {
    pub aleatoric: f64,
    pub estimation_variance: McEstimate,
    pub bias_sq: McEstimate,
    pub direct_mse: McEstimate,
}

impl BiasVarianceReport {
    pub fn component_sum(&self) -> f64 {
        self.aleatoric + self.estimation_variance.mean + self.bias_sq.mean
    }

    /// Standard error of `component_sum - direct_mse`, treating the terms as independent.
    pub fn combined_se(&self) -> f64 {
        [self.estimation_variance, self.bias_sq, self.direct_mse]
            .iter()
            .map(|e| e.std_error * e.std_error)
            .sum::<f64>()
            .sqrt()
    }
}

/// Monte-Carlo decomposition of the expected squared prediction error at `x0`.
///
/// Each replication draws a training set of size `n_train`, fits, predicts at
/// `x0`, and scores the prediction against one fresh `y0`.
pub fn bias_variance_mc(
    truth: &LinearGaussianTruth,
    fitter: &dyn Fitter,
    x0: &[f64],
    n_train: usize,
    reps: usize,
    stream: RngStream,
) -> Result<BiasVarianceReport> {
    truth.validate()?;
    if reps < 100 {
        return Err(Error::invalid(format!("bias_variance_mc needs reps >= 100, got {reps}")));
    }
    if x0.len() != truth.beta.len() {
        return Err(Error::invalid(format!(
            "x0 has length {} but beta has length {}",
            x0.len(),
            truth.beta.len()
        )));
    }
    if n_train == 0 {
        return Err(Error::invalid("n_train must be positive"));
    }
    let f0 = truth.mean_at(x0);
    let sigma = truth.sigma2.sqrt();
    let draws = replicate(stream, reps, |rep, s| {
        let mut rng = s.generator();
        let data = truth.draw(&mut rng, n_train)?;
        let y_hat = fitter
            .fit_predict(&data, x0)
            .map_err(|e| Error::Replication {
                replication: rep,
                source: Box::new(e),
            })?;
        let y0 = f0 + sigma * std_normal(&mut rng);
        Ok((y_hat, (y0 - y_hat) * (y0 - y_hat)))
    })?;

    let preds: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let sq_err: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let pred_est = McEstimate::from_samples(&preds)?;
    let r = reps as f64;
    let scale = r / (r - 1.0);
    let dev_sq: Vec<f64> = preds.iter().map(|v| scale * (v - pred_est.mean).powi(2)).collect();
    let estimation_variance = McEstimate::from_samples(&dev_sq)?;

    let bias = pred_est.mean - f0;
    let se2 = pred_est.std_error * pred_est.std_error;
    let bias_sq = McEstimate {
        mean: bias * bias,
        std_error: (4.0 * bias * bias * se2 + 2.0 * se2 * se2).sqrt(),
        n_samples: reps,
    };
    Ok(BiasVarianceReport {
        aleatoric: truth.sigma2,
        estimation_variance,
        bias_sq,
        direct_mse: McEstimate::from_samples(&sq_err)?,
    })
}
