//! Linear-Gaussian fitting: ordinary least squares, the SVD generalized
//! inverse, ridge, plus prediction intervals, AIC, and a Monte-Carlo
//! bias-variance decomposition.

mod bias_variance;
mod student_t;

pub use bias_variance::{
    bias_variance_mc, BiasVarianceReport, Fitter, LinearGaussianTruth, OlsFitter, OmitColumnsFitter,
    PinvFitter, RidgeFitter, ZeroFitter,
};
pub use student_t::{t_cdf, t_quantile};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training data: `x` is `n x p` with one observation per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::invalid(format!(
                "dataset needs n >= 1 and p >= 1, got {} x {}",
                x.nrows(),
                x.ncols()
            )));
        }
        if y.len() != x.nrows() {
            return Err(Error::invalid(format!(
                "response has length {} but design has {} rows",
                y.len(),
                x.nrows()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite entries"));
        }
        Ok(Self { x, y })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::invalid("design rows have unequal lengths"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(rows.len(), p, &flat), DVector::from_vec(y))
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Dataset restricted to the first `p` columns.
    pub fn leading_columns(&self, p: usize) -> Result<Dataset> {
        if p == 0 || p > self.p() {
            return Err(Error::invalid(format!("cannot take {p} of {} columns", self.p())));
        }
        Ok(Dataset {
            x: self.x.columns(0, p).into_owned(),
            y: self.y.clone(),
        })
    }

    pub fn select_columns(&self, columns: &[usize]) -> Result<Dataset> {
        if columns.is_empty() || columns.iter().any(|&c| c >= self.p()) {
            return Err(Error::invalid(format!("column selection {columns:?} out of range for p = {}", self.p())));
        }
        Ok(Dataset {
            x: self.x.select_columns(columns),
            y: self.y.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Ols,
    Pinv,
    Ridge { lambda: f64 },
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Estimator::Ols => f.write_str("ols"),
            Estimator::Pinv => f.write_str("pinv"),
            Estimator::Ridge { lambda } => write!(f, "ridge({lambda})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coefficients: DVector<f64>,
    /// `RSS / (n - p)`; only present for OLS with `n > p`.
    pub sigma2_hat: Option<f64>,
    pub estimator: Estimator,
    pub n: usize,
    pub p: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub center: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

/// Thin SVD `X = U diag(s) V^T` with the pseudo-inverse cut-off.
struct ThinSvd {
    u: DMatrix<f64>,
    s: DVector<f64>,
    v_t: DMatrix<f64>,
    cutoff: f64,
}

impl ThinSvd {
    fn of(x: &DMatrix<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        let svd = x.clone().svd(true, true);
        let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
            return Err(Error::Numerical("SVD did not return singular vectors".into()));
        };
        let s = svd.singular_values;
        let s_max = s.iter().copied().fold(0.0_f64, f64::max);
        Ok(Self {
            u,
            s,
            v_t,
            cutoff: f64::EPSILON * n.max(p) as f64 * s_max,
        })
    }

    fn rank(&self) -> usize {
        self.s.iter().filter(|&&v| v > self.cutoff).count()
    }

    /// `V diag(1/s) U^T y` over the retained singular values.
    fn pinv_apply(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut uty = self.u.tr_mul(y);
        for (k, c) in uty.iter_mut().enumerate() {
            let s = self.s[k];
            *c = if s > self.cutoff { *c / s } else { 0.0 };
        }
        self.v_t.tr_mul(&uty)
    }

    /// `x0^T (X^T X)^- x0 = || diag(1/s) V^T x0 ||^2`.
    fn leverage(&self, x0: &DVector<f64>) -> f64 {
        let vx = &self.v_t * x0;
        vx.iter()
            .zip(self.s.iter())
            .filter(|(_, &s)| s > self.cutoff)
            .map(|(v, s)| (v / s) * (v / s))
            .sum()
    }
}

fn rss(data: &Dataset, beta: &DVector<f64>) -> f64 {
    let resid = data.y() - data.x() * beta;
    resid.norm_squared()
}

/// Ordinary least squares `(X^T X)^{-1} X^T y`.
pub fn ols_fit(data: &Dataset) -> Result<LinearFit> {
    let (n, p) = (data.n(), data.p());
    if p > n {
        return Err(Error::Overparameterized { n, p });
    }
    let svd = ThinSvd::of(data.x())?;
    let rank = svd.rank();
    if rank < p {
        return Err(Error::RankDeficient { rank, p });
    }
    let coefficients = svd.pinv_apply(data.y());
    let sigma2_hat = (n > p).then(|| rss(data, &coefficients) / (n - p) as f64);
    Ok(LinearFit {
        coefficients,
        sigma2_hat,
        estimator: Estimator::Ols,
        n,
        p,
    })
}

/// Minimum-norm least squares `(X^T X)^- X^T y` via the truncated SVD.
///
/// Singular values at or below `eps * max(n, p) * s_max` are treated as zero.
pub fn pinv_fit(data: &Dataset) -> Result<LinearFit> {
    let svd = ThinSvd::of(data.x())?;
    Ok(LinearFit {
        coefficients: svd.pinv_apply(data.y()),
        sigma2_hat: None,
        estimator: Estimator::Pinv,
        n: data.n(),
        p: data.p(),
    })
}

/// Ridge estimate `(X^T X + lambda I)^{-1} X^T y`.
pub fn ridge_fit(data: &Dataset, lambda: f64) -> Result<LinearFit> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("ridge penalty must be positive and finite, got {lambda}")));
    }
    let x = data.x();
    let mut gram = x.tr_mul(x);
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    let rhs = x.tr_mul(data.y());
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("ridge normal equations are not positive definite".into()))?;
    Ok(LinearFit {
        coefficients: chol.solve(&rhs),
        sigma2_hat: None,
        estimator: Estimator::Ridge { lambda },
        n: data.n(),
        p: data.p(),
    })
}

/// Default ridge penalty `sigma^2 / sigma_beta^2` with prior variance
/// `sigma_beta^2 = sqrt(10)`.
pub fn default_ridge_lambda(sigma2: f64) -> f64 {
    sigma2 / 10f64.sqrt()
}

pub fn predict(fit: &LinearFit, x0: &[f64]) -> Result<f64> {
    if x0.len() != fit.p {
        return Err(Error::invalid(format!(
            "prediction point has length {} but the fit has {} coefficients",
            x0.len(),
            fit.p
        )));
    }
    Ok(fit.coefficients.iter().zip(x0).map(|(b, x)| b * x).sum())
}

/// Prediction interval for a new response at `x0`:
/// `x0' b +- t_{n-p, 1-alpha/2} * sigma_hat * sqrt(1 + x0' (X'X)^{-1} x0)`.
pub fn prediction_interval(fit: &LinearFit, data: &Dataset, x0: &[f64], level: f64) -> Result<PredictionInterval> {
    if fit.estimator != Estimator::Ols {
        return Err(Error::invalid(format!(
            "prediction intervals need an OLS fit, got {}",
            fit.estimator
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("level must lie in (0, 1), got {level}")));
    }
    if data.n() <= data.p() || data.p() != fit.p {
        return Err(Error::invalid(format!(
            "prediction intervals need n > p on the fitted design (n = {}, p = {})",
            data.n(),
            data.p()
        )));
    }
    let sigma2 = fit
        .sigma2_hat
        .ok_or_else(|| Error::invalid("fit carries no residual variance estimate"))?;
    let center = predict(fit, x0)?;
    let svd = ThinSvd::of(data.x())?;
    let leverage = svd.leverage(&DVector::from_column_slice(x0));
    let alpha = 1.0 - level;
    let t = t_quantile((data.n() - data.p()) as u64, 1.0 - alpha / 2.0)?;
    let half = t * sigma2.sqrt() * (1.0 + leverage).sqrt();
    Ok(PredictionInterval {
        center,
        lower: center - half,
        upper: center + half,
        level,
    })
}

/// Gaussian log-likelihood at the OLS coefficients and `sigma2_mle = RSS / n`.
pub fn gaussian_loglik(fit: &LinearFit, data: &Dataset) -> Result<f64> {
    if fit.estimator != Estimator::Ols {
        return Err(Error::invalid(format!("log-likelihood needs an OLS fit, got {}", fit.estimator)));
    }
    if fit.p >= data.n() {
        return Err(Error::invalid(format!(
            "AIC is undefined for p >= n (p = {}, n = {})",
            fit.p,
            data.n()
        )));
    }
    let n = data.n() as f64;
    let sigma2_mle = rss(data, &fit.coefficients) / n;
    if !(sigma2_mle > 0.0) {
        return Err(Error::Numerical("zero residual variance: log-likelihood is unbounded".into()));
    }
    Ok(-0.5 * n * ((2.0 * std::f64::consts::PI * sigma2_mle).ln() + 1.0))
}

/// `-2 loglik + 2 (p + 1)`, counting the residual variance as a parameter.
pub fn aic(fit: &LinearFit, data: &Dataset) -> Result<f64> {
    Ok(-2.0 * gaussian_loglik(fit, data)? + 2.0 * (fit.p + 1) as f64)
}
