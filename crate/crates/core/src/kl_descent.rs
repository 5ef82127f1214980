//! Expected Kullback-Leibler divergence between the true linear-Gaussian
//! model and fitted nested models `y ~ x_1 + ... + x_p` as `p` crosses `n`.
//!
//! Features are i.i.d. standard normal, so the population covariance is the
//! identity and the KL-optimal `p`-parameter model is the first `p` true
//! coefficients. The residual variance is treated as known and shared by both
//! models, which makes every KL term a squared distance between coefficient
//! vectors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::{ols_fit, pinv_fit, Dataset};
use crate::sim::{mc_estimate, replicate, std_normal, std_normal_vec, McEstimate, RngStream};

/// Number of covariates with nonzero effect in the named schemes.
pub const ACTIVE_COVARIATES: usize = 150;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaScheme {
    /// `beta_j = 1 - j / 150` for `j <= 150`.
    Decreasing,
    /// `beta_j = 1` for `j <= 150`.
    Constant,
    Custom(Vec<f64>),
}

impl BetaScheme {
    pub fn label(&self) -> &'static str {
        match self {
            BetaScheme::Decreasing => "decreasing",
            BetaScheme::Constant => "constant",
            BetaScheme::Custom(_) => "custom",
        }
    }
}

pub fn beta_scheme_vector(scheme: &BetaScheme, p_max: usize) -> Result<Vec<f64>> {
    let named = |f: fn(usize) -> f64| {
        if p_max < ACTIVE_COVARIATES {
            return Err(Error::invalid(format!(
                "named beta schemes need p_max >= {ACTIVE_COVARIATES}, got {p_max}"
            )));
        }
        Ok((1..=p_max).map(|j| if j <= ACTIVE_COVARIATES { f(j) } else { 0.0 }).collect())
    };
    match scheme {
        BetaScheme::Decreasing => named(|j| 1.0 - j as f64 / ACTIVE_COVARIATES as f64),
        BetaScheme::Constant => named(|_| 1.0),
        BetaScheme::Custom(beta) => {
            if beta.len() != p_max {
                return Err(Error::invalid(format!(
                    "custom beta has length {} but p_max is {p_max}",
                    beta.len()
                )));
            }
            if beta.iter().any(|b| !b.is_finite()) {
                return Err(Error::invalid("custom beta contains non-finite entries"));
            }
            Ok(beta.clone())
        }
    }
}

/// KL-optimal coefficients of the model using the first `p` covariates.
pub fn optimal_subset_params(beta_true: &[f64], p: usize) -> Result<Vec<f64>> {
    if p > beta_true.len() {
        return Err(Error::invalid(format!("p = {p} exceeds p_max = {}", beta_true.len())));
    }
    Ok(beta_true[..p].to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlComponents {
    pub total: f64,
    /// Distance from the truth to the best `p`-parameter model.
    pub comp1: f64,
    /// Distance from the best `p`-parameter model to the fit.
    pub comp2: f64,
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("sigma must be positive and finite, got {sigma}")));
    }
    Ok(())
}

/// Closed-form expected KL under identity feature covariance.
pub fn kl_gaussian_linear(beta_true: &[f64], beta_hat: &[f64], p: usize, sigma: f64) -> Result<KlComponents> {
    check_sigma(sigma)?;
    if beta_hat.len() != p || p > beta_true.len() {
        return Err(Error::invalid(format!(
            "beta_hat has length {}, p = {p}, p_max = {}",
            beta_hat.len(),
            beta_true.len()
        )));
    }
    let denom = 2.0 * sigma * sigma;
    let inside: f64 = beta_true[..p].iter().zip(beta_hat).map(|(b, h)| (b - h) * (b - h)).sum();
    let outside: f64 = beta_true[p..].iter().map(|b| b * b).sum();
    let total = (inside + outside) / denom;
    let comp1 = outside / denom;
    Ok(KlComponents {
        total,
        comp1,
        comp2: total - comp1,
    })
}

/// Sampling check of [`kl_gaussian_linear`]: averages
/// `(x' beta - x_{1:p}' beta_hat)^2 / (2 sigma^2)` over `x ~ N(0, I)`.
pub fn mc_kl_oracle(
    beta_true: &[f64],
    beta_hat: &[f64],
    p: usize,
    sigma: f64,
    n_draws: usize,
    stream: RngStream,
) -> Result<McEstimate> {
    check_sigma(sigma)?;
    if n_draws < 10_000 {
        return Err(Error::invalid(format!("mc_kl_oracle needs n_draws >= 10000, got {n_draws}")));
    }
    if beta_hat.len() != p || p > beta_true.len() {
        return Err(Error::invalid("beta_hat length must equal p <= p_max"));
    }
    let diff: Vec<f64> = beta_true
        .iter()
        .enumerate()
        .map(|(j, b)| if j < p { b - beta_hat[j] } else { *b })
        .collect();
    let denom = 2.0 * sigma * sigma;
    mc_estimate(
        |rng| std_normal_vec(rng, diff.len()),
        |x| {
            let m: f64 = x.iter().zip(&diff).map(|(a, d)| a * d).sum();
            m * m / denom
        },
        n_draws,
        stream,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescentEstimator {
    /// OLS below `n`, minimum-norm least squares from `p = n` on.
    Pinv,
    /// Ridge at every `p`.
    Ridge { lambda: f64 },
}

impl DescentEstimator {
    pub fn label(&self) -> &'static str {
        match self {
            DescentEstimator::Pinv => "pinv",
            DescentEstimator::Ridge { .. } => "ridge",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSetting {
    pub n: usize,
    pub p_max: usize,
    pub sigma: f64,
    pub beta_scheme: BetaScheme,
    pub estimator: DescentEstimator,
    pub replications: usize,
    pub p_grid: Vec<usize>,
    pub base_seed: u64,
}

impl Default for SimSetting {
    fn default() -> Self {
        Self {
            n: 100,
            p_max: 200,
            sigma: 0.1,
            beta_scheme: BetaScheme::Decreasing,
            estimator: DescentEstimator::Pinv,
            replications: 100,
            p_grid: (1..=200).collect(),
            base_seed: 0,
        }
    }
}

impl SimSetting {
    pub fn validate(&self) -> Result<Vec<f64>> {
        if self.n < 2 {
            return Err(Error::invalid(format!("n must be at least 2, got {}", self.n)));
        }
        check_sigma(self.sigma)?;
        if self.replications < 2 {
            return Err(Error::invalid("replications must be at least 2"));
        }
        if self.p_grid.is_empty() {
            return Err(Error::invalid("p_grid is empty"));
        }
        if self.p_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("p_grid must be strictly increasing"));
        }
        if self.p_grid[0] == 0 || *self.p_grid.last().unwrap() > self.p_max {
            return Err(Error::invalid(format!("p_grid entries must lie in 1..={}", self.p_max)));
        }
        if let DescentEstimator::Ridge { lambda } = self.estimator {
            if !(lambda > 0.0) || !lambda.is_finite() {
                return Err(Error::invalid(format!("ridge lambda must be positive, got {lambda}")));
            }
        }
        beta_scheme_vector(&self.beta_scheme, self.p_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlCurvePoint {
    pub p: usize,
    pub kl_total: McEstimate,
    pub comp1: f64,
    pub comp2: McEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlCurve {
    pub points: Vec<KlCurvePoint>,
    /// First `p` fitted by the generalized inverse instead of OLS.
    pub pinv_switch_p: Option<usize>,
}

fn fit_pinv_path(full: &Dataset, p: usize, n: usize) -> Result<Vec<f64>> {
    let data = full.leading_columns(p)?;
    let fit = if p < n {
        match ols_fit(&data) {
            Ok(fit) => fit,
            Err(Error::RankDeficient { .. }) => pinv_fit(&data)?,
            Err(e) => return Err(e),
        }
    } else {
        pinv_fit(&data)?
    };
    Ok(fit.coefficients.iter().copied().collect())
}

/// Ridge on the leading `p` columns via the leading block of the full Gram matrix.
fn fit_ridge_path(gram: &DMatrix<f64>, xty: &DVector<f64>, p: usize, lambda: f64) -> Result<Vec<f64>> {
    let mut g = gram.view((0, 0), (p, p)).into_owned();
    for i in 0..p {
        g[(i, i)] += lambda;
    }
    let chol = g
        .cholesky()
        .ok_or_else(|| Error::Numerical("ridge normal equations are not positive definite".into()))?;
    Ok(chol.solve(&xty.rows(0, p).into_owned()).iter().copied().collect())
}

/// Simulated double-descent curve, one point per entry of `p_grid`.
///
/// Replication `r` draws its design row-major and then its noise from
/// `RngStream::new(base_seed, 0).split(r)`.
pub fn run_double_descent(setting: &SimSetting) -> Result<KlCurve> {
    let beta = setting.validate()?;
    let (n, p_max, sigma) = (setting.n, setting.p_max, setting.sigma);
    let beta_vec = DVector::from_column_slice(&beta);
    let root = RngStream::new(setting.base_seed, 0);

    let per_rep = replicate(root, setting.replications, |rep, stream| {
        let mut rng = stream.generator();
        let mut x = DMatrix::zeros(n, p_max);
        for i in 0..n {
            for j in 0..p_max {
                x[(i, j)] = std_normal(&mut rng);
            }
        }
        let mut y = &x * &beta_vec;
        for v in y.iter_mut() {
            *v += sigma * std_normal(&mut rng);
        }
        let wrap = |p: usize| move |e: Error| Error::Fit { replication: rep, p, source: Box::new(e) };
        let full = Dataset::new(x, y).map_err(wrap(0))?;
        let normal_eq = match setting.estimator {
            DescentEstimator::Ridge { .. } => Some((full.x().tr_mul(full.x()), full.x().tr_mul(full.y()))),
            DescentEstimator::Pinv => None,
        };
        setting
            .p_grid
            .iter()
            .map(|&p| {
                let beta_hat = match (&setting.estimator, &normal_eq) {
                    (DescentEstimator::Ridge { lambda }, Some((g, c))) => fit_ridge_path(g, c, p, *lambda),
                    _ => fit_pinv_path(&full, p, n),
                }
                .map_err(wrap(p))?;
                let kl = kl_gaussian_linear(&beta, &beta_hat, p, sigma).map_err(wrap(p))?;
                if !kl.total.is_finite() {
                    return Err(wrap(p)(Error::Numerical("non-finite KL".into())));
                }
                Ok(kl.total)
            })
            .collect::<Result<Vec<f64>>>()
    })?;

    let mut points = Vec::with_capacity(setting.p_grid.len());
    for (k, &p) in setting.p_grid.iter().enumerate() {
        let totals: Vec<f64> = per_rep.iter().map(|r| r[k]).collect();
        let kl_total = McEstimate::from_samples(&totals)?;
        let outside: f64 = beta[p..].iter().map(|b| b * b).sum();
        let comp1 = outside / (2.0 * sigma * sigma);
        points.push(KlCurvePoint {
            p,
            kl_total,
            comp1,
            comp2: McEstimate {
                mean: kl_total.mean - comp1,
                std_error: kl_total.std_error,
                n_samples: kl_total.n_samples,
            },
        });
    }
    let pinv_switch_p = match setting.estimator {
        DescentEstimator::Pinv => Some(n),
        DescentEstimator::Ridge { .. } => None,
    };
    Ok(KlCurve { points, pinv_switch_p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Generator;
    use rand::Rng;

    #[test]
    fn scheme_values() {
        let dec = beta_scheme_vector(&BetaScheme::Decreasing, 200).unwrap();
        assert_eq!(dec[0], 149.0 / 150.0);
        assert_eq!(dec[149], 0.0);
        assert!(dec[150..].iter().all(|&b| b == 0.0));
        let con = beta_scheme_vector(&BetaScheme::Constant, 200).unwrap();
        assert_eq!(con[149], 1.0);
        assert_eq!(con[150], 0.0);
        assert!(beta_scheme_vector(&BetaScheme::Constant, 149).is_err());
        assert!(beta_scheme_vector(&BetaScheme::Custom(vec![1.0; 3]), 4).is_err());
    }

    #[test]
    fn subset_params() {
        let con = beta_scheme_vector(&BetaScheme::Constant, 200).unwrap();
        assert_eq!(optimal_subset_params(&con, 200).unwrap(), con);
        assert!(optimal_subset_params(&con, 0).unwrap().is_empty());
        assert_eq!(optimal_subset_params(&con, 150).unwrap(), vec![1.0; 150]);
        assert!(optimal_subset_params(&con, 201).is_err());
    }

    #[test]
    fn perfect_recovery_is_zero() {
        let beta = beta_scheme_vector(&BetaScheme::Decreasing, 200).unwrap();
        for p in [150, 170, 200] {
            let kl = kl_gaussian_linear(&beta, &beta[..p], p, 0.1).unwrap();
            assert_eq!((kl.total, kl.comp1, kl.comp2), (0.0, 0.0, 0.0));
            let noisy: Vec<f64> = beta[..p].iter().map(|b| b + 0.01).collect();
            assert_eq!(kl_gaussian_linear(&beta, &noisy, p, 0.1).unwrap().comp1, 0.0);
        }
    }

    #[test]
    fn comp1_nonincreasing() {
        let mut rng = RngStream::new(4, 4).generator();
        for scheme in [BetaScheme::Decreasing, BetaScheme::Constant] {
            let beta = beta_scheme_vector(&scheme, 200).unwrap();
            let mut last = f64::INFINITY;
            for p in 0..=200 {
                let hat: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
                let c = kl_gaussian_linear(&beta, &hat, p, 0.1).unwrap().comp1;
                assert!(c <= last);
                last = c;
            }
        }
    }

    fn random_instance(rng: &mut Generator) -> (Vec<f64>, Vec<f64>, usize, f64) {
        let p_max = rng.random_range(1..12);
        let p = rng.random_range(0..=p_max);
        let beta: Vec<f64> = (0..p_max).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hat: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        (beta, hat, p, rng.random_range(0.2..2.0))
    }

    #[test]
    fn closed_form_matches_oracle() {
        let mut rng = RngStream::new(99, 0).generator();
        for k in 0..20 {
            let (beta, hat, p, sigma) = random_instance(&mut rng);
            let exact = kl_gaussian_linear(&beta, &hat, p, sigma).unwrap();
            let mc = mc_kl_oracle(&beta, &hat, p, sigma, 20_000, RngStream::new(99, k + 1)).unwrap();
            assert!(mc.within(exact.total, 3.0, 1e-12), "instance {k}: {mc:?} vs {}", exact.total);
        }
    }

    #[test]
    fn oracle_zero_and_scaling() {
        let beta = [0.3, -0.2, 0.1];
        let zero = mc_kl_oracle(&beta, &beta, 3, 0.5, 10_000, RngStream::new(1, 0)).unwrap();
        assert_eq!((zero.mean, zero.std_error), (0.0, 0.0));
        let hat = [0.0, 0.1];
        let a = mc_kl_oracle(&beta, &hat, 2, 0.5, 10_000, RngStream::new(1, 1)).unwrap();
        let b = mc_kl_oracle(&beta, &hat, 2, 1.5, 10_000, RngStream::new(1, 1)).unwrap();
        // Same draws, so the ratio is exact up to rounding.
        assert!((a.mean / b.mean - 9.0).abs() < 1e-9);
    }

    fn small_setting(reps: usize) -> SimSetting {
        SimSetting {
            n: 30,
            p_max: 10,
            sigma: 0.5,
            beta_scheme: BetaScheme::Custom((0..10).map(|j| 1.0 / (j + 1) as f64).collect()),
            estimator: DescentEstimator::Pinv,
            replications: reps,
            p_grid: vec![2, 5, 8],
            base_seed: 17,
        }
    }

    #[test]
    fn curve_identity_and_determinism() {
        let s = small_setting(50);
        let a = run_double_descent(&s).unwrap();
        assert_eq!(a, run_double_descent(&s).unwrap());
        assert_eq!(a.pinv_switch_p, Some(30));
        for pt in &a.points {
            assert!((pt.kl_total.mean - pt.comp1 - pt.comp2.mean).abs() < 1e-10);
            assert!(pt.comp1 >= 0.0 && pt.kl_total.mean >= 0.0);
        }
    }

    #[test]
    fn standard_error_scales_with_replications() {
        let a = run_double_descent(&small_setting(400)).unwrap();
        let b = run_double_descent(&small_setting(1600)).unwrap();
        for (pa, pb) in a.points.iter().zip(&b.points) {
            let ratio = pa.kl_total.std_error / pb.kl_total.std_error;
            assert!((ratio - 2.0).abs() < 0.4, "p = {}: ratio {ratio}", pa.p);
        }
    }

    #[test]
    fn ridge_path_matches_ridge_fit() {
        let s = SimSetting {
            estimator: DescentEstimator::Ridge { lambda: 0.3 },
            ..small_setting(2)
        };
        let beta = s.validate().unwrap();
        let mut rng = RngStream::new(5, 5).generator();
        let x = DMatrix::from_fn(30, 10, |_, _| std_normal(&mut rng));
        let y = &x * DVector::from_column_slice(&beta);
        let full = Dataset::new(x, y).unwrap();
        let (g, c) = (full.x().tr_mul(full.x()), full.x().tr_mul(full.y()));
        for p in [1, 4, 10] {
            let fast = fit_ridge_path(&g, &c, p, 0.3).unwrap();
            let slow = crate::regression::ridge_fit(&full.leading_columns(p).unwrap(), 0.3).unwrap();
            for (a, b) in fast.iter().zip(slow.coefficients.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_settings() {
        let mut s = small_setting(10);
        s.p_grid = vec![3, 3];
        assert!(run_double_descent(&s).is_err());
        s.p_grid = vec![11];
        assert!(run_double_descent(&s).is_err());
        s.p_grid = vec![];
        assert!(run_double_descent(&s).is_err());
        let s = SimSetting {
            estimator: DescentEstimator::Ridge { lambda: 0.0 },
            ..small_setting(10)
        };
        assert!(run_double_descent(&s).is_err());
    }
}
