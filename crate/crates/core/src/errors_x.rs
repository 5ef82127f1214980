//! Classical additive measurement error in a single feature.
//!
//! `Z ~ N(mu_z, tau2)`, `X = Z + U` with `U ~ N(0, omega2)` independent, and
//! `Y | Z ~ N(alpha + gamma Z, sigma2)`. `Y` is independent of `X` given `Z`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{compensated_sum, parallel_samples, std_normal, McEstimate, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussianMeSpec {
    pub mu_z: f64,
    pub tau2: f64,
    pub omega2: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub sigma2: f64,
}

impl LinearGaussianMeSpec {
    pub fn validate(&self) -> Result<()> {
        let all = [self.mu_z, self.tau2, self.omega2, self.alpha, self.gamma, self.sigma2];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("measurement-error spec has non-finite parameters"));
        }
        for (name, v) in [("tau2", self.tau2), ("omega2", self.omega2), ("sigma2", self.sigma2)] {
            if v < 0.0 {
                return Err(Error::invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    fn conditioning(&self) -> Result<f64> {
        self.validate()?;
        let s = self.tau2 + self.omega2;
        if s <= 0.0 {
            return Err(Error::invalid("tau2 + omega2 must be positive to condition on x"));
        }
        Ok(s)
    }
}

/// `Var(Y | z) = sigma2`.
pub fn error_free_variance(spec: &LinearGaussianMeSpec) -> f64 {
    spec.sigma2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorProneVariance {
    pub total: f64,
    /// `E[Var(Y | Z) | x]`.
    pub mean_cond_var: f64,
    /// `Var[E(Y | Z) | x]`.
    pub var_cond_mean: f64,
    pub var_z_given_x: f64,
}

/// `Var(Y | x) = sigma2 + gamma^2 tau2 omega2 / (tau2 + omega2)`, constant in `x`.
pub fn error_prone_variance(spec: &LinearGaussianMeSpec) -> Result<ErrorProneVariance> {
    let s = spec.conditioning()?;
    let var_z_given_x = spec.tau2 * spec.omega2 / s;
    let var_cond_mean = spec.gamma * spec.gamma * var_z_given_x;
    Ok(ErrorProneVariance {
        total: spec.sigma2 + var_cond_mean,
        mean_cond_var: spec.sigma2,
        var_cond_mean,
        var_z_given_x,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attenuation {
    pub true_slope: f64,
    pub naive_slope: f64,
    /// Reliability ratio `tau2 / (tau2 + omega2)`.
    pub attenuation: f64,
}

pub fn naive_slope_attenuation(spec: &LinearGaussianMeSpec) -> Result<Attenuation> {
    let s = spec.conditioning()?;
    let attenuation = spec.tau2 / s;
    Ok(Attenuation {
        true_slope: spec.gamma,
        naive_slope: spec.gamma * attenuation,
        attenuation,
    })
}

/// Upper bound on the upward bias of the windowed variance estimate.
///
/// Inside `[x0 - h, x0 + h]` the estimate picks up
/// `naive_slope^2 * Var(X | window)`, and a log-concave density restricted to
/// an interval of length `2h` has variance at most `h^2 / 3`.
pub fn window_bias_bound(spec: &LinearGaussianMeSpec, bandwidth: f64) -> Result<f64> {
    let b = naive_slope_attenuation(spec)?.naive_slope;
    Ok(b * b * bandwidth * bandwidth / 3.0)
}

/// Minimum number of draws that must land in the window.
pub const MIN_WINDOW_HITS: usize = 100;

fn draw_triple(spec: &LinearGaussianMeSpec, rng: &mut crate::sim::Generator) -> (f64, f64, f64) {
    let z = spec.mu_z + spec.tau2.sqrt() * std_normal(rng);
    let x = z + spec.omega2.sqrt() * std_normal(rng);
    let y = spec.alpha + spec.gamma * z + spec.sigma2.sqrt() * std_normal(rng);
    (z, x, y)
}

/// Localized estimate of `Var(Y | X = x0)` from the draws with `|x - x0| <= h`.
pub fn mc_errors_x_oracle(
    spec: &LinearGaussianMeSpec,
    x0: f64,
    bandwidth: f64,
    n_draws: usize,
    stream: RngStream,
) -> Result<McEstimate> {
    spec.validate()?;
    if n_draws < 100_000 {
        return Err(Error::invalid(format!("mc_errors_x_oracle needs n_draws >= 100000, got {n_draws}")));
    }
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let draws = parallel_samples(stream, n_draws, |rng| draw_triple(spec, rng));
    let ys: Vec<f64> = draws
        .iter()
        .filter(|(_, x, _)| (x - x0).abs() <= bandwidth)
        .map(|t| t.2)
        .collect();
    if ys.len() < MIN_WINDOW_HITS {
        return Err(Error::SparseWindow {
            hits: ys.len(),
            required: MIN_WINDOW_HITS,
        });
    }
    let m = compensated_sum(ys.iter().copied()) / ys.len() as f64;
    let scale = ys.len() as f64 / (ys.len() - 1) as f64;
    let dev: Vec<f64> = ys.iter().map(|y| scale * (y - m) * (y - m)).collect();
    McEstimate::from_samples(&dev)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    pub slope: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

/// OLS slope of `y` on the error-prone `x` over `n` simulated triples.
pub fn simulate_naive_slope(spec: &LinearGaussianMeSpec, n: usize, stream: RngStream) -> Result<SlopeEstimate> {
    spec.conditioning()?;
    if n < 3 {
        return Err(Error::invalid("need at least 3 draws for a slope"));
    }
    let draws = parallel_samples(stream, n, |rng| {
        let (_, x, y) = draw_triple(spec, rng);
        (x, y)
    });
    let nf = n as f64;
    let mx = compensated_sum(draws.iter().map(|d| d.0)) / nf;
    let my = compensated_sum(draws.iter().map(|d| d.1)) / nf;
    let sxx = compensated_sum(draws.iter().map(|d| (d.0 - mx) * (d.0 - mx)));
    let sxy = compensated_sum(draws.iter().map(|d| (d.0 - mx) * (d.1 - my)));
    if !(sxx > 0.0) {
        return Err(Error::Numerical("simulated feature has zero spread".into()));
    }
    let slope = sxy / sxx;
    let rss = compensated_sum(draws.iter().map(|d| {
        let r = d.1 - my - slope * (d.0 - mx);
        r * r
    }));
    Ok(SlopeEstimate {
        slope,
        std_error: (rss / (nf - 2.0) / sxx).sqrt(),
        n_samples: n,
    })
}
