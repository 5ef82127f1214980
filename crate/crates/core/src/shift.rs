//! Train-versus-deployment transportability for finite-support environments.
//!
//! Each environment factorizes as `f(x) f(z|x) f(y|x,z)`. A model trained on
//! `(X, Y)` learns the induced `f(y|x) = sum_z f(y|x,z) f(z|x)`, and it
//! transports when that conditional is the same in both environments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::omitted::sample_index;
use crate::sim::{parallel_samples, RngStream};

const ROW_TOL: f64 = 1e-12;

/// Default tolerance for table equality and for `max_tv`.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub x_values: Vec<String>,
    pub y_values: Vec<String>,
    pub z_values: Vec<String>,
    /// `[x][z][y]`.
    pub f_y_given_xz: Vec<Vec<Vec<f64>>>,
    /// `[x][z]`.
    pub f_z_given_x: Vec<Vec<f64>>,
    pub f_x: Vec<f64>,
}

fn check_row(row: &[f64], len: usize, what: impl Fn() -> String) -> Result<()> {
    if row.len() != len {
        return Err(Error::invalid(format!("{} has {} entries, expected {len}", what(), row.len())));
    }
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::invalid(format!("{} has negative or non-finite entries", what())));
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > ROW_TOL {
        return Err(Error::invalid(format!("{} sums to {s}, not 1", what())));
    }
    Ok(())
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        let (nx, ny, nz) = (self.x_values.len(), self.y_values.len(), self.z_values.len());
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::invalid("X, Y and Z supports must be nonempty"));
        }
        check_row(&self.f_x, nx, || "f_x".into())?;
        if self.f_z_given_x.len() != nx || self.f_y_given_xz.len() != nx {
            return Err(Error::invalid(format!("conditional tables need {nx} x-rows")));
        }
        for (i, x) in self.x_values.iter().enumerate() {
            check_row(&self.f_z_given_x[i], nz, || format!("f(z | x = {x})"))?;
            if self.f_y_given_xz[i].len() != nz {
                return Err(Error::invalid(format!("f(y | x = {x}, z) needs {nz} z-rows")));
            }
            for (k, z) in self.z_values.iter().enumerate() {
                check_row(&self.f_y_given_xz[i][k], ny, || format!("f(y | x = {x}, z = {z})"))?;
            }
        }
        Ok(())
    }

    fn x_index(&self, x: &str) -> Option<usize> {
        self.x_values.iter().position(|v| v == x)
    }

    fn induced_at(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.y_values.len()];
        for (k, w) in self.f_z_given_x[i].iter().enumerate() {
            for (o, p) in out.iter_mut().zip(&self.f_y_given_xz[i][k]) {
                *o += p * w;
            }
        }
        out
    }

    /// `f(y | x, z)` constant in `z` over the `z` with positive `f(z | x)`,
    /// at every `x` with positive mass.
    fn z_cond_independent(&self, tol: f64) -> bool {
        (0..self.x_values.len()).filter(|&i| self.f_x[i] > 0.0).all(|i| {
            let rows: Vec<&Vec<f64>> = (0..self.z_values.len())
                .filter(|&k| self.f_z_given_x[i][k] > 0.0)
                .map(|k| &self.f_y_given_xz[i][k])
                .collect();
            rows.windows(2).all(|w| close(w[0], w[1], tol))
        })
    }

    /// `n` draws of `(x, z, y)` support indices.
    pub fn sample(&self, n: usize, stream: RngStream) -> Vec<(usize, usize, usize)> {
        parallel_samples(stream, n, |rng| {
            let x = sample_index(&self.f_x, rand::Rng::random::<f64>(rng));
            let z = sample_index(&self.f_z_given_x[x], rand::Rng::random::<f64>(rng));
            let y = sample_index(&self.f_y_given_xz[x][z], rand::Rng::random::<f64>(rng));
            (x, z, y)
        })
    }
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(u, v)| (u - v).abs() <= tol)
}

/// `f(y | x)` induced by the environment's factorization.
pub fn induced_conditional(env: &EnvSpec, x: &str) -> Result<Vec<f64>> {
    let i = env.x_index(x).ok_or_else(|| Error::Unknown { kind: "x value", value: x.into() })?;
    Ok(env.induced_at(i))
}

/// Half the L1 distance.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftAtX {
    pub x: String,
    pub train_mass: f64,
    pub deploy_mass: f64,
    pub tv: f64,
    pub ood: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportReport {
    pub max_tv: f64,
    pub identical_superpop: bool,
    pub componentwise_equal: bool,
    pub z_cond_independent_both: bool,
    pub transportable: bool,
    /// Deployment `x` with positive deploy mass and zero train mass.
    pub ood_points: Vec<String>,
    /// One entry per deployment `x` with positive mass.
    pub per_x: Vec<ShiftAtX>,
}

/// Compare the training and deployment environments.
///
/// `Y` and `Z` supports must coincide and every deployment `x` must be in the
/// training support. Tables count as equal when every entry differs by at
/// most `tolerance / (|Y| (|Z| + 1))`, which keeps componentwise equality
/// sufficient for `max_tv <= tolerance`.
pub fn transportability_report(train: &EnvSpec, deploy: &EnvSpec, tolerance: f64) -> Result<TransportReport> {
    train.validate()?;
    deploy.validate()?;
    if !(tolerance >= 0.0) || !tolerance.is_finite() {
        return Err(Error::invalid(format!("tolerance must be finite and >= 0, got {tolerance}")));
    }
    for (name, a, b) in [("Y", &train.y_values, &deploy.y_values), ("Z", &train.z_values, &deploy.z_values)] {
        if a != b {
            return Err(Error::Structural(format!("{name} supports differ: train {a:?}, deploy {b:?}")));
        }
    }
    let missing: Vec<&String> = deploy.x_values.iter().filter(|x| train.x_index(x).is_none()).collect();
    if !missing.is_empty() {
        return Err(Error::Structural(format!("deployment x values outside the training support: {missing:?}")));
    }

    let entry_tol = tolerance / (train.y_values.len() * (train.z_values.len() + 1)) as f64;
    let mut componentwise_equal = true;
    let mut per_x = Vec::new();
    for (j, x) in deploy.x_values.iter().enumerate() {
        let i = train.x_index(x).expect("checked above");
        componentwise_equal &= close(&train.f_z_given_x[i], &deploy.f_z_given_x[j], entry_tol)
            && (0..train.z_values.len()).all(|k| close(&train.f_y_given_xz[i][k], &deploy.f_y_given_xz[j][k], entry_tol));
        if deploy.f_x[j] > 0.0 {
            per_x.push(ShiftAtX {
                x: x.clone(),
                train_mass: train.f_x[i],
                deploy_mass: deploy.f_x[j],
                tv: total_variation(&train.induced_at(i), &deploy.induced_at(j)),
                ood: train.f_x[i] == 0.0,
            });
        }
    }
    let same_x = train.x_values.len() == deploy.x_values.len();
    let identical_superpop = componentwise_equal
        && same_x
        && deploy
            .x_values
            .iter()
            .enumerate()
            .all(|(j, x)| (train.f_x[train.x_index(x).unwrap()] - deploy.f_x[j]).abs() <= entry_tol);
    let max_tv = per_x.iter().map(|s| s.tv).fold(0.0, f64::max);
    Ok(TransportReport {
        max_tv,
        identical_superpop,
        componentwise_equal,
        z_cond_independent_both: train.z_cond_independent(entry_tol) && deploy.z_cond_independent(entry_tol),
        transportable: max_tv <= tolerance,
        ood_points: per_x.iter().filter(|s| s.ood).map(|s| s.x.clone()).collect(),
        per_x,
    })
}
