//! Student t distribution through the regularized incomplete beta function.

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Gamma(z)` for `z > 0`.
pub(crate) fn ln_gamma(z: f64) -> f64 {
    let z = z - 1.0;
    let mut acc = LANCZOS[0];
    for (k, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (z + k as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

fn stirling_tail(z: f64) -> f64 {
    let z2 = z * z;
    (1.0 / 12.0 - (1.0 / 360.0 - (1.0 / 1260.0 - 1.0 / (1680.0 * z2)) / z2) / z2) / z
}

/// `ln Gamma(a) - ln Gamma(a + b)`, stable when `a` is large and `b` is not.
fn ln_gamma_drop(a: f64, b: f64) -> f64 {
    if a < 100.0 {
        return ln_gamma(a) - ln_gamma(a + b);
    }
    let s = a + b;
    -(a - 0.5) * (b / a).ln_1p() - b * s.ln() + b + stirling_tail(a) - stirling_tail(s)
}

fn ln_beta(a: f64, b: f64) -> f64 {
    let (small, big) = if a < b { (a, b) } else { (b, a) };
    ln_gamma(small) + ln_gamma_drop(big, small)
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let guard = |v: f64| if v.abs() < TINY { TINY } else { v };
    let mut c = 1.0;
    let mut d = 1.0 / guard(1.0 - (a + b) * x / (a + 1.0));
    let mut h = d;
    for m in 1..=20_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let even = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 / guard(1.0 + even * d);
        c = guard(1.0 + even / c);
        h *= d * c;
        let odd = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 / guard(1.0 + odd * d);
        c = guard(1.0 + odd / c);
        let step = d * c;
        h *= step;
        if (step - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// `I_x(a, b)` given both `x` and `y = 1 - x` so neither loses digits.
fn inc_beta(a: f64, b: f64, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    // Take each log from whichever of x, y is smaller, which is the accurate one.
    let (ln_x, ln_y) = if x > 0.5 { ((-y).ln_1p(), y.ln()) } else { (x.ln(), (-x).ln_1p()) };
    let front = (a * ln_x + b * ln_y - ln_beta(a, b)).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, y) / b
    }
}

fn check_df(df: u64) -> Result<f64> {
    if df == 0 {
        return Err(Error::invalid("t distribution needs df >= 1"));
    }
    Ok(df as f64)
}

pub fn t_cdf(df: u64, t: f64) -> Result<f64> {
    let nu = check_df(df)?;
    if t.is_nan() {
        return Err(Error::invalid("t_cdf argument is NaN"));
    }
    if t == 0.0 {
        return Ok(0.5);
    }
    if t.is_infinite() {
        return Ok(if t > 0.0 { 1.0 } else { 0.0 });
    }
    let t2 = t * t;
    let x = nu / (nu + t2);
    let y = t2 / (nu + t2);
    let tail = 0.5 * inc_beta(0.5 * nu, 0.5, x, y);
    Ok(if t > 0.0 { 1.0 - tail } else { tail })
}

pub(crate) fn t_pdf(nu: f64, t: f64) -> f64 {
    let half = 0.5 * nu;
    let ln_norm = -ln_gamma_drop(half, 0.5) - 0.5 * (nu * std::f64::consts::PI).ln();
    (ln_norm - (half + 0.5) * (t * t / nu).ln_1p()).exp()
}

/// Quantile by safeguarded Newton iteration on a bisection bracket.
pub fn t_quantile(df: u64, prob: f64) -> Result<f64> {
    let nu = check_df(df)?;
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::invalid(format!("t_quantile needs prob in (0, 1), got {prob}")));
    }
    if prob == 0.5 {
        return Ok(0.0);
    }
    if prob < 0.5 {
        return t_quantile(df, 1.0 - prob).map(|q| -q);
    }
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    while t_cdf(df, hi)? < prob {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Numerical(format!("t quantile bracket diverged at prob {prob}")));
        }
    }
    let mut q = 0.5 * (lo + hi);
    for _ in 0..500 {
        let f = t_cdf(df, q)? - prob;
        if f.abs() < 1e-13 {
            break;
        }
        if f > 0.0 {
            hi = q;
        } else {
            lo = q;
        }
        let newton = q - f / t_pdf(nu, q);
        q = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    Ok(q)
}
