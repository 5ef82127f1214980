//! Error-prone class labels `Y` standing in for true classes `Z`, pointwise
//! in `x`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::omitted::sample_index;
use crate::sim::{parallel_samples, McEstimate, RngStream};

const PROB_TOL: f64 = 1e-12;

/// `P(Z | x)` and the row-stochastic error matrix `E[z][y] = P(Y = y | Z = z, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyLabelSpec {
    classes: Vec<String>,
    pz_given_x: Vec<f64>,
    error_matrix: Vec<Vec<f64>>,
}

fn check_prob_vector(v: &[f64], what: &str) -> Result<()> {
    if let Some(k) = v.iter().position(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::invalid(format!("{what}: entry {k} is {} (must be a probability)", v[k])));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::invalid(format!("{what}: sums to {sum}, not 1")));
    }
    Ok(())
}

impl NoisyLabelSpec {
    pub fn new(classes: Vec<String>, pz_given_x: Vec<f64>, error_matrix: Vec<Vec<f64>>) -> Result<Self> {
        let k = classes.len();
        if k == 0 {
            return Err(Error::invalid("label spec needs at least one class"));
        }
        for (i, c) in classes.iter().enumerate() {
            if classes[..i].contains(c) {
                return Err(Error::invalid(format!("duplicate class `{c}`")));
            }
        }
        if pz_given_x.len() != k {
            return Err(Error::invalid(format!("pz_given_x has {} entries for {k} classes", pz_given_x.len())));
        }
        check_prob_vector(&pz_given_x, "pz_given_x")?;
        if error_matrix.len() != k {
            return Err(Error::invalid(format!("error_matrix has {} rows for {k} classes", error_matrix.len())));
        }
        for (z, row) in error_matrix.iter().enumerate() {
            let what = format!("error_matrix row {z} (true class `{}`)", classes[z]);
            if row.len() != k {
                return Err(Error::invalid(format!("{what}: has {} entries for {k} classes", row.len())));
            }
            check_prob_vector(row, &what)?;
        }
        Ok(Self {
            classes,
            pz_given_x,
            error_matrix,
        })
    }

    /// Binary classes `"0"`, `"1"` with `P(Z = 1 | x) = p_z1`,
    /// `P(Y = 1 | Z = 0) = false_pos` and `P(Y = 0 | Z = 1) = false_neg`.
    pub fn binary(p_z1: f64, false_pos: f64, false_neg: f64) -> Result<Self> {
        Self::new(
            vec!["0".into(), "1".into()],
            vec![1.0 - p_z1, p_z1],
            vec![vec![1.0 - false_pos, false_pos], vec![false_neg, 1.0 - false_neg]],
        )
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn pz_given_x(&self) -> &[f64] {
        &self.pz_given_x
    }

    pub fn error_matrix(&self) -> &[Vec<f64>] {
        &self.error_matrix
    }

    fn class_index(&self, class: &str) -> Result<usize> {
        self.classes
            .iter()
            .position(|c| c == class)
            .ok_or_else(|| Error::Unknown { kind: "class", value: class.into() })
    }
}

/// `P(Y = y | x) = sum_z E[z][y] P(Z = z | x)`.
pub fn observed_class_probs(spec: &NoisyLabelSpec) -> Vec<f64> {
    (0..spec.classes.len())
        .map(|y| spec.error_matrix.iter().zip(&spec.pz_given_x).map(|(row, pz)| row[y] * pz).sum())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelBias {
    pub class: String,
    pub bias: f64,
    /// Mass wrongly labelled as this class.
    pub false_positive_mass: f64,
    /// Mass of this class labelled as something else.
    pub false_negative_mass: f64,
}

pub fn label_bias(spec: &NoisyLabelSpec, target_class: &str) -> Result<LabelBias> {
    let u = spec.class_index(target_class)?;
    Ok(bias_at(spec, u))
}

fn bias_at(spec: &NoisyLabelSpec, u: usize) -> LabelBias {
    let false_positive_mass: f64 = (0..spec.classes.len())
        .filter(|&z| z != u)
        .map(|z| spec.error_matrix[z][u] * spec.pz_given_x[z])
        .sum();
    let false_negative_mass: f64 = (0..spec.classes.len())
        .filter(|&y| y != u)
        .map(|y| spec.error_matrix[u][y] * spec.pz_given_x[u])
        .sum();
    LabelBias {
        class: spec.classes[u].clone(),
        bias: false_positive_mass - false_negative_mass,
        false_positive_mass,
        false_negative_mass,
    }
}

/// Class-1 bias when both conditional error probabilities equal `c`.
pub fn equal_error_bias(p_z1: f64, c: f64) -> Result<f64> {
    for (name, v) in [("p_z1", p_z1), ("c", c)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("{name} = {v} is not a probability")));
        }
    }
    Ok(c * (1.0 - 2.0 * p_z1))
}

/// `P(Y = 1 | x, Z = 0)` needed to cancel a given `P(Y = 0 | x, Z = 1)`:
/// the false-negative rate times the odds of class 1.
pub fn unbiasedness_minority_error(p_z1: f64, false_negative_cond: f64) -> Result<f64> {
    if !(p_z1 > 0.0 && p_z1 < 1.0) {
        return Err(Error::invalid(format!("p_z1 must lie in (0, 1), got {p_z1}")));
    }
    if !(0.0..=1.0).contains(&false_negative_cond) {
        return Err(Error::invalid(format!("false_negative_cond = {false_negative_cond} is not a probability")));
    }
    let required = false_negative_cond * p_z1 / (1.0 - p_z1);
    if required > 1.0 {
        return Err(Error::Infeasible { required });
    }
    Ok(required)
}

pub fn multiclass_bias_report(spec: &NoisyLabelSpec) -> Result<Vec<LabelBias>> {
    if spec.classes.len() < 2 {
        return Err(Error::invalid("a bias report needs at least 2 classes"));
    }
    Ok((0..spec.classes.len()).map(|u| bias_at(spec, u)).collect())
}

/// Observed-label frequencies from `n` draws of `z` then `y`.
pub fn simulate_observed_probs(spec: &NoisyLabelSpec, n: usize, stream: RngStream) -> Result<Vec<McEstimate>> {
    let labels = parallel_samples(stream, n, |rng| {
        let z = sample_index(&spec.pz_given_x, rand::Rng::random::<f64>(rng));
        sample_index(&spec.error_matrix[z], rand::Rng::random::<f64>(rng))
    });
    (0..spec.classes.len())
        .map(|c| {
            let ind: Vec<f64> = labels.iter().map(|&y| (y == c) as u8 as f64).collect();
            McEstimate::from_samples(&ind)
        })
        .collect()
}
