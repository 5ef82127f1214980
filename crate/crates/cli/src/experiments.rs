//! Validation and execution of the eight experiments.
//!
//! [`plan`] turns parsed params into core types and rejects anything invalid
//! before a single draw is made; [`execute`] runs the plan and produces the
//! CSV rows, sidecar details and chart.

use serde_json::json;
use uqlab::errors_x::{
    error_free_variance, error_prone_variance, mc_errors_x_oracle, naive_slope_attenuation, simulate_naive_slope,
    window_bias_bound, LinearGaussianMeSpec,
};
use uqlab::kl_descent::{run_double_descent, BetaScheme, DescentEstimator, SimSetting};
use uqlab::label_noise::{multiclass_bias_report, observed_class_probs, simulate_observed_probs, NoisyLabelSpec};
use uqlab::missing::{
    classify_mechanism, complete_case_conditional, complete_case_efficiency, population_conditional,
    variance_decomposition, MissingSpec,
};
use uqlab::omitted::{marginal_variance, DiscreteZSpec};
use uqlab::regression::{
    bias_variance_mc, default_ridge_lambda, ols_fit, prediction_interval, Dataset, Fitter, LinearGaussianTruth,
    OlsFitter, OmitColumnsFitter, PinvFitter, RidgeFitter, ZeroFitter,
};
use uqlab::shift::{transportability_report, EnvSpec};
use uqlab::sim::{replicate, Generator};
use uqlab::{McEstimate, RngStream};

use crate::artifact::{flag, int, num, CsvArtifact};
use crate::config::{
    EfficiencyParams, EstimatorName, Experiment, ExperimentConfig, FitterParam, Params, PredictIntervalParams,
};
use crate::svg::{Figure, Panel, Series, Style};
use crate::CliError;

pub const KL_DESCENT_HEADER: &[&str] = &[
    "setting",
    "estimator",
    "p",
    "kl_total_mean",
    "kl_total_se",
    "comp1",
    "comp2_mean",
    "comp2_se",
    "replications",
    "seed",
];
pub const PREDICT_INTERVAL_HEADER: &[&str] = &["x", "y_obs", "fit", "lower", "upper", "level"];
pub const BIAS_VARIANCE_HEADER: &[&str] = &[
    "fitter",
    "n_train",
    "aleatoric",
    "estimation_variance",
    "estimation_variance_se",
    "bias_sq",
    "bias_sq_se",
    "component_sum",
    "direct_mse",
    "direct_mse_se",
    "combined_se",
    "replications",
    "seed",
];
pub const OMITTED_HEADER: &[&str] = &[
    "x",
    "z",
    "weight",
    "cond_mean",
    "cond_var",
    "bias",
    "classification",
    "marginal_mean",
    "marginal_var",
    "mean_cond_var",
    "mean_sq_bias",
];
pub const ERRORS_X_HEADER: &[&str] = &[
    "x",
    "error_free_var",
    "error_prone_var",
    "mean_cond_var",
    "var_cond_mean",
    "mc_var",
    "mc_var_se",
    "window_bias_bound",
    "true_slope",
    "naive_slope",
    "attenuation",
    "sim_slope",
    "sim_slope_se",
];
pub const LABEL_NOISE_HEADER: &[&str] = &[
    "class",
    "true_prob",
    "observed_prob",
    "bias",
    "false_positive_mass",
    "false_negative_mass",
    "sim_prob",
    "sim_prob_se",
];
pub const MISSING_HEADER: &[&str] = &[
    "x",
    "y",
    "mechanism",
    "response_rate",
    "population_prob",
    "complete_case_prob",
    "bias_factor",
    "population_var",
    "respondent_mean",
    "respondent_var",
    "nonrespondent_mean",
    "nonrespondent_var",
    "reconstructed_var",
];
pub const SHIFT_HEADER: &[&str] = &[
    "x",
    "train_mass",
    "deploy_mass",
    "tv",
    "ood",
    "max_tv",
    "identical_superpop",
    "componentwise_equal",
    "z_cond_independent_both",
    "transportable",
];

pub fn header(experiment: Experiment) -> &'static [&'static str] {
    match experiment {
        Experiment::KlDescent => KL_DESCENT_HEADER,
        Experiment::PredictInterval => PREDICT_INTERVAL_HEADER,
        Experiment::BiasVariance => BIAS_VARIANCE_HEADER,
        Experiment::Omitted => OMITTED_HEADER,
        Experiment::ErrorsX => ERRORS_X_HEADER,
        Experiment::LabelNoise => LABEL_NOISE_HEADER,
        Experiment::Missing => MISSING_HEADER,
        Experiment::Shift => SHIFT_HEADER,
    }
}

pub struct Output {
    pub csv: CsvArtifact,
    /// Extra results recorded in the metadata sidecar.
    pub details: serde_json::Value,
    pub figure: Figure,
    /// Short human-readable result for the stderr summary.
    pub headline: String,
}

pub enum Plan {
    /// `(setting label, setting)`; custom coefficient vectors are labelled by position.
    KlDescent(Vec<(String, SimSetting)>),
    PredictInterval(PredictIntervalParams),
    BiasVariance {
        truth: LinearGaussianTruth,
        x0: Vec<f64>,
        n_train: Vec<usize>,
        replications: usize,
        fitters: Vec<Box<dyn Fitter>>,
    },
    Omitted(DiscreteZSpec),
    ErrorsX {
        spec: LinearGaussianMeSpec,
        x_values: Vec<f64>,
        bandwidth: f64,
        mc_draws: usize,
        slope_draws: usize,
    },
    LabelNoise {
        spec: NoisyLabelSpec,
        draws: usize,
    },
    Missing {
        spec: MissingSpec,
        efficiency: Option<EfficiencyParams>,
    },
    Shift {
        train: EnvSpec,
        deploy: EnvSpec,
        tolerance: f64,
    },
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("field `{field}`: {msg}"))
}

fn core(field: &str) -> impl Fn(uqlab::Error) -> CliError + '_ {
    move |e| invalid(field, e)
}

fn ensure(ok: bool, field: &str, msg: impl std::fmt::Display) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(invalid(field, msg))
    }
}

pub fn plan(config: &ExperimentConfig) -> Result<Plan, CliError> {
    match &config.params {
        Params::KlDescent(p) => {
            ensure(!p.settings.is_empty(), "params.settings", "list at least one coefficient setting")?;
            ensure(!p.estimators.is_empty(), "params.estimators", "list at least one estimator")?;
            let lambda = p.ridge_lambda.unwrap_or_else(|| default_ridge_lambda(p.sigma * p.sigma));
            let mut runs = Vec::new();
            for (i, scheme) in p.settings.iter().enumerate() {
                let label = match scheme {
                    BetaScheme::Custom(_) => format!("custom-{}", i + 1),
                    named => named.label().to_string(),
                };
                for est in &p.estimators {
                    let estimator = match est {
                        EstimatorName::Pinv => DescentEstimator::Pinv,
                        EstimatorName::Ridge => DescentEstimator::Ridge { lambda },
                    };
                    let s = SimSetting {
                        n: p.n,
                        p_max: p.p_max,
                        sigma: p.sigma,
                        beta_scheme: scheme.clone(),
                        estimator,
                        replications: p.replications,
                        p_grid: p.p_grid.clone().unwrap_or_else(|| (1..=p.p_max).collect()),
                        base_seed: config.seed,
                    };
                    s.validate().map_err(core("params"))?;
                    runs.push((label.clone(), s));
                }
            }
            Ok(Plan::KlDescent(runs))
        }
        Params::PredictInterval(p) => {
            ensure(p.n >= 3, "params.n", format!("need at least 3 points, got {}", p.n))?;
            ensure(p.sigma > 0.0 && p.sigma.is_finite(), "params.sigma", "must be positive")?;
            let [lo, hi] = p.x_range;
            ensure(lo.is_finite() && hi.is_finite() && lo < hi, "params.x_range", "need finite lo < hi")?;
            ensure(p.level > 0.0 && p.level < 1.0, "params.level", "must lie in (0, 1)")?;
            ensure(
                p.intercept.is_finite() && p.slope.is_finite(),
                "params",
                "intercept and slope must be finite",
            )?;
            ensure(
                p.coverage_replications != 1,
                "params.coverage_replications",
                "use 0 to skip, or at least 2",
            )?;
            Ok(Plan::PredictInterval(p.clone()))
        }
        Params::BiasVariance(p) => {
            let truth = LinearGaussianTruth {
                beta: p.beta.clone(),
                sigma2: p.sigma2,
            };
            truth.validate().map_err(core("params"))?;
            let k = p.beta.len();
            ensure(p.x0.len() == k, "params.x0", format!("has length {} but beta has length {k}", p.x0.len()))?;
            ensure(p.x0.iter().all(|v| v.is_finite()), "params.x0", "must be finite")?;
            ensure(p.replications >= 100, "params.replications", "need at least 100")?;
            ensure(!p.n_train.is_empty(), "params.n_train", "list at least one training size")?;
            ensure(!p.fitters.is_empty(), "params.fitters", "list at least one fitter")?;
            let n_min = *p.n_train.iter().min().unwrap();
            let mut fitters: Vec<Box<dyn Fitter>> = Vec::new();
            for (i, f) in p.fitters.iter().enumerate() {
                let field = format!("params.fitters[{i}]");
                let needs = match f {
                    FitterParam::Ols => k,
                    FitterParam::Omit { columns } => {
                        ensure(columns.iter().all(|&c| c < k), &field, format!("columns must be below {k}"))?;
                        (0..k).filter(|j| !columns.contains(j)).count()
                    }
                    _ => 0,
                };
                ensure(
                    n_min >= needs.max(1),
                    &field,
                    format!("least squares on {needs} columns needs n_train >= {needs}, got {n_min}"),
                )?;
                fitters.push(match f {
                    FitterParam::Ols => Box::new(OlsFitter),
                    FitterParam::Pinv => Box::new(PinvFitter),
                    FitterParam::Zero => Box::new(ZeroFitter),
                    FitterParam::Ridge { lambda } => {
                        let lambda = lambda.unwrap_or_else(|| default_ridge_lambda(p.sigma2));
                        ensure(lambda > 0.0 && lambda.is_finite(), &field, "lambda must be positive")?;
                        Box::new(RidgeFitter { lambda })
                    }
                    FitterParam::Omit { columns } => Box::new(OmitColumnsFitter { omit: columns.clone() }),
                });
            }
            Ok(Plan::BiasVariance {
                truth,
                x0: p.x0.clone(),
                n_train: p.n_train.clone(),
                replications: p.replications,
                fitters,
            })
        }
        Params::Omitted(p) => {
            let spec = DiscreteZSpec {
                x_values: p.x_values.clone(),
                z_values: p.z_values.clone(),
                pz_given_x: p.pz_given_x.clone(),
                mean_y: p.mean_y.clone(),
                var_y: p.var_y.clone(),
            };
            spec.validate().map_err(core("params"))?;
            Ok(Plan::Omitted(spec))
        }
        Params::ErrorsX(p) => {
            let m = p.model;
            let spec = LinearGaussianMeSpec {
                mu_z: m.mu_z,
                tau2: m.tau2,
                omega2: m.omega2,
                alpha: m.alpha,
                gamma: m.gamma,
                sigma2: m.sigma2,
            };
            spec.validate().map_err(core("params.model"))?;
            ensure(!p.x_values.is_empty(), "params.x_values", "list at least one x")?;
            ensure(p.x_values.iter().all(|v| v.is_finite()), "params.x_values", "must be finite")?;
            ensure(p.bandwidth > 0.0 && p.bandwidth.is_finite(), "params.bandwidth", "must be positive")?;
            ensure(p.mc_draws >= 100_000, "params.mc_draws", "need at least 100000")?;
            ensure(p.slope_draws >= 3, "params.slope_draws", "need at least 3")?;
            Ok(Plan::ErrorsX {
                spec,
                x_values: p.x_values.clone(),
                bandwidth: p.bandwidth,
                mc_draws: p.mc_draws,
                slope_draws: p.slope_draws,
            })
        }
        Params::LabelNoise(p) => {
            let spec = NoisyLabelSpec::new(p.classes.clone(), p.pz_given_x.clone(), p.error_matrix.clone())
                .map_err(core("params"))?;
            ensure(p.classes.len() >= 2, "params.classes", "need at least 2 classes")?;
            ensure(p.simulate_draws >= 2, "params.simulate_draws", "need at least 2")?;
            Ok(Plan::LabelNoise {
                spec,
                draws: p.simulate_draws,
            })
        }
        Params::Missing(p) => {
            let spec = MissingSpec {
                x_values: p.x_values.clone(),
                y_values: p.y_values.clone(),
                joint: p.joint.clone(),
                response: p.response.clone(),
            };
            spec.validate().map_err(core("params"))?;
            for x in &spec.x_values {
                let rate = spec.response_rate(x).map_err(core("params"))?;
                ensure(rate > 0.0, "params.response", format!("x = `{x}` has no respondents"))?;
            }
            if let Some(e) = &p.efficiency {
                ensure(
                    (0.0..1.0).contains(&e.cell_missing_rate),
                    "params.efficiency.cell_missing_rate",
                    "must lie in [0, 1)",
                )?;
                ensure(e.n >= 1, "params.efficiency.n", "need at least 1 unit")?;
                ensure(e.replications >= 2, "params.efficiency.replications", "need at least 2")?;
            }
            Ok(Plan::Missing {
                spec,
                efficiency: p.efficiency,
            })
        }
        Params::Shift(p) => {
            p.train.validate().map_err(core("params.train"))?;
            p.deploy.validate().map_err(core("params.deploy"))?;
            ensure(p.tolerance >= 0.0 && p.tolerance.is_finite(), "params.tolerance", "must be non-negative")?;
            Ok(Plan::Shift {
                train: p.train.clone(),
                deploy: p.deploy.clone(),
                tolerance: p.tolerance,
            })
        }
    }
}

pub fn execute(plan: &Plan, seed: u64) -> Result<Output, CliError> {
    match plan {
        Plan::KlDescent(runs) => kl_descent(runs, seed),
        Plan::PredictInterval(p) => predict_interval(p, seed),
        Plan::BiasVariance {
            truth,
            x0,
            n_train,
            replications,
            fitters,
        } => bias_variance(truth, x0, n_train, *replications, fitters, seed),
        Plan::Omitted(spec) => omitted(spec),
        Plan::ErrorsX {
            spec,
            x_values,
            bandwidth,
            mc_draws,
            slope_draws,
        } => errors_x(spec, x_values, *bandwidth, *mc_draws, *slope_draws, seed),
        Plan::LabelNoise { spec, draws } => label_noise(spec, *draws, seed),
        Plan::Missing { spec, efficiency } => missing(spec, efficiency.as_ref(), seed),
        Plan::Shift {
            train,
            deploy,
            tolerance,
        } => shift(train, deploy, *tolerance),
    }
}

fn kl_descent(runs: &[(String, SimSetting)], seed: u64) -> Result<Output, CliError> {
    let mut csv = CsvArtifact::new(KL_DESCENT_HEADER);
    let mut details = Vec::new();
    let mut headline = Vec::new();
    let mut settings: Vec<&str> = Vec::new();
    // (setting, estimator, p, total, total_se, comp1, comp2, comp2_se)
    let mut curves = Vec::new();
    for (setting, s) in runs {
        let setting = setting.as_str();
        let curve = run_double_descent(s).map_err(|e| CliError::from_core("kl-descent", e))?;
        let est = s.estimator.label();
        if !settings.contains(&setting) {
            settings.push(setting);
        }
        for pt in &curve.points {
            csv.push(vec![
                setting.into(),
                est.into(),
                int(pt.p as u64),
                num(pt.kl_total.mean),
                num(pt.kl_total.std_error),
                num(pt.comp1),
                num(pt.comp2.mean),
                num(pt.comp2.std_error),
                int(s.replications as u64),
                int(seed),
            ]);
        }
        let best = curve
            .points
            .iter()
            .min_by(|a, b| a.kl_total.mean.total_cmp(&b.kl_total.mean))
            .expect("p_grid is nonempty");
        headline.push(format!("{setting}/{est} min KL {} at p={}", num(best.kl_total.mean), best.p));
        let lambda = match s.estimator {
            DescentEstimator::Ridge { lambda } => Some(lambda),
            DescentEstimator::Pinv => None,
        };
        details.push(json!({
            "setting": setting,
            "estimator": est,
            "pinv_switch_p": curve.pinv_switch_p,
            "ridge_lambda": lambda,
        }));
        curves.push((setting, est, curve));
    }

    let metrics: [(&str, bool); 3] = [("expected KL", true), ("contribution 1", false), ("contribution 2", true)];
    let mut panels = Vec::new();
    for (m, (title, log_y)) in metrics.iter().enumerate() {
        for setting in &settings {
            let series = curves
                .iter()
                .filter(|c| c.0 == *setting)
                .map(|(_, est, curve)| {
                    let x: Vec<f64> = curve.points.iter().map(|p| p.p as f64).collect();
                    let (y, e): (Vec<f64>, Option<Vec<f64>>) = match m {
                        0 => (
                            curve.points.iter().map(|p| p.kl_total.mean).collect(),
                            Some(curve.points.iter().map(|p| p.kl_total.std_error).collect()),
                        ),
                        1 => (curve.points.iter().map(|p| p.comp1).collect(), None),
                        _ => (
                            curve.points.iter().map(|p| p.comp2.mean).collect(),
                            Some(curve.points.iter().map(|p| p.comp2.std_error).collect()),
                        ),
                    };
                    let s = Series::new(*est, x, y);
                    match e {
                        Some(e) => s.with_err(e),
                        None => s,
                    }
                })
                .collect();
            panels.push(Panel {
                title: format!("{setting} coefficients: {title}"),
                x_label: "number of covariates p".into(),
                y_label: title.to_string(),
                log_y: *log_y,
                series,
            });
        }
    }
    Ok(Output {
        csv,
        details: json!({ "runs": details }),
        figure: Figure {
            panels,
            columns: settings.len(),
        },
        headline: headline.join("; "),
    })
}

/// Points `(x_i, y_i)` with the design matrix `[1, x]`.
fn line_dataset(p: &PredictIntervalParams, rng: &mut Generator) -> Result<(Vec<f64>, Vec<f64>, Dataset), uqlab::Error> {
    let [lo, hi] = p.x_range;
    let xs: Vec<f64> = (0..p.n).map(|_| draw::uniform(rng, lo, hi)).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| p.intercept + p.slope * x + p.sigma * draw::normal(rng))
        .collect();
    let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![1.0, x]).collect();
    let data = Dataset::from_rows(&rows, ys.clone())?;
    Ok((xs, ys, data))
}

mod draw {
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};
    use uqlab::sim::Generator;

    pub fn uniform(rng: &mut Generator, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * rng.random::<f64>()
    }

    pub fn normal(rng: &mut Generator) -> f64 {
        StandardNormal.sample(rng)
    }
}

/// Share of replications whose prediction interval covers a fresh response
/// at a fresh uniformly drawn `x0`.
pub fn interval_coverage(p: &PredictIntervalParams, reps: usize, stream: RngStream) -> Result<McEstimate, uqlab::Error> {
    let hits = replicate(stream, reps, |_, s| {
        let mut rng = s.generator();
        let (_, _, data) = line_dataset(p, &mut rng)?;
        let fit = ols_fit(&data)?;
        let x0 = draw::uniform(&mut rng, p.x_range[0], p.x_range[1]);
        let y0 = p.intercept + p.slope * x0 + p.sigma * draw::normal(&mut rng);
        let pi = prediction_interval(&fit, &data, &[1.0, x0], p.level)?;
        Ok((pi.lower <= y0 && y0 <= pi.upper) as u8 as f64)
    })?;
    McEstimate::from_samples(&hits)
}

fn predict_interval(p: &PredictIntervalParams, seed: u64) -> Result<Output, CliError> {
    let err = |e| CliError::from_core("predict-interval", e);
    let (xs, ys, data) = line_dataset(p, &mut RngStream::new(seed, 0).generator()).map_err(err)?;
    let fit = ols_fit(&data).map_err(err)?;
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));

    let mut csv = CsvArtifact::new(PREDICT_INTERVAL_HEADER);
    let (mut px, mut py, mut pfit, mut pw, mut truth) = (vec![], vec![], vec![], vec![], vec![]);
    for &i in &order {
        let pi = prediction_interval(&fit, &data, &[1.0, xs[i]], p.level).map_err(err)?;
        csv.push(vec![num(xs[i]), num(ys[i]), num(pi.center), num(pi.lower), num(pi.upper), num(p.level)]);
        px.push(xs[i]);
        py.push(ys[i]);
        pfit.push(pi.center);
        pw.push(0.5 * (pi.upper - pi.lower));
        truth.push(p.intercept + p.slope * xs[i]);
    }

    let mut details = json!({
        "fitted_intercept": fit.coefficients[0],
        "fitted_slope": fit.coefficients[1],
        "sigma2_hat": fit.sigma2_hat,
    });
    let mut headline = format!(
        "fit {} + {} x",
        num(fit.coefficients[0]),
        num(fit.coefficients[1])
    );
    if p.coverage_replications > 0 {
        let cov = interval_coverage(p, p.coverage_replications, RngStream::new(seed, 1)).map_err(err)?;
        details["coverage"] = json!({
            "replications": p.coverage_replications,
            "rate": cov.mean,
            "std_error": cov.std_error,
        });
        headline.push_str(&format!(
            ", coverage {} (se {}) over {} replications",
            num(cov.mean),
            num(cov.std_error),
            p.coverage_replications
        ));
    }
    let level = format!("{}% prediction interval", num(100.0 * p.level));
    let panel = Panel {
        title: "simple linear model".into(),
        x_label: "x".into(),
        y_label: "y".into(),
        log_y: false,
        series: vec![
            Series::new(format!("fit, {level}"), px.clone(), pfit)
                .with_err(pw)
                .styled(Style::Dashed),
            Series::new("true mean", px.clone(), truth),
            Series::new("observed", px, py).styled(Style::Markers),
        ],
    };
    Ok(Output {
        csv,
        details,
        figure: Figure {
            panels: vec![panel],
            columns: 1,
        },
        headline,
    })
}

fn bias_variance(
    truth: &LinearGaussianTruth,
    x0: &[f64],
    n_train: &[usize],
    reps: usize,
    fitters: &[Box<dyn Fitter>],
    seed: u64,
) -> Result<Output, CliError> {
    let mut csv = CsvArtifact::new(BIAS_VARIANCE_HEADER);
    let mut worst = 0.0_f64;
    let mut curves: Vec<(String, Vec<f64>, Vec<f64>)> =
        fitters.iter().map(|f| (f.name(), Vec::new(), Vec::new())).collect();
    for (j, &n) in n_train.iter().enumerate() {
        // Every fitter sees the same training sets at a given size.
        let stream = RngStream::new(seed, j as u64);
        for (k, f) in fitters.iter().enumerate() {
            let r = bias_variance_mc(truth, f.as_ref(), x0, n, reps, stream)
                .map_err(|e| CliError::from_core("bias-variance", e))?;
            let gap = (r.component_sum() - r.direct_mse.mean).abs() / r.combined_se();
            worst = worst.max(gap);
            csv.push(vec![
                f.name(),
                int(n as u64),
                num(r.aleatoric),
                num(r.estimation_variance.mean),
                num(r.estimation_variance.std_error),
                num(r.bias_sq.mean),
                num(r.bias_sq.std_error),
                num(r.component_sum()),
                num(r.direct_mse.mean),
                num(r.direct_mse.std_error),
                num(r.combined_se()),
                int(reps as u64),
                int(seed),
            ]);
            curves[k].1.push(r.direct_mse.mean);
            curves[k].2.push(r.direct_mse.std_error);
        }
    }
    let xs: Vec<f64> = n_train.iter().map(|&n| n as f64).collect();
    let series = curves
        .into_iter()
        .map(|(name, y, e)| Series::new(name, xs.clone(), y).with_err(e))
        .collect();
    Ok(Output {
        csv,
        details: json!({ "max_identity_gap_in_se": worst }),
        figure: Figure {
            panels: vec![Panel {
                title: "expected squared prediction error".into(),
                x_label: "training size n".into(),
                y_label: "mean squared error".into(),
                log_y: false,
                series,
            }],
            columns: 1,
        },
        headline: format!("largest |components - direct mse| = {} SE", num(worst)),
    })
}

fn omitted(spec: &DiscreteZSpec) -> Result<Output, CliError> {
    let mut csv = CsvArtifact::new(OMITTED_HEADER);
    let idx: Vec<f64> = (0..spec.x_values.len()).map(|i| i as f64).collect();
    let (mut marg, mut mean_cv) = (vec![], vec![]);
    let mut per_z: Vec<Vec<f64>> = vec![Vec::new(); spec.z_values.len()];
    for x in &spec.x_values {
        let r = marginal_variance(spec, x).map_err(|e| CliError::from_core("omitted", e))?;
        for (k, t) in r.per_z.iter().enumerate() {
            csv.push(vec![
                x.clone(),
                t.z.clone(),
                num(t.weight),
                num(t.cond_mean),
                num(t.cond_var),
                num(t.bias),
                t.classification.label().into(),
                num(r.marginal_mean),
                num(r.marginal_var),
                num(r.mean_cond_var),
                num(r.mean_sq_bias),
            ]);
            per_z[k].push(t.cond_var);
        }
        marg.push(r.marginal_var);
        mean_cv.push(r.mean_cond_var);
    }
    let headline = format!("marginal variance at `{}` = {}", spec.x_values[0], num(marg[0]));
    let mut series = vec![
        Series::new("Var(Y|x)", idx.clone(), marg),
        Series::new("E[Var(Y|x,Z)]", idx.clone(), mean_cv).styled(Style::Dashed),
    ];
    for (k, z) in spec.z_values.iter().enumerate() {
        series.push(Series::new(format!("Var(Y|x,z={z})"), idx.clone(), per_z[k].clone()).styled(Style::Markers));
    }
    Ok(Output {
        csv,
        details: json!({ "x_index": spec.x_values }),
        figure: Figure {
            panels: vec![Panel {
                title: "omitted variable: variance by x".into(),
                x_label: "x index".into(),
                y_label: "variance".into(),
                log_y: false,
                series,
            }],
            columns: 1,
        },
        headline,
    })
}

fn errors_x(
    spec: &LinearGaussianMeSpec,
    x_values: &[f64],
    bandwidth: f64,
    mc_draws: usize,
    slope_draws: usize,
    seed: u64,
) -> Result<Output, CliError> {
    let err = |e| CliError::from_core("errors-x", e);
    let free = error_free_variance(spec);
    let prone = error_prone_variance(spec).map_err(err)?;
    let att = naive_slope_attenuation(spec).map_err(err)?;
    let bound = window_bias_bound(spec, bandwidth).map_err(err)?;
    let slope = simulate_naive_slope(spec, slope_draws, RngStream::new(seed, x_values.len() as u64)).map_err(err)?;
    let mut csv = CsvArtifact::new(ERRORS_X_HEADER);
    let (mut mc, mut mc_se) = (vec![], vec![]);
    for (i, &x) in x_values.iter().enumerate() {
        let est = mc_errors_x_oracle(spec, x, bandwidth, mc_draws, RngStream::new(seed, i as u64)).map_err(err)?;
        csv.push(vec![
            num(x),
            num(free),
            num(prone.total),
            num(prone.mean_cond_var),
            num(prone.var_cond_mean),
            num(est.mean),
            num(est.std_error),
            num(bound),
            num(att.true_slope),
            num(att.naive_slope),
            num(att.attenuation),
            num(slope.slope),
            num(slope.std_error),
        ]);
        mc.push(est.mean);
        mc_se.push(est.std_error);
    }
    let n = x_values.len();
    let series = vec![
        Series::new("Var(Y|x) closed form", x_values.to_vec(), vec![prone.total; n]),
        Series::new("Var(Y|z) error free", x_values.to_vec(), vec![free; n]).styled(Style::Dashed),
        Series::new("localized simulation", x_values.to_vec(), mc)
            .with_err(mc_se)
            .styled(Style::Markers),
    ];
    Ok(Output {
        csv,
        details: json!({
            "bandwidth": bandwidth,
            "mc_draws": mc_draws,
            "slope_draws": slope_draws,
        }),
        figure: Figure {
            panels: vec![Panel {
                title: "errors in x: conditional variance".into(),
                x_label: "observed x".into(),
                y_label: "variance".into(),
                log_y: false,
                series,
            }],
            columns: 1,
        },
        headline: format!(
            "Var(Y|x) = {} vs error-free {}, attenuation {}",
            num(prone.total),
            num(free),
            num(att.attenuation)
        ),
    })
}

fn label_noise(spec: &NoisyLabelSpec, draws: usize, seed: u64) -> Result<Output, CliError> {
    let err = |e| CliError::from_core("label-noise", e);
    let observed = observed_class_probs(spec);
    let report = multiclass_bias_report(spec).map_err(err)?;
    let sim = simulate_observed_probs(spec, draws, RngStream::new(seed, 0)).map_err(err)?;
    let mut csv = CsvArtifact::new(LABEL_NOISE_HEADER);
    for (k, b) in report.iter().enumerate() {
        csv.push(vec![
            b.class.clone(),
            num(spec.pz_given_x()[k]),
            num(observed[k]),
            num(b.bias),
            num(b.false_positive_mass),
            num(b.false_negative_mass),
            num(sim[k].mean),
            num(sim[k].std_error),
        ]);
    }
    let idx: Vec<f64> = (0..observed.len()).map(|i| i as f64).collect();
    let series = vec![
        Series::new("P(Z=c|x)", idx.clone(), spec.pz_given_x().to_vec()).styled(Style::Markers),
        Series::new("P(Y=c|x)", idx.clone(), observed).styled(Style::Markers),
        Series::new("simulated", idx, sim.iter().map(|m| m.mean).collect())
            .with_err(sim.iter().map(|m| m.std_error).collect())
            .styled(Style::Markers),
    ];
    let worst = report
        .iter()
        .max_by(|a, b| a.bias.abs().total_cmp(&b.bias.abs()))
        .expect("at least two classes");
    Ok(Output {
        csv,
        details: json!({ "classes": spec.classes(), "simulate_draws": draws }),
        figure: Figure {
            panels: vec![Panel {
                title: "label noise: class probabilities".into(),
                x_label: "class index".into(),
                y_label: "probability".into(),
                log_y: false,
                series,
            }],
            columns: 1,
        },
        headline: format!("largest bias {} for class `{}`", num(worst.bias), worst.class),
    })
}

fn missing(spec: &MissingSpec, efficiency: Option<&EfficiencyParams>, seed: u64) -> Result<Output, CliError> {
    let err = |e| CliError::from_core("missing", e);
    let mechanism = classify_mechanism(spec);
    let mut csv = CsvArtifact::new(MISSING_HEADER);
    let (mut pop_s, mut cc_s) = (vec![], vec![]);
    for x in &spec.x_values {
        let pop = population_conditional(spec, x).map_err(err)?;
        let cc = complete_case_conditional(spec, x).map_err(err)?;
        let rate = spec.response_rate(x).map_err(err)?;
        let d = variance_decomposition(spec, x).map_err(err)?;
        let stratum = |r: u8| d.per_stratum.iter().find(|s| s.r == r);
        let moments = |r: u8| stratum(r).map_or((String::new(), String::new()), |s| (num(s.cond_mean), num(s.cond_var)));
        let (m1, v1) = moments(1);
        let (m0, v0) = moments(0);
        for (k, y) in spec.y_values.iter().enumerate() {
            csv.push(vec![
                x.clone(),
                num(*y),
                mechanism.label().into(),
                num(rate),
                num(pop[k]),
                num(cc.probs[k]),
                num(cc.bias_factor[k]),
                num(d.population_var),
                m1.clone(),
                v1.clone(),
                m0.clone(),
                v0.clone(),
                num(d.reconstructed_var),
            ]);
            pop_s.push(pop[k]);
            cc_s.push(cc.probs[k]);
        }
    }
    let mut details = json!({ "mechanism": mechanism.label() });
    let mut headline = format!("mechanism {}", mechanism.label());
    if let Some(e) = efficiency {
        let eff = complete_case_efficiency(e.features, e.cell_missing_rate, e.n, e.replications, RngStream::new(seed, 0))
            .map_err(err)?;
        details["efficiency"] = json!({
            "features": e.features,
            "cell_missing_rate": e.cell_missing_rate,
            "analytic_fraction": eff.analytic_fraction,
            "simulated_fraction": eff.simulated_fraction.mean,
            "simulated_se": eff.simulated_fraction.std_error,
        });
        headline.push_str(&format!(
            ", complete-case share {} (simulated {})",
            num(eff.analytic_fraction),
            num(eff.simulated_fraction.mean)
        ));
    }
    let idx: Vec<f64> = (0..pop_s.len()).map(|i| i as f64).collect();
    Ok(Output {
        csv,
        details,
        figure: Figure {
            panels: vec![Panel {
                title: "missing data: population vs complete case".into(),
                x_label: "(x, y) cell index".into(),
                y_label: "P(y|x)".into(),
                log_y: false,
                series: vec![
                    Series::new("population", idx.clone(), pop_s).styled(Style::Markers),
                    Series::new("complete case", idx, cc_s).styled(Style::Markers),
                ],
            }],
            columns: 1,
        },
        headline,
    })
}

fn shift(train: &EnvSpec, deploy: &EnvSpec, tolerance: f64) -> Result<Output, CliError> {
    let r = transportability_report(train, deploy, tolerance).map_err(|e| CliError::from_core("shift", e))?;
    let mut csv = CsvArtifact::new(SHIFT_HEADER);
    for s in &r.per_x {
        csv.push(vec![
            s.x.clone(),
            num(s.train_mass),
            num(s.deploy_mass),
            num(s.tv),
            flag(s.ood),
            num(r.max_tv),
            flag(r.identical_superpop),
            flag(r.componentwise_equal),
            flag(r.z_cond_independent_both),
            flag(r.transportable),
        ]);
    }
    let idx: Vec<f64> = (0..r.per_x.len()).map(|i| i as f64).collect();
    Ok(Output {
        csv,
        details: json!({ "ood_points": r.ood_points, "tolerance": tolerance }),
        figure: Figure {
            panels: vec![Panel {
                title: "conditional shift by x".into(),
                x_label: "x index".into(),
                y_label: "total variation".into(),
                log_y: false,
                series: vec![Series::new("TV(f_train(y|x), f_deploy(y|x))", idx, r.per_x.iter().map(|s| s.tv).collect())],
            }],
            columns: 1,
        },
        headline: format!(
            "max TV {}, transportable {}",
            num(r.max_tv),
            r.transportable
        ),
    })
}
