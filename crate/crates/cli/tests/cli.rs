use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use uqlab_cli::experiments::header;
use uqlab_cli::Experiment;

fn uqlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uqlab")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run_config(dir: &Path, text: &str, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = write_config(dir, "config.json", text);
    let out = dir.join("out");
    let mut args = vec!["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (uqlab(&args), out)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: [(&str, &str); 8] = [
    (
        "kl-descent",
        r#"{"experiment": "kl-descent", "seed": 1,
            "params": {"n": 10, "p_max": 15, "sigma": 0.5, "replications": 4, "p_grid": [3, 9, 10, 12],
                       "settings": [{"custom": [1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0]}],
                       "estimators": ["pinv", "ridge"]}}"#,
    ),
    ("predict-interval", r#"{"experiment": "predict-interval", "seed": 1}"#),
    (
        "bias-variance",
        r#"{"experiment": "bias-variance", "seed": 1, "params": {"replications": 100}}"#,
    ),
    (
        "omitted",
        r#"{"experiment": "omitted", "seed": 1, "params": {"x_values": ["x"], "z_values": ["0", "1"],
            "pz_given_x": [[0.5, 0.5]], "mean_y": [[0, 1]], "var_y": [[0.1, 0.2]]}}"#,
    ),
    (
        "errors-x",
        r#"{"experiment": "errors-x", "seed": 1, "params": {
            "model": {"mu_z": 0, "tau2": 1, "omega2": 1, "alpha": 0, "gamma": 1, "sigma2": 0.1},
            "x_values": [0], "mc_draws": 100000, "slope_draws": 1000}}"#,
    ),
    (
        "label-noise",
        r#"{"experiment": "label-noise", "seed": 1, "params": {"classes": ["0", "1"], "pz_given_x": [0.2, 0.8],
            "error_matrix": [[0.9, 0.1], [0.1, 0.9]], "simulate_draws": 1000}}"#,
    ),
    (
        "missing",
        r#"{"experiment": "missing", "seed": 1, "params": {"x_values": ["x"], "y_values": [0, 1],
            "joint": [[0.5, 0.5]], "response": [[0.8, 0.4]]}}"#,
    ),
    (
        "shift",
        r#"{"experiment": "shift", "seed": 1, "params": {
            "train": {"x_values": ["0"], "y_values": ["0", "1"], "z_values": ["0", "1"],
                      "f_y_given_xz": [[[1, 0], [0, 1]]], "f_z_given_x": [[0.8, 0.2]], "f_x": [1]},
            "deploy": {"x_values": ["0"], "y_values": ["0", "1"], "z_values": ["0", "1"],
                       "f_y_given_xz": [[[1, 0], [0, 1]]], "f_z_given_x": [[0.2, 0.8]], "f_x": [1]}}}"#,
    ),
];

const GOLDEN_HEADERS: [(&str, &str); 8] = [
    ("kl-descent", "setting,estimator,p,kl_total_mean,kl_total_se,comp1,comp2_mean,comp2_se,replications,seed"),
    ("predict-interval", "x,y_obs,fit,lower,upper,level"),
    (
        "bias-variance",
        "fitter,n_train,aleatoric,estimation_variance,estimation_variance_se,bias_sq,bias_sq_se,component_sum,direct_mse,direct_mse_se,combined_se,replications,seed",
    ),
    (
        "omitted",
        "x,z,weight,cond_mean,cond_var,bias,classification,marginal_mean,marginal_var,mean_cond_var,mean_sq_bias",
    ),
    (
        "errors-x",
        "x,error_free_var,error_prone_var,mean_cond_var,var_cond_mean,mc_var,mc_var_se,window_bias_bound,true_slope,naive_slope,attenuation,sim_slope,sim_slope_se",
    ),
    (
        "label-noise",
        "class,true_prob,observed_prob,bias,false_positive_mass,false_negative_mass,sim_prob,sim_prob_se",
    ),
    (
        "missing",
        "x,y,mechanism,response_rate,population_prob,complete_case_prob,bias_factor,population_var,respondent_mean,respondent_var,nonrespondent_mean,nonrespondent_var,reconstructed_var",
    ),
    (
        "shift",
        "x,train_mass,deploy_mass,tv,ood,max_tv,identical_superpop,componentwise_equal,z_cond_independent_both,transportable",
    ),
];

#[test]
fn golden_headers_for_every_experiment() {
    for ((name, text), (golden_name, golden)) in SMALL.iter().zip(GOLDEN_HEADERS) {
        assert_eq!(*name, golden_name);
        let dir = tempfile::tempdir().unwrap();
        let (o, out) = run_config(dir.path(), text, &[]);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
        let csv = fs::read_to_string(out.join(format!("{name}.csv"))).unwrap();
        assert_eq!(csv.lines().next().unwrap(), golden, "{name}");
        let exp = Experiment::ALL.iter().find(|e| e.name() == *name).unwrap();
        assert_eq!(header(*exp).join(","), golden);
        let meta: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join(format!("{name}.meta.json"))).unwrap()).unwrap();
        assert_eq!(meta["seed"], 1);
        assert_eq!(meta["config"]["experiment"], *name);
        assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
        // One summary line per run.
        assert_eq!(stderr(&o).lines().count(), 1, "{}", stderr(&o));
    }
}

#[test]
fn kl_descent_rows_and_panels() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"experiment": "kl-descent", "seed": 9, "plot": true,
        "params": {"n": 10, "p_max": 15, "sigma": 0.5, "replications": 4, "p_grid": [3, 9, 10, 12, 15],
                   "settings": [{"custom": [1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0]},
                                {"custom": [1, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05, 0.02, 0, 0, 0]}]}}"#;
    let (o, out) = run_config(dir.path(), text, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("kl-descent.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 5);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",4,9")));
    let svg = fs::read_to_string(out.join("kl-descent.svg")).unwrap();
    for title in ["expected KL", "contribution 1", "contribution 2"] {
        assert_eq!(svg.matches(title).count(), 2 * 2, "{title}");
    }
    assert_eq!(svg.matches("<polyline").count(), 6);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("kl-descent.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["details"]["runs"][0]["pinv_switch_p"], 10);
}

#[test]
fn rerun_and_thread_count_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL[0].1);
    let mut outputs = Vec::new();
    for (tag, threads) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let out = dir.path().join(tag);
        let o = uqlab(&[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--threads",
            threads,
            "--plot",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push(["kl-descent.csv", "kl-descent.svg", "kl-descent.meta.json"].map(|f| fs::read(out.join(f)).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let (a, out) = run_config(dir.path(), SMALL[1].1, &["--seed", "77"]);
    assert!(a.status.success());
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("predict-interval.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 77);
    assert_eq!(meta["config"]["seed"], 77);
}

#[test]
fn predict_interval_band_is_narrowest_near_the_centre() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_config(dir.path(), SMALL[1].1, &[]);
    assert!(o.status.success());
    let mut rdr = csv::Reader::from_path(out.join("predict-interval.csv")).unwrap();
    let rows: Vec<Vec<f64>> = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 20);
    assert!(rows.windows(2).all(|w| w[0][0] <= w[1][0]), "sorted by x");
    let widths: Vec<f64> = rows.iter().map(|r| r[4] - r[3]).collect();
    for r in &rows {
        assert!(r[3] < r[2] && r[2] < r[4]);
        assert_eq!(r[5], 0.9);
    }
    let narrowest = widths.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(widths[0] > narrowest && widths[19] > narrowest);
}

#[test]
fn invalid_label_noise_row_exits_2_and_names_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"experiment": "label-noise", "seed": 1, "plot": true, "params": {"classes": ["cat", "dog"],
        "pz_given_x": [0.5, 0.5], "error_matrix": [[0.9, 0.1], [0.3, 0.9]]}}"#;
    let (o, out) = run_config(dir.path(), text, &[]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("error_matrix row 1") && e.contains("dog"), "{e}");
    assert!(!out.exists(), "nothing is written on failure");
}

#[test]
fn malformed_json_reports_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = run_config(dir.path(), "{\n  \"experiment\": \"shift\",\n  \"seed\": 1\n  \"params\": {}\n}", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4, column"), "{}", stderr(&o));

    let (o, _) = run_config(
        dir.path(),
        "{\"experiment\": \"errors-x\", \"seed\": 1,\n \"params\": {\"model\": {\"mu_z\": 0},\n \"x_values\": [0]}}",
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("line 2") && e.contains("params.model"), "{e}");
}

#[test]
fn numerical_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"experiment": "errors-x", "seed": 1, "params": {
        "model": {"mu_z": 0, "tau2": 1, "omega2": 1, "alpha": 0, "gamma": 1, "sigma2": 0.1},
        "x_values": [0], "bandwidth": 1e-9, "mc_draws": 100000}}"#;
    let (o, out) = run_config(dir.path(), text, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("errors-x"));
    assert!(!out.exists());
}

#[test]
fn io_failures_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = uqlab(&["--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));

    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL[3].1);
    let o = uqlab(&["--config", cfg.to_str().unwrap(), "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn shipped_configs_parse_and_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&root).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let config = uqlab_cli::config::parse(&text, &Default::default())
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        uqlab_cli::experiments::plan(&config).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 8);
}
