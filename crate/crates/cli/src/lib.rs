//! Configuration-driven runner for the `uqlab` experiments.
//!
//! A run reads one JSON config, validates every parameter against the core
//! types, computes, and only then writes `<experiment>.csv`, a
//! `<experiment>.meta.json` sidecar and optionally `<experiment>.svg`.

pub mod artifact;
pub mod config;
pub mod experiments;
pub mod svg;

use std::path::PathBuf;
use std::time::Instant;

use thiserror::Error;

pub use config::{Experiment, ExperimentConfig, Overrides};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure in {module}: {message}")]
    Numerical { module: &'static str, message: String },
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical { .. } => 3,
            CliError::Io(_) => 4,
        }
    }

    /// Map a core error raised while computing `module`.
    pub(crate) fn from_core(module: &'static str, err: uqlab::Error) -> Self {
        if err.is_numerical() || matches!(err, uqlab::Error::SparseWindow { .. }) {
            CliError::Numerical { module, message: err.to_string() }
        } else {
            CliError::Config(format!("{module}: {err}"))
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub plot: bool,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub experiment: Experiment,
    pub seed: u64,
    pub rows: usize,
    pub files: Vec<PathBuf>,
    pub headline: String,
    pub seconds: f64,
}

impl std::fmt::Display for RunSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let files: Vec<String> = self.files.iter().map(|p| p.display().to_string()).collect();
        write!(
            f,
            "{}: {} rows, seed {}, {:.1}s; {} -> {}",
            self.experiment,
            self.rows,
            self.seed,
            self.seconds,
            self.headline,
            files.join(", ")
        )
    }
}

pub fn run(opts: &RunOptions) -> Result<RunSummary, CliError> {
    let start = Instant::now();
    let source = std::fs::read_to_string(&opts.config)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", opts.config.display())))?;
    let overrides = Overrides {
        seed: opts.seed,
        out: opts.out.clone(),
        plot: opts.plot,
    };
    let config = config::parse(&source, &overrides)?;
    let plan = experiments::plan(&config)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {} worker threads: {e}", opts.threads)))?;
    let output = pool.install(|| experiments::execute(&plan, config.seed))?;

    let svg = if config.plot {
        let text = svg::render(&output.figure).map_err(|e| CliError::Numerical {
            module: "plot",
            message: e.to_string(),
        })?;
        Some(text)
    } else {
        None
    };
    let rows = output.csv.rows.len();
    let files = artifact::write_outputs(&config, &output, svg.as_deref())?;
    Ok(RunSummary {
        experiment: config.experiment,
        seed: config.seed,
        rows,
        files,
        headline: output.headline,
        seconds: start.elapsed().as_secs_f64(),
    })
}
