use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use uqlab_cli::{run, RunOptions};

/// Run one uncertainty experiment from a JSON config.
#[derive(Debug, Parser)]
#[command(name = "uqlab", version)]
struct Args {
    /// Experiment config (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory, overriding `output_dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Also write an SVG chart.
    #[arg(long)]
    plot: bool,
    /// Worker threads (0 = one per core).
    #[arg(long, value_name = "N", default_value_t = 0)]
    threads: usize,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let opts = RunOptions {
        config: args.config,
        seed: args.seed,
        out: args.out,
        plot: args.plot,
        threads: args.threads,
    };
    match run(&opts) {
        Ok(summary) => {
            eprintln!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("uqlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
