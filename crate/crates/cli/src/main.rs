use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use swipt_lqg_cli::config::Overrides;
use swipt_lqg_cli::execute;

/// Power-split analysis for LQG control over a SWIPT-powered network.
#[derive(Debug, Parser)]
#[command(name = "swipt-lqg", version)]
struct Args {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// critical, sweep, montecarlo or optimize.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    alpha_min: Option<f64>,
    #[arg(long)]
    alpha_max: Option<f64>,
    #[arg(long)]
    alpha_step: Option<f64>,
    /// Optimizer grid step.
    #[arg(long)]
    delta: Option<f64>,
    /// Monte Carlo runs per split.
    #[arg(long)]
    runs: Option<usize>,
    /// Monte Carlo steps per run.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    /// Worker threads for the Monte Carlo mode.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let a = Args::parse();
    let overrides = Overrides {
        mode: a.mode,
        alpha_min: a.alpha_min,
        alpha_max: a.alpha_max,
        alpha_step: a.alpha_step,
        delta: a.delta,
        runs: a.runs,
        horizon: a.horizon,
        seed: a.seed,
        out: a.out,
        format: a.format,
        threads: a.threads,
    };
    match execute(&a.config, &overrides) {
        Ok(outcome) => {
            print!("{}", outcome.stdout);
            for p in outcome.written {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
