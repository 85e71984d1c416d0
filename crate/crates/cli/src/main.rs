use std::path::PathBuf;
use std::process::ExitCode;

use ate_bounds_cli::{cmd_benchmark, cmd_bound, cmd_generate, cmd_tv_bound, CliError, Options, RunConfig};
use clap::{Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "ate-bounds", version, about = "Partial-identification bounds for the ATE under noisy covariates")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core, 1 runs sequentially.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Output file (bound, tv-bound) or directory (generate, benchmark).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a noiseless dataset and its noisy copy.
    Generate,
    /// Compute the interval [tau_L, tau_U] on one dataset.
    Bound,
    /// Coverage experiment over noise levels and replicates.
    Benchmark,
    /// TV budget implied by a noise model.
    TvBound,
}

/// Writes JSON to `--output` when given, stdout otherwise.
fn emit<T: Serialize>(value: &T, output: &Option<PathBuf>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    match output {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{}", text),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let opts = Options { seed: cli.seed, workers: cli.workers, output: cli.output.clone() };
    let output = opts.output.clone().or_else(|| config.output.clone());
    match cli.command {
        Command::Generate => {
            let meta = cmd_generate(&config, &opts)?;
            eprintln!("wrote {} rows, true ATE {}", meta.n, meta.true_ate);
        }
        Command::Bound => {
            let report = cmd_bound(&config, &opts)?;
            emit(&report, &output)?;
            if !report.feasible() {
                return Err(CliError::Infeasible(format!(
                    "lower feasible = {}, upper feasible = {}",
                    report.feasible_lower, report.feasible_upper
                )));
            }
        }
        Command::Benchmark => {
            let report = cmd_benchmark(&config, &opts)?;
            print!("{}", report.to_csv());
        }
        Command::TvBound => emit(&cmd_tv_bound(&config, &opts)?, &output)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code())
        }
    }
}
