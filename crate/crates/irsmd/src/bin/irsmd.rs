//! Experiment CLI for the IR-SMD solver: run configured experiments,
//! validate schedules, and fit convergence rates from aggregate traces.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use irsmd::config::{Budget, RunConfig};
use irsmd::experiment;
use irsmd::schedules::Schedule;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "irsmd", about = "Iterative regularized stochastic mirror descent experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a config file (flags override file
    /// values).
    Run(RunArgs),
    /// Print the schedule validation report for a config file or explicit
    /// exponents.
    Validate(ValidateArgs),
    /// Fit log(gap) vs log(k) on an aggregate CSV written by `run`.
    RateFit(RateFitArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Base seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Sample-path count override.
    #[arg(long)]
    paths: Option<usize>,
    /// Iteration budget override (mutually exclusive with --wall-clock-seconds).
    #[arg(long)]
    iterations: Option<u64>,
    /// Wall-clock budget override in seconds.
    #[arg(long)]
    wall_clock_seconds: Option<f64>,
    /// Output directory override.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker pool size (0 = available parallelism).
    #[arg(long)]
    threads: Option<usize>,
    /// Run even when schedule validation fails.
    #[arg(long)]
    override_validation: bool,
}

#[derive(Args)]
struct ValidateArgs {
    /// Read the schedule from this config file...
    #[arg(long, conflicts_with_all = ["delta", "a", "b"])]
    config: Option<PathBuf>,
    /// ...or give the rate exponent directly.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    gamma0: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda0: f64,
    #[arg(long, default_value_t = 0.0)]
    r: f64,
    /// Also probe the raw series conditions by partial sums up to this k.
    #[arg(long)]
    probe: Option<u64>,
}

#[derive(Args)]
struct RateFitArgs {
    /// aggregate.csv produced by `irsmd run`.
    #[arg(long)]
    aggregate: PathBuf,
    /// Gap column to fit: f or h.
    #[arg(long, default_value = "f")]
    column: String,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Validate(args) => validate(args),
        Command::RateFit(args) => rate_fit(args),
    }
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = RunConfig::from_file(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(paths) = args.paths {
        if paths == 0 {
            bail!("--paths must be >= 1");
        }
        cfg.paths = paths;
    }
    match (args.iterations, args.wall_clock_seconds) {
        (Some(_), Some(_)) => bail!("--iterations and --wall-clock-seconds are mutually exclusive"),
        (Some(n), None) => cfg.budget = Budget::Iterations(n),
        (None, Some(s)) => cfg.budget = Budget::WallClockSeconds(s),
        (None, None) => {}
    }
    if let Some(out) = args.output {
        cfg.output_dir = out;
    }
    if let Some(t) = args.threads {
        cfg.threads = t;
    }
    cfg.override_validation |= args.override_validation;

    let outcome = experiment::run_experiment(&cfg)?;
    for (k, v) in &outcome.summary {
        println!("{k} = {v}");
    }
    println!("artifacts = {}", outcome.output_dir.display());
    let failed = outcome.reports.iter().filter(|r| r.is_err()).count();
    if failed > 0 {
        bail!("{failed} path(s) failed; partial results preserved");
    }
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<()> {
    let schedule = if let Some(cfgpath) = args.config {
        RunConfig::from_file(&cfgpath)?.schedule
    } else if let Some(delta) = args.delta {
        Schedule::with_rate_exponent(delta, args.gamma0, args.lambda0, args.r)?
    } else if let (Some(a), Some(b)) = (args.a, args.b) {
        Schedule::new(args.gamma0, args.lambda0, a, b, args.r)?
    } else {
        bail!("give --config, --delta, or both --a and --b");
    };
    let mut stdout = std::io::stdout();
    experiment::write_validation_report(&schedule, &mut stdout)?;
    if let Some(k_max) = args.probe {
        let d = schedule.series_diagnostics(k_max.max(2));
        println!("series probes at k = {}:", d.k_max);
        println!("  sum gamma_k*lambda_k      = {}", d.sum_gamma_lambda);
        println!("  sum gamma_k^2             = {}", d.sum_gamma_sq);
        println!("  sum ratio term            = {}", d.sum_ratio_term);
        println!("  ratio limit probe         = {}", d.ratio_limit_probe);
        println!("  gamma_k/lambda_k          = {}", d.step_ratio_probe);
        println!("  gamma_k*lambda_k          = {}", d.product_probe);
    }
    Ok(())
}

fn rate_fit(args: RateFitArgs) -> Result<()> {
    let (slope, intercept) = experiment::rate_fit_from_aggregate(&args.aggregate, &args.column)?;
    println!("slope = {slope}");
    println!("intercept = {intercept}");
    Ok(())
}
