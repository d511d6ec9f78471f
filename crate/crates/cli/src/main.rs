//! `nsmdp`: solve, evaluate and calibrate change-aware inventory controllers.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nsmdp::config::{ExperimentConfig, Overrides, KEY_REFERENCE};
use nsmdp::Error;

#[derive(Debug, Parser)]
#[command(
    name = "nsmdp",
    version,
    about = "Control of an inventory whose demand changes at an unknown time",
    after_long_help = long_help()
)]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment manifest (TOML). Defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides evaluation.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Episodes per policy; overrides evaluation.n_runs.
    #[arg(long = "n-runs", global = true)]
    n_runs: Option<usize>,

    /// Steps per episode; overrides evaluation.horizon.
    #[arg(long, global = true)]
    horizon: Option<usize>,

    /// Output directory; overrides output.dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for Monte Carlo episodes. Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Comma-separated policies; overrides evaluation.policies.
    #[arg(long, global = true, value_delimiter = ',')]
    policies: Option<Vec<String>>,

    /// Comma-separated absolute E_inf cost levels; overrides calibration.
    #[arg(long, global = true, value_delimiter = ',', num_args = 0..)]
    alphas: Option<Vec<f64>>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build both regime models, solve them, and write model.json,
    /// solution.json and momdp_policy.json.
    Solve,
    /// Monte Carlo evaluation of every configured policy; writes runs.csv
    /// and summary.csv. Requires `solve` first.
    Evaluate {
        /// Fail unless oracle < tt < loc < random with disjoint 95%
        /// intervals and momdp lies between oracle and random.
        #[arg(long = "assert-ordering")]
        assert_ordering: bool,
    },
    /// Bayes-cost threshold search for loc/kl/tt; writes sweep.csv and
    /// thresholds.json.
    Sweep,
    /// Non-Bayesian calibration: minimise E_1 cost subject to E_inf cost
    /// at most alpha; writes frontier.csv.
    Calibrate,
    /// Print per-step detector statistics as CSV for a scripted or
    /// simulated trajectory.
    Info {
        /// CSV file with columns s,a,s_next. Without it, a trajectory of
        /// the pre-change policy is simulated from the configured change.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Steps to simulate when no trajectory is given.
        #[arg(long, default_value_t = 50)]
        steps: usize,
    },
}

fn long_help() -> String {
    format!(
        "Configuration keys (TOML manifest passed with --config):\n\n{KEY_REFERENCE}\n\
         Exit codes: 0 success, 1 configuration or usage error, 2 runtime or numerical error."
    )
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config { .. } => 1,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let c = &cli.common;
    let overrides = Overrides {
        seed: c.seed,
        n_runs: c.n_runs,
        horizon: c.horizon,
        out: c.out.clone(),
        policies: c.policies.clone(),
        alphas: c.alphas.clone(),
    };
    let config = match &c.config {
        Some(path) => ExperimentConfig::load(path, &overrides)?,
        None => ExperimentConfig::default_with(&overrides)?,
    };
    if let Some(w) = c.workers {
        if w == 0 {
            return Err(Error::Config {
                key: "--workers".into(),
                message: "must be >= 1".into(),
            });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| Error::Argument(format!("cannot start worker pool: {e}")))?;
    }
    match cli.command {
        Command::Solve => commands::solve(&config),
        Command::Evaluate { assert_ordering } => commands::evaluate(&config, assert_ordering),
        Command::Sweep => commands::sweep(&config),
        Command::Calibrate => commands::calibrate(&config),
        Command::Info { trajectory, steps } => commands::info(&config, trajectory.as_deref(), steps),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
