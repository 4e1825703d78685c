use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use simforge_cli::{commands, report, RunConfig};

#[derive(Parser)]
#[command(
    name = "simforge",
    about = "Surrogate-guided synthetic data generation and parameter-sensitivity mapping",
    version
)]
struct Cli {
    /// Run-config TOML file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config's global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the config's workspace directory.
    #[arg(long, global = true)]
    workspace: Option<PathBuf>,

    /// Override any config key, e.g. --set ppo.total_steps=4096.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the analytic oracle and write dataset.csv.
    Simulate {
        /// Oracle kind (rupture|material); overrides data.kind.
        #[arg(long)]
        kind: Option<String>,
        /// Number of rows; overrides data.n.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Fit the boosted surrogate on the train split.
    TrainSurrogate,
    /// Evaluate the surrogate on a split and write metrics.json.
    Eval {
        /// Split to evaluate (train|validation|test).
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Train the PPO agent against the surrogate environment.
    TrainAgent,
    /// Generate a parameter batch with the trained policy.
    Generate {
        /// Number of samples; overrides generation.n.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Bayesian optimization over the generated parameter ranges.
    Optimize {
        /// Number of trials; overrides bayesopt.trials.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Emit the consolidated plot-ready report.
    Report,
    /// Run all six pipeline stages in order.
    Pipeline,
}

fn run(cli: Cli) -> Result<()> {
    let config_path = cli
        .config
        .context("--config <path> is required (see configs/rupture.toml)")?;

    let mut overrides = cli.overrides.clone();
    match &cli.command {
        Command::Simulate { kind, n } => {
            if let Some(kind) = kind {
                overrides.push(format!("data.kind={kind}"));
            }
            if let Some(n) = n {
                overrides.push(format!("data.n={n}"));
            }
        }
        Command::Generate { n } => {
            if let Some(n) = n {
                overrides.push(format!("generation.n={n}"));
            }
        }
        Command::Optimize { trials } => {
            if let Some(trials) = trials {
                overrides.push(format!("bayesopt.trials={trials}"));
            }
        }
        _ => {}
    }

    let config = RunConfig::load(&config_path, &overrides, cli.seed, cli.workspace)?;
    match cli.command {
        Command::Simulate { .. } => commands::simulate(&config),
        Command::TrainSurrogate => commands::train_surrogate(&config),
        Command::Eval { split } => commands::eval(&config, &split),
        Command::TrainAgent => commands::train_agent_cmd(&config),
        Command::Generate { .. } => commands::generate(&config),
        Command::Optimize { .. } => commands::optimize(&config),
        Command::Report => report::report(&config),
        Command::Pipeline => commands::pipeline(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
