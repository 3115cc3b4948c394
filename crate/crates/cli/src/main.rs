//! `rwre`: simulate and analyse random walks in random environments with
//! bounded right jumps.

mod commands;
mod config;
mod output;
mod validate;

use std::io::ErrorKind;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::{ExperimentConfig, Format};

#[derive(Parser, Debug)]
#[command(name = "rwre", version, about)]
struct Cli {
    /// Experiment file (`.toml`, otherwise JSON). Flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of ladder paths.
    #[arg(long, global = true)]
    paths: Option<u64>,
    /// Series truncation depth.
    #[arg(long, global = true)]
    depth: Option<usize>,
    /// Convergence tolerance for exit probabilities and series.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Write records here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Horizon for the empirical velocity.
    #[arg(long, global = true)]
    n_steps: Option<u64>,
    /// Step cap for a single ladder path.
    #[arg(long, global = true)]
    max_steps: Option<u64>,
    /// Independent trajectories for the empirical velocity.
    #[arg(long, global = true)]
    replicas: Option<u64>,
    /// Environment draws for the i.i.d. drift estimate.
    #[arg(long, global = true)]
    env_samples: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate ladder paths up to the first time the walk exceeds 0.
    Simulate {
        /// Include the full site sequence of each path.
        #[arg(long)]
        sites: bool,
    },
    /// Branching decomposition of ladder paths.
    Decompose {
        /// JSON lines with a `sites` field; simulates when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Write offspring frequencies next to their analytic values as CSV.
        #[arg(long)]
        offspring: Option<PathBuf>,
    },
    /// Exit probabilities, mean matrices and series quantities at a level.
    Exact {
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        level: i64,
    },
    /// Velocity from the branching series.
    Drift {
        /// Also estimate X_n / n by simulation.
        #[arg(long)]
        empirical: bool,
    },
    /// Wald's identity E(X_T1) = E(T_1) E(X_1) for homogeneous R = 2 laws.
    Wald {
        /// Run over a built-in grid of 100 laws instead of the configured one.
        #[arg(long)]
        grid: bool,
    },
    /// Run every self-check; exits 1 if any fails.
    Validate {
        /// Time weights per crossing type, comma-separated.
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<u64>>,
    },
}

impl Cli {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! apply {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    cfg.$field = v;
                }
            )*};
        }
        apply!(seed, paths, depth, tol, format, n_steps, max_steps, replicas, env_samples);
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = cli.config()?;
    match cli.command {
        Command::Simulate { sites } => commands::simulate(&cfg, sites),
        Command::Decompose { input, offspring } => commands::decompose(&cfg, input.as_deref(), offspring.as_deref()),
        Command::Exact { level } => commands::exact(&cfg, level),
        Command::Drift { empirical } => commands::drift_cmd(&cfg, empirical),
        Command::Wald { grid } => commands::wald(&cfg, grid),
        Command::Validate { weights } => validate::validate(&cfg, weights),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        // A closed pipe (`rwre ... | head`) is not an error.
        Err(e)
            if e.chain()
                .any(|c| c.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == ErrorKind::BrokenPipe)) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
