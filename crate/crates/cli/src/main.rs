//! Command-line front end: config-driven runners for simulation,
//! verification, representation optimization, feature-map training, and
//! clustering evaluation.
//!
//! Exit codes: 0 success, 1 runtime or I/O failure (including failed
//! verification), 2 usage or config error.

mod commands;
mod config;
mod error;
mod io;
mod manifest;
mod suites;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use coderate::LogBase;

use crate::commands::{cmd_eval, cmd_optimize, cmd_simulate, cmd_train, cmd_verify, Suite};
use crate::error::CliError;
use crate::manifest::RunManifest;

#[derive(Parser)]
#[command(
    name = "coderate",
    version,
    about = "Coding-rate objectives: simulate, verify, optimize, train, evaluate"
)]
struct Cli {
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Overrides the seed found in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the log base found in the config (bits or nats).
    #[arg(long, global = true, value_parser = commands::parse_log_base)]
    log_base: Option<LogBase>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic data sweeps and tabulate R, Rc, DeltaR.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run property sweeps over the analytic guarantees.
    Verify {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Projected gradient ascent over a free representation.
    Optimize {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train the feature map by full-batch ascent with backpropagation.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Clustering metrics for predictions, or a k-means baseline.
    Eval {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(run(cli));
}

fn run(cli: Cli) -> i32 {
    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        eprintln!("error: cannot create output directory {}: {e}", cli.out.display());
        return 1;
    }
    let name = match &cli.command {
        Command::Simulate { .. } => "simulate",
        Command::Verify { .. } => "verify",
        Command::Optimize { .. } => "optimize",
        Command::Train { .. } => "train",
        Command::Eval { .. } => "eval",
    };
    let mut manifest = RunManifest::new(name);

    let result = dispatch(&cli, &mut manifest);
    let code = match result {
        Ok(output) => {
            manifest.seeds_used = output.seeds_used;
            manifest.outputs = output.outputs;
            match output.soft_failure {
                None => 0,
                Some(msg) => {
                    manifest.status = "failed".into();
                    manifest.error = Some(msg.clone());
                    eprintln!("error: {msg}");
                    1
                }
            }
        }
        Err(err) => {
            manifest.status = "error".into();
            manifest.error = Some(err.to_string());
            eprintln!("{err}");
            err.exit_code()
        }
    };
    if let Err(err) = manifest.write(&cli.out) {
        eprintln!("error: cannot write manifest: {err}");
        return 1;
    }
    code
}

fn echo_config<T: serde::Serialize>(manifest: &mut RunManifest, cfg: &T) {
    manifest.config = serde_json::to_value(cfg).ok();
}

fn dispatch(cli: &Cli, manifest: &mut RunManifest) -> Result<commands::CommandOutput, CliError> {
    match &cli.command {
        Command::Simulate { config } => {
            let cfg: config::SimulateConfig = config::load(config)?;
            echo_config(manifest, &cfg);
            let params = cfg.rate.params(cli.log_base)?;
            cmd_simulate(&cfg, &params, &cli.out)
        }
        Command::Verify { suite, trials } => {
            cmd_verify(*suite, *trials, cli.seed.unwrap_or(0), &cli.out)
        }
        Command::Optimize { config } => {
            let cfg: config::OptimizeConfig = config::load(config)?;
            echo_config(manifest, &cfg);
            let params = cfg.rate.params(cli.log_base)?;
            cmd_optimize(&cfg, &params, cli.seed, &cli.out)
        }
        Command::Train { config } => {
            let cfg: config::TrainConfig = config::load(config)?;
            echo_config(manifest, &cfg);
            let params = cfg.rate.params(cli.log_base)?;
            cmd_train(&cfg, &params, cli.seed, &cli.out)
        }
        Command::Eval { config } => {
            let cfg: config::EvalConfig = config::load(config)?;
            echo_config(manifest, &cfg);
            cmd_eval(&cfg, cli.seed, &cli.out)
        }
    }
}
