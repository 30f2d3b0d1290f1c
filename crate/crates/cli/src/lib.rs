//! Command-line driver for the `nocollapse-core` library.

pub mod commands;
pub mod config;
pub mod error;

use clap::{Parser, Subcommand};

pub use config::{RunConfig, SEED_ENV};
pub use error::{CliResult, Failure, EXIT_RUNTIME, EXIT_USAGE};

const AFTER_HELP: &str = "\
Environment:
  NOCOLLAPSE_SEED   overrides train.init_seed and train.batch_seed of a run
                    config, and the split seed of `prepare`. `--set` wins over it.
  RUST_LOG          log filter (default: info)

Exit codes: 0 success, 1 runtime or numerical failure, 2 usage or input error.";

#[derive(Debug, Parser)]
#[command(name = "nocollapse", version, about = "Collapse-free collaborative filtering: data preparation, training and diagnostics", after_help = AFTER_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Filter, split and index an interaction file into a dataset snapshot.
    Prepare(commands::PrepareArgs),
    /// Write a planted-block interaction file.
    Synthesize(commands::SynthesizeArgs),
    /// Train a model described by a run config.
    Train(commands::TrainArgs),
    /// Ranking metrics of a checkpoint, optionally per item-degree bucket.
    Evaluate(commands::EvaluateArgs),
    /// Scaled covariance spectrum of a checkpoint's embeddings.
    Spectrum(commands::SpectrumArgs),
    /// Train every point of a parameter grid in separate processes.
    Sweep(commands::SweepArgs),
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Cmd::Prepare(a) => {
            let m = commands::cmd_prepare(a)?;
            log::info!("wrote {} ({} users, {} items)", a.out.display(), m.num_users, m.num_items);
        }
        Cmd::Synthesize(a) => {
            let n = commands::cmd_synthesize(a)?;
            log::info!("wrote {n} interactions to {}", a.out.display());
        }
        Cmd::Train(a) => {
            let s = commands::cmd_train(a)?;
            log::info!(
                "{} epochs, best epoch {:?}; reports in {}",
                s.epochs,
                s.best_epoch,
                s.report_dir.display()
            );
        }
        Cmd::Evaluate(a) => {
            commands::cmd_evaluate(a)?;
        }
        Cmd::Spectrum(a) => {
            let r = commands::cmd_spectrum(a)?;
            log::info!("effective rank {:.2}", r.effective_rank);
        }
        Cmd::Sweep(a) => {
            let runs = commands::cmd_sweep(a)?;
            log::info!("{} runs finished", runs.len());
        }
    }
    Ok(())
}
