//! `safenav` command-line tool: training, evaluation, safety-filter checks,
//! scenario validation and checkpoint inspection.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

pub mod config;
pub mod eval_cmd;
pub mod filter_check;
pub mod tools;
pub mod train_cmd;

pub use config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "safenav", version, about = "Safe cooperative multi-robot navigation with an NMPC safety filter")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Config file plus dotted overrides, shared by several subcommands.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.mpc_enabled=false`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::load_or_default(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train agents and write metrics, checkpoints and a config snapshot.
    Train(train_cmd::TrainArgs),
    /// Evaluate a checkpoint (or a reference policy) on a scenario.
    Eval(eval_cmd::EvalArgs),
    /// Run the safety filter on rows of a CSV file.
    FilterCheck(filter_check::FilterCheckArgs),
    /// Scenario tools.
    #[command(subcommand)]
    Scenario(tools::ScenarioCommand),
    /// Checkpoint tools.
    #[command(subcommand)]
    Checkpoint(tools::CheckpointCommand),
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train_cmd::run(&a),
        Command::Eval(a) => eval_cmd::run(&a),
        Command::FilterCheck(a) => filter_check::run(&a),
        Command::Scenario(c) => tools::run_scenario(&c),
        Command::Checkpoint(c) => tools::run_checkpoint(&c),
    }
}
