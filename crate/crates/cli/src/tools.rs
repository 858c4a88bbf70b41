//! `safenav scenario ...` and `safenav checkpoint ...`.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Subcommand;

use safenav_core::scenario::{spawn_scenario, ScenarioFile, ScenarioSpec};
use safenav_nn::Checkpoint;

use crate::ConfigArgs;

#[derive(Debug, Subcommand)]
pub enum ScenarioCommand {
    /// Check scenario files, or spawn scenario specs (e.g. `random-obstacles:3`).
    Validate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(required = true)]
        targets: Vec<String>,
        /// Seed used when spawning specs.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print a built-in named layout as a scenario file.
    Show { name: String },
}

#[derive(Debug, Subcommand)]
pub enum CheckpointCommand {
    /// Print metadata and the array manifest after verifying checksums.
    Inspect { path: PathBuf },
}

pub fn run_scenario(cmd: &ScenarioCommand) -> Result<()> {
    match cmd {
        ScenarioCommand::Validate { config, targets, seed } => {
            let cfg = config.load()?;
            for t in targets {
                let path = PathBuf::from(t);
                if path.exists() {
                    let f = ScenarioFile::load(&path)?;
                    f.validate(&cfg.sim).with_context(|| format!("{} is invalid", path.display()))?;
                    println!("{}: ok ({} robots, {} obstacles)", path.display(), f.robots.len(), f.obstacles.len());
                } else {
                    let spec: ScenarioSpec = t.parse().with_context(|| format!("{t} is neither a file nor a scenario spec"))?;
                    let w = spawn_scenario(&spec, &cfg.scenario, &cfg.sim, *seed)?;
                    println!("{spec}: ok ({} robots, {} obstacles, seed {seed})", w.n_robots(), w.obstacles.len());
                }
            }
            Ok(())
        }
        ScenarioCommand::Show { name } => {
            print!("{}", ScenarioFile::builtin(name)?.to_toml());
            Ok(())
        }
    }
}

pub fn run_checkpoint(cmd: &CheckpointCommand) -> Result<()> {
    match cmd {
        CheckpointCommand::Inspect { path } => {
            let ck = Checkpoint::load(path).with_context(|| format!("cannot load checkpoint {}", path.display()))?;
            for (k, v) in &ck.meta {
                println!("{k} = {v}");
            }
            let mut total = 0;
            for a in &ck.arrays {
                println!("{:<40} {:?}", a.name, a.shape);
                total += a.data.len();
            }
            println!("{} arrays, {total} values, checksums ok", ck.arrays.len());
            Ok(())
        }
    }
}
