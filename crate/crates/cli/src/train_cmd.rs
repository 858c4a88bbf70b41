//! `safenav train`.
//!
//! Writes into the output directory: `config.toml` (the resolved config;
//! `train --config <dir>/config.toml` reproduces the run), `metrics.csv`,
//! `skipped.csv` and `checkpoints/`.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use safenav_marl::{train, Agent};
use safenav_nn::Checkpoint;

use crate::ConfigArgs;

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue from an agent checkpoint (e.g. a first training stage).
    #[arg(long)]
    pub init: Option<PathBuf>,
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let mut cfg = args.config.load()?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.output.dir = o.clone();
    }
    let out = cfg.output_dir();
    fs::create_dir_all(&out).with_context(|| format!("cannot create output directory {}", out.display()))?;
    fs::write(out.join("config.toml"), cfg.to_toml())?;

    let tc = cfg.train_config();
    let init = match &args.init {
        Some(p) => {
            let ck = Checkpoint::load(p).with_context(|| format!("cannot load checkpoint {}", p.display()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            Some(Agent::from_checkpoint(&ck, &tc.sac(), &mut rng).with_context(|| format!("bad checkpoint {}", p.display()))?)
        }
        None => None,
    };
    let res = train(&cfg.env_setup(), &tc, init, Some(&out))?;
    let n = res.metrics.len();
    let tail = &res.metrics[n.saturating_sub(100)..];
    if !tail.is_empty() {
        let k = tail.len() as f64;
        println!(
            "episodes {n}  last {} mean: formation error {:.3} m, goals {:.2}, collisions {}",
            tail.len(),
            tail.iter().map(|m| m.formation_error).sum::<f64>() / k,
            tail.iter().map(|m| m.goals_reached as f64).sum::<f64>() / k,
            tail.iter().map(|m| m.collisions).sum::<usize>(),
        );
    }
    if !res.skipped.is_empty() {
        println!("skipped {} episodes (see skipped.csv)", res.skipped.len());
    }
    println!("wrote {}", out.display());
    Ok(())
}
