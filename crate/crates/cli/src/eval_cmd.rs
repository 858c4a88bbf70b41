//! `safenav eval`.
//!
//! Output directory contents:
//!
//! ```text
//! config.toml         resolved config
//! trials.csv          one row per trial (outcome, steps, completion time, ...)
//! summary.json        aggregate report
//! summary.txt         the table printed to stdout
//! steps.csv           per-step series       (--emit-plot-data)
//! training_curves.csv per-episode series of the run that produced the
//!                     checkpoint, if its metrics.csv is found (--emit-plot-data)
//! traces/trial_NNN.csv per-robot state traces (--trace)
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use safenav_core::scenario::ScenarioSpec;
use safenav_marl::eval::{generalize_n_robots, GENERALIZE_TRIALS};
use safenav_marl::{run_eval, Agent, EpisodeMetrics, EvalConfig, EvalOutput, PolicySpec};
use safenav_nn::Checkpoint;

use crate::config::{resolve_output, ExperimentConfig};
use crate::ConfigArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Reference {
    Random,
    Zero,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Agent checkpoint to evaluate.
    #[arg(long, required_unless_present = "policy")]
    pub checkpoint: Option<PathBuf>,
    /// Reference policy instead of a checkpoint.
    #[arg(long, value_enum, conflicts_with = "checkpoint")]
    pub policy: Option<Reference>,
    /// e.g. `empty-walled`, `random-obstacles:3`, `named:collinear`, `s-path:3`.
    #[arg(long)]
    pub scenario: Option<ScenarioSpec>,
    /// Defaults to 100 for goal reaching and 24 for paths.
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Execute the policy's actions without the safety filter.
    #[arg(long)]
    pub no_mpc: bool,
    /// Team size; on the empty arena this runs the generalization protocol.
    #[arg(long)]
    pub n_robots: Option<usize>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub emit_plot_data: bool,
    /// Write per-robot state traces.
    #[arg(long)]
    pub trace: bool,
    /// Defaults to `<output.dir>/eval/<scenario>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn load_agent(path: &Path, cfg: &ExperimentConfig) -> Result<Agent> {
    let ck = Checkpoint::load(path).with_context(|| format!("cannot load checkpoint {}", path.display()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Agent::from_checkpoint(&ck, &cfg.train.sac(), &mut rng).with_context(|| format!("bad checkpoint {}", path.display()))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CurveRow {
    episode: usize,
    formation_error: f64,
    goals_reached: usize,
    mean_deviation_penalty: f64,
}

/// `metrics.csv` of the training run a checkpoint at
/// `<run>/checkpoints/x.ckpt` came from.
fn training_metrics(checkpoint: &Path) -> Option<PathBuf> {
    let p = checkpoint.parent()?.parent()?.join("metrics.csv");
    p.exists().then_some(p)
}

pub fn evaluate(args: &EvalArgs, cfg: &ExperimentConfig) -> Result<EvalOutput> {
    let scenario = args.scenario.clone().unwrap_or_else(|| cfg.env.scenario.clone());
    let is_path = matches!(scenario, ScenarioSpec::SPath(_));
    let generalize = args.n_robots.is_some() && scenario == ScenarioSpec::EmptyWalled;
    let trials = args.trials.unwrap_or(if is_path {
        24
    } else if generalize {
        GENERALIZE_TRIALS
    } else {
        100
    });
    let policy = match (&args.checkpoint, args.policy) {
        (Some(p), _) => PolicySpec::Actor(Arc::new(load_agent(p, cfg)?.actor)),
        (None, Some(Reference::Random)) => PolicySpec::Random,
        (None, Some(Reference::Zero)) => PolicySpec::Zero,
        (None, None) => bail!("either --checkpoint or --policy is required"),
    };
    let ec = EvalConfig {
        scenario,
        trials,
        seed: args.seed.unwrap_or(cfg.seed),
        mpc_enabled: !args.no_mpc,
        n_robots: args.n_robots,
        waypoint_steps: cfg.eval.waypoint_steps,
        jobs: args.jobs.unwrap_or(cfg.eval.jobs),
        record_traces: args.trace,
    };
    let setup = cfg.env_setup();
    Ok(match args.n_robots {
        Some(n) if generalize => generalize_n_robots(&setup, n, &policy, &ec)?,
        _ => run_eval(&setup, &policy, &ec)?,
    })
}

pub fn run(args: &EvalArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let scenario = args.scenario.clone().unwrap_or_else(|| cfg.env.scenario.clone());
    let out_dir = match &args.out {
        Some(o) => resolve_output(o),
        None => cfg.output_dir().join("eval").join(scenario.to_string().replace(':', "-")),
    };
    let res = evaluate(args, &cfg)?;
    fs::create_dir_all(&out_dir).with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
    fs::write(out_dir.join("config.toml"), cfg.to_toml())?;
    write_csv(&out_dir.join("trials.csv"), &res.rows)?;
    fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&res.report)? + "\n")?;
    let table = res.report.table();
    fs::write(out_dir.join("summary.txt"), &table)?;
    if args.emit_plot_data {
        write_csv(&out_dir.join("steps.csv"), &res.steps)?;
        if let Some(m) = args.checkpoint.as_deref().and_then(training_metrics) {
            let rows: Vec<CurveRow> = EpisodeMetrics::read_csv(&m)?
                .into_iter()
                .map(|e| CurveRow {
                    episode: e.episode,
                    formation_error: e.formation_error,
                    goals_reached: e.goals_reached,
                    mean_deviation_penalty: e.mean_deviation_penalty,
                })
                .collect();
            write_csv(&out_dir.join("training_curves.csv"), &rows)?;
        }
    }
    if args.trace {
        fs::create_dir_all(out_dir.join("traces"))?;
        for (i, t) in res.traces.iter().enumerate() {
            t.save(&out_dir.join(format!("traces/trial_{i:03}.csv")))?;
        }
    }
    print!("{table}");
    println!("wrote {}", out_dir.display());
    Ok(())
}
