//! Training loop.
//!
//! Output directory layout:
//!
//! ```text
//! metrics.csv               one row per episode (see `EpisodeMetrics`)
//! skipped.csv               episodes whose scenario could not be spawned
//! checkpoints/ep00500.ckpt  periodic agent checkpoints
//! checkpoints/final.ckpt    agent after the last episode
//! ```
//!
//! `metrics.csv` columns: `episode, return_0 .. return_{N-1}, formation_error,
//! goals_reached, collisions, timeouts, stuck, mean_deviation_penalty, steps,
//! fallbacks, wall_time`. `wall_time` (seconds since training started) is
//! left empty unless `log_wall_time` is set, which keeps the file
//! byte-identical across reruns of the same seed.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use safenav_core::ActionCmd;
use safenav_nn::Checkpoint;

use crate::actor::{unit_to_cmd, ACT_DIM};
use crate::buffer::{JointTransition, ReplayBuffer};
use crate::env::{EnvSetup, Obs, StepOutcome, TeamEnv};
use crate::error::{MarlError, Result};
use crate::sac::{Agent, SacConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub gamma: f64,
    pub tau: f64,
    pub target_entropy: f64,
    pub init_alpha: f64,
    pub episodes: usize,
    pub mpc_enabled: bool,
    pub attention_enabled: bool,
    /// Set from the experiment-level seed, not read from the train section.
    #[serde(skip)]
    pub seed: u64,
    pub buffer_capacity: usize,
    /// Environment steps with uniformly random actions before learning.
    pub warmup_steps: usize,
    /// Run `updates_per_step` gradient updates every `update_every` steps.
    pub update_every: usize,
    pub updates_per_step: usize,
    pub checkpoint_every: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_embed: usize,
    pub critic_heads: usize,
    pub critic_hidden: Vec<usize>,
    pub log_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let sac = SacConfig::default();
        Self {
            lr: sac.lr,
            batch: 128,
            gamma: sac.gamma,
            tau: sac.tau,
            target_entropy: sac.target_entropy,
            init_alpha: sac.init_alpha,
            episodes: 4000,
            mpc_enabled: true,
            attention_enabled: true,
            seed: 0,
            buffer_capacity: 1_000_000,
            warmup_steps: 1000,
            update_every: 1,
            updates_per_step: 1,
            checkpoint_every: 500,
            actor_hidden: sac.actor_hidden,
            critic_embed: sac.critic_embed,
            critic_heads: sac.critic_heads,
            critic_hidden: sac.critic_hidden,
            log_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn sac(&self) -> SacConfig {
        SacConfig {
            lr: self.lr,
            gamma: self.gamma,
            tau: self.tau,
            target_entropy: self.target_entropy,
            init_alpha: self.init_alpha,
            actor_hidden: self.actor_hidden.clone(),
            critic_embed: self.critic_embed,
            critic_heads: self.critic_heads,
            critic_hidden: self.critic_hidden.clone(),
            attention_enabled: self.attention_enabled,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sac().validate()?;
        if self.batch == 0 || self.buffer_capacity < self.batch {
            return Err(MarlError::Config("batch must be positive and fit in the buffer".into()));
        }
        if self.update_every == 0 {
            return Err(MarlError::Config("update_every must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub returns: Vec<f64>,
    /// Mean over the episode's steps.
    pub formation_error: f64,
    pub goals_reached: usize,
    pub collisions: usize,
    pub timeouts: usize,
    pub stuck: usize,
    /// `c_dev * deviation`, averaged over steps and robots.
    pub mean_deviation_penalty: f64,
    pub steps: usize,
    pub fallbacks: usize,
    pub wall_time: Option<f64>,
}

impl EpisodeMetrics {
    pub fn header(n_agents: usize) -> Vec<String> {
        let mut h = vec!["episode".to_string()];
        h.extend((0..n_agents).map(|i| format!("return_{i}")));
        for c in [
            "formation_error",
            "goals_reached",
            "collisions",
            "timeouts",
            "stuck",
            "mean_deviation_penalty",
            "steps",
            "fallbacks",
            "wall_time",
        ] {
            h.push(c.to_string());
        }
        h
    }

    pub fn record(&self) -> Vec<String> {
        let mut r = vec![self.episode.to_string()];
        r.extend(self.returns.iter().map(|x| x.to_string()));
        r.push(self.formation_error.to_string());
        r.push(self.goals_reached.to_string());
        r.push(self.collisions.to_string());
        r.push(self.timeouts.to_string());
        r.push(self.stuck.to_string());
        r.push(self.mean_deviation_penalty.to_string());
        r.push(self.steps.to_string());
        r.push(self.fallbacks.to_string());
        r.push(self.wall_time.map(|t| format!("{t:.3}")).unwrap_or_default());
        r
    }

    /// Parses a `metrics.csv` written by [`train`].
    pub fn read_csv(path: &Path) -> Result<Vec<Self>> {
        let mut rd = csv::Reader::from_path(path)?;
        let headers = rd.headers()?.clone();
        let n_agents = headers.iter().filter(|h| h.starts_with("return_")).count();
        let mut out = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let f = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| MarlError::Config(format!("bad metrics field {i} in {}", path.display())))
            };
            let base = 1 + n_agents;
            out.push(Self {
                episode: f(0)? as usize,
                returns: (0..n_agents).map(|i| f(1 + i)).collect::<Result<_>>()?,
                formation_error: f(base)?,
                goals_reached: f(base + 1)? as usize,
                collisions: f(base + 2)? as usize,
                timeouts: f(base + 3)? as usize,
                stuck: f(base + 4)? as usize,
                mean_deviation_penalty: f(base + 5)?,
                steps: f(base + 6)? as usize,
                fallbacks: f(base + 7)? as usize,
                wall_time: rec.get(base + 8).and_then(|s| s.parse().ok()),
            });
        }
        Ok(out)
    }
}

/// How actions are chosen while collecting.
pub enum Explore<'a, R: Rng> {
    /// Uniform over the unit action square.
    Uniform(&'a mut R),
    /// Sampled from the current policy.
    Policy(&'a Agent, &'a mut R),
}

/// Proposes actions for every robot from its own observation, runs the
/// environment step, and packages the joint transition. The stored action is
/// always the policy's proposal, never the filtered one.
pub fn collect_step<R: Rng>(env: &mut TeamEnv, obs: &[Obs], explore: Explore<'_, R>) -> Result<(JointTransition, StepOutcome)> {
    let n = env.n_robots();
    let unit: Vec<[f64; ACT_DIM]> = match explore {
        Explore::Uniform(rng) => (0..n).map(|_| [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)]).collect(),
        Explore::Policy(agent, rng) => agent.actor.act(obs, Some(rng))?,
    };
    let bounds = env.world.params.bounds;
    let cmds: Vec<ActionCmd> = unit.iter().map(|a| unit_to_cmd(*a, &bounds)).collect();
    let out = env.step(&cmds)?;
    let t = JointTransition {
        obs: obs.to_vec(),
        actions: unit,
        rewards: out.rewards.clone(),
        next_obs: out.next_obs.clone(),
        done: out.terminal,
    };
    Ok((t, out))
}

#[derive(Debug)]
pub struct TrainOutput {
    pub agent: Agent,
    pub metrics: Vec<EpisodeMetrics>,
    /// `(episode, reason)` for episodes that could not be spawned.
    pub skipped: Vec<(usize, String)>,
}

struct Outputs {
    dir: PathBuf,
    metrics: csv::Writer<fs::File>,
    skipped: csv::Writer<fs::File>,
}

fn save_agent(agent: &Agent, episodes: usize, seed: u64, path: &Path) -> Result<()> {
    let mut ck = Checkpoint::new();
    agent.write_to(&mut ck);
    ck.set_meta("episodes", episodes.to_string());
    ck.set_meta("seed", seed.to_string());
    ck.save(path)?;
    Ok(())
}

/// Trains from scratch, or continues `init` (e.g. a first-stage checkpoint)
/// in the environment described by `setup`. With `out_dir`, writes metrics
/// and checkpoints as described in the module docs.
pub fn train(setup: &EnvSetup, cfg: &TrainConfig, init: Option<Agent>, out_dir: Option<&Path>) -> Result<TrainOutput> {
    cfg.validate()?;
    let mut setup = setup.clone();
    setup.mpc_enabled = cfg.mpc_enabled;
    let n = setup.scenario.n_robots;

    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut act_rng = ChaCha8Rng::seed_from_u64(master.next_u64());
    let mut upd_rng = ChaCha8Rng::seed_from_u64(master.next_u64());
    let mut agent = match init {
        Some(a) => a,
        None => Agent::new(cfg.sac(), &mut ChaCha8Rng::seed_from_u64(master.next_u64()))?,
    };
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, n)?;

    let mut out = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir.join("checkpoints"))?;
            let mut metrics = csv::Writer::from_path(dir.join("metrics.csv"))?;
            metrics.write_record(EpisodeMetrics::header(n))?;
            metrics.flush()?;
            let mut skipped = csv::Writer::from_path(dir.join("skipped.csv"))?;
            skipped.write_record(["episode", "reason"])?;
            skipped.flush()?;
            Some(Outputs { dir: dir.to_path_buf(), metrics, skipped })
        }
        None => None,
    };

    let start = Instant::now();
    let mut metrics = Vec::with_capacity(cfg.episodes);
    let mut skipped = Vec::new();
    let mut total_steps = 0usize;
    let c_dev = setup.reward.c_dev;

    for episode in 0..cfg.episodes {
        let env_seed = master.next_u64();
        let mut env = match TeamEnv::new(setup.clone(), env_seed) {
            Ok(e) => e,
            Err(MarlError::Sim(e @ safenav_core::SimError::SpawnFailure { .. })) => {
                if let Some(o) = out.as_mut() {
                    o.skipped.write_record([episode.to_string(), e.to_string()])?;
                    o.skipped.flush()?;
                }
                skipped.push((episode, e.to_string()));
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut obs = env.observe();
        let mut returns = vec![0.0; n];
        let (mut form_sum, mut dev_sum, mut fallbacks, mut steps) = (0.0, 0.0, 0usize, 0usize);
        let last = loop {
            let explore = if total_steps < cfg.warmup_steps {
                Explore::Uniform(&mut act_rng)
            } else {
                Explore::Policy(&agent, &mut act_rng)
            };
            let (t, o) = collect_step(&mut env, &obs, explore)?;
            buffer.push(&t)?;
            total_steps += 1;
            steps += 1;
            for (r, x) in returns.iter_mut().zip(&o.rewards) {
                *r += x;
            }
            form_sum += o.formation_error;
            dev_sum += o.deviation.iter().sum::<f64>() / n as f64;
            fallbacks += o.fallbacks;

            if total_steps >= cfg.warmup_steps && total_steps % cfg.update_every == 0 {
                for _ in 0..cfg.updates_per_step {
                    if let Some(batch) = buffer.sample(cfg.batch, &mut upd_rng) {
                        agent.update(&batch, &mut upd_rng)?;
                    }
                }
            }
            obs = o.next_obs.clone();
            if o.finished {
                break o;
            }
        };
        let state = last.status.state;
        use safenav_core::EpisodeState as S;
        let m = EpisodeMetrics {
            episode,
            returns,
            formation_error: form_sum / steps as f64,
            goals_reached: env.goals_reached,
            collisions: usize::from(state == S::Collision),
            timeouts: usize::from(state == S::Timeout || (state == S::GoalReached && setup.respawn_goal)),
            stuck: usize::from(state == S::Stuck),
            mean_deviation_penalty: c_dev * dev_sum / steps as f64,
            steps,
            fallbacks,
            wall_time: cfg.log_wall_time.then(|| start.elapsed().as_secs_f64()),
        };
        if let Some(o) = out.as_mut() {
            o.metrics.write_record(m.record())?;
            o.metrics.flush()?;
            let done = episode + 1;
            if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 {
                save_agent(&agent, done, cfg.seed, &o.dir.join(format!("checkpoints/ep{done:05}.ckpt")))?;
            }
        }
        metrics.push(m);
    }
    if let Some(o) = out.as_mut() {
        o.metrics.flush()?;
        save_agent(&agent, cfg.episodes, cfg.seed, &o.dir.join("checkpoints/final.ckpt"))?;
    }
    Ok(TrainOutput { agent, metrics, skipped })
}
