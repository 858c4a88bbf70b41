//! Experiment configuration files.
//!
//! A single TOML document with optional sections; anything left out takes
//! its default, and unknown keys are rejected.
//!
//! ```toml
//! seed = 0
//!
//! [env]       # scenario = "empty-walled", d_ref, respawn_goal
//! [sim]       # dt, robot_radius, bounds, lidar_range, max_steps, ...
//! [scenario]  # generator settings: arena_side, n_robots, goal distances, ...
//! [reward]    # r_goal, r_collision, c_form, c_obs, d_safe, c_cent, c_dev
//! [mpc]       # horizon, r0, r, d, hard_stop_dist, solver, ...
//! [train]     # lr, batch, gamma, tau, episodes, mpc_enabled, ...
//! [eval]      # waypoint_steps, jobs
//! [output]    # dir
//! ```
//!
//! `mpc.dt`, `mpc.bounds` and `mpc.robot_radius` always follow the `[sim]`
//! values at run time. Overrides use dotted paths (`train.mpc_enabled=false`);
//! the value is read as a TOML literal, falling back to a bare string.
//! When `SAFENAV_OUTPUT_ROOT` is set, relative output directories are placed
//! under it.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use safenav_core::mpc::MpcConfig;
use safenav_core::reward::RewardWeights;
use safenav_core::scenario::{ScenarioParams, ScenarioSpec};
use safenav_core::SimParams;
use safenav_marl::{EnvConfig, EnvSetup, TrainConfig};

pub const OUTPUT_ROOT_VAR: &str = "SAFENAV_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    pub scenario: ScenarioSpec,
    pub d_ref: f64,
    /// Draw a new goal when the team reaches one during training.
    pub respawn_goal: bool,
}

impl Default for EnvSection {
    fn default() -> Self {
        let e = EnvConfig::default();
        Self { scenario: e.scenario, d_ref: e.d_ref, respawn_goal: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub waypoint_steps: usize,
    pub jobs: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { waypoint_steps: 200, jobs: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("runs/default") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub env: EnvSection,
    pub sim: SimParams,
    pub scenario: ScenarioParams,
    pub reward: RewardWeights,
    pub mpc: MpcConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub output: OutputSection,
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key just parsed"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets `path` (dotted) in `table`, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("override {assignment:?} is not of the form key.path=value"))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        bail!("override {assignment:?} has an empty key");
    }
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        let entry = cur.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override {assignment:?}: {k} is not a section"))?;
    }
    cur.insert(keys[keys.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl ExperimentConfig {
    /// Parses `text` (reported as `origin` in errors) and applies overrides.
    pub fn parse(text: &str, origin: &str, overrides: &[String]) -> Result<Self> {
        // deserialize the file alone first so schema errors point at its lines
        let base: Self = toml::from_str(text).with_context(|| format!("invalid config {origin}"))?;
        if overrides.is_empty() {
            base.validate()?;
            return Ok(base);
        }
        let mut table: toml::Table = toml::from_str(text).with_context(|| format!("invalid config {origin}"))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .with_context(|| format!("invalid override in {overrides:?}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config file {}", path.display()))?;
        Self::parse(&text, &path.display().to_string(), overrides)
    }

    /// Defaults when `path` is `None`.
    pub fn load_or_default(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        match path {
            Some(p) => Self::load(p, overrides),
            None => Self::parse("", "<defaults>", overrides),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.scenario.validate()?;
        self.reward.validate()?;
        self.mpc.validate()?;
        self.train.validate()?;
        if !(self.env.d_ref > 0.0) {
            bail!("env.d_ref must be positive");
        }
        if self.eval.waypoint_steps == 0 {
            bail!("eval.waypoint_steps must be positive");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn env_setup(&self) -> EnvSetup {
        EnvSetup {
            env: EnvConfig { scenario: self.env.scenario.clone(), d_ref: self.env.d_ref },
            sim: self.sim,
            scenario: self.scenario,
            reward: self.reward,
            mpc: self.mpc,
            mpc_enabled: self.train.mpc_enabled,
            respawn_goal: self.env.respawn_goal,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }

    /// Output directory after the root override.
    pub fn output_dir(&self) -> PathBuf {
        resolve_output(&self.output.dir)
    }
}

pub fn resolve_output(dir: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}
