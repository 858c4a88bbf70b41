//! Evaluation protocols: goal reaching (with or without obstacles, random or
//! named starts), S-shaped waypoint paths, and team-size generalization.
//!
//! Every trial ends as exactly one of success, collision or timeout. A team
//! that stops making progress (stuck) counts as a timeout. On paths, a
//! waypoint not reached within `waypoint_steps` steps is skipped and counted
//! as missed; the trial succeeds only if every waypoint is reached.
//!
//! Trials are independent and seeded from `(seed, trial index)`, so reports
//! do not depend on `jobs`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use safenav_core::scenario::{s_path_waypoints, ScenarioSpec};
use safenav_core::{ActionCmd, EpisodeState, Trace};

use crate::actor::{unit_to_cmd, Actor, ACT_DIM};
use crate::env::{EnvSetup, Obs, TeamEnv};
use crate::error::{MarlError, Result};

/// How robots choose actions during evaluation.
#[derive(Debug, Clone)]
pub enum PolicySpec {
    /// Deterministic (mode) actions from a trained actor.
    Actor(Arc<Actor>),
    /// Uniform over the action bounds, seeded per trial.
    Random,
    /// Always `(0, 0)`.
    Zero,
}

impl PolicySpec {
    fn act(&self, obs: &[Obs], rng: &mut ChaCha8Rng) -> Result<Vec<[f64; ACT_DIM]>> {
        Ok(match self {
            PolicySpec::Actor(a) => a.act::<ChaCha8Rng>(obs, None)?,
            PolicySpec::Random => obs.iter().map(|_| [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)]).collect(),
            PolicySpec::Zero => vec![[0.0; ACT_DIM]; obs.len()],
        })
    }

    fn commands(&self, env: &TeamEnv, obs: &[Obs], rng: &mut ChaCha8Rng) -> Result<Vec<ActionCmd>> {
        if let PolicySpec::Zero = self {
            return Ok(vec![ActionCmd::ZERO; obs.len()]);
        }
        let b = env.world.params.bounds;
        Ok(self.act(obs, rng)?.into_iter().map(|a| unit_to_cmd(a, &b)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub scenario: ScenarioSpec,
    pub trials: usize,
    pub seed: u64,
    pub mpc_enabled: bool,
    /// Overrides the team size from the environment setup.
    pub n_robots: Option<usize>,
    /// Per-waypoint step budget on paths.
    pub waypoint_steps: usize,
    pub jobs: usize,
    pub record_traces: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioSpec::EmptyWalled,
            trials: 100,
            seed: 0,
            mpc_enabled: true,
            n_robots: None,
            waypoint_steps: 200,
            jobs: 1,
            record_traces: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Collision,
    Timeout,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Success => "success",
            Outcome::Collision => "collision",
            Outcome::Timeout => "timeout",
        })
    }
}

/// One evaluation trial. `completion_time` is set for successful
/// goal-reaching trials and for every path trial that did not collide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub scenario: String,
    pub n_robots: usize,
    pub outcome: Outcome,
    pub steps: usize,
    pub completion_time: Option<f64>,
    /// Mean over the trial's steps.
    pub formation_error: f64,
    pub goals_reached: usize,
    pub goals_total: usize,
    pub mean_deviation_penalty: f64,
    pub fallbacks: usize,
}

/// Per-step series of one trial, for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub trial: usize,
    pub step: usize,
    pub formation_error: f64,
    pub centroid_distance: f64,
    pub deviation_penalty: f64,
    pub goals_reached: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt(), count: xs.len() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub trials: usize,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub timeout_rate: f64,
    pub completion_time: Option<MeanStd>,
    pub formation_error: Option<MeanStd>,
    pub goals_reached_fraction: f64,
}

impl EvalReport {
    pub fn from_rows(rows: &[TrialRow]) -> Self {
        let n = rows.len().max(1) as f64;
        let rate = |o: Outcome| rows.iter().filter(|r| r.outcome == o).count() as f64 / n;
        let times: Vec<f64> = rows.iter().filter_map(|r| r.completion_time).collect();
        let forms: Vec<f64> = rows.iter().map(|r| r.formation_error).collect();
        let total: usize = rows.iter().map(|r| r.goals_total).sum();
        let reached: usize = rows.iter().map(|r| r.goals_reached).sum();
        Self {
            trials: rows.len(),
            success_rate: rate(Outcome::Success),
            collision_rate: rate(Outcome::Collision),
            timeout_rate: rate(Outcome::Timeout),
            completion_time: MeanStd::of(&times),
            formation_error: MeanStd::of(&forms),
            goals_reached_fraction: if total == 0 { 0.0 } else { reached as f64 / total as f64 },
        }
    }

    /// Human-readable aggregate table.
    pub fn table(&self) -> String {
        let ms = |m: &Option<MeanStd>| match m {
            Some(m) => format!("{:.3} ± {:.3} (n={})", m.mean, m.std, m.count),
            None => "-".to_string(),
        };
        format!(
            "trials               {}\n\
             success rate         {:.3}\n\
             collision rate       {:.3}\n\
             timeout rate         {:.3}\n\
             completion time (s)  {}\n\
             formation error (m)  {}\n\
             goals reached        {:.3}\n",
            self.trials,
            self.success_rate,
            self.collision_rate,
            self.timeout_rate,
            ms(&self.completion_time),
            ms(&self.formation_error),
            self.goals_reached_fraction
        )
    }
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub report: EvalReport,
    pub rows: Vec<TrialRow>,
    pub steps: Vec<StepRow>,
    /// One per trial when traces were requested, otherwise empty.
    pub traces: Vec<Trace>,
}

struct TrialResult {
    row: TrialRow,
    steps: Vec<StepRow>,
    trace: Option<Trace>,
}

fn trial_setup(base: &EnvSetup, cfg: &EvalConfig) -> EnvSetup {
    let mut s = base.clone();
    s.env.scenario = cfg.scenario.clone();
    s.mpc_enabled = cfg.mpc_enabled;
    s.respawn_goal = false;
    if let Some(n) = cfg.n_robots {
        s.scenario.n_robots = n;
    }
    s
}

fn run_trial(setup: &EnvSetup, policy: &PolicySpec, cfg: &EvalConfig, trial: usize, seed: u64) -> Result<TrialResult> {
    let mut setup = setup.clone();
    let waypoints = match &cfg.scenario {
        ScenarioSpec::SPath(id) => Some(s_path_waypoints(*id)?),
        _ => None,
    };
    if let Some(w) = &waypoints {
        // the path runner owns the time limit
        setup.sim.max_steps = cfg.waypoint_steps * w.len() + 1;
    }
    let c_dev = setup.reward.c_dev;
    let dt = setup.sim.dt;
    let mut env = TeamEnv::new(setup, seed)?;
    let n = env.n_robots();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d);
    let mut trace = cfg.record_traces.then(Trace::new);
    let mut steps = Vec::new();
    let mut obs = env.observe();
    let (mut form_sum, mut dev_sum, mut fallbacks) = (0.0, 0.0, 0usize);
    let mut goals_reached = 0;
    let mut wp = 0;
    let mut wp_steps = 0;
    let goals_total = waypoints.as_ref().map_or(1, |w| w.len());
    let outcome = loop {
        let cmds = policy.commands(&env, &obs, &mut rng)?;
        let out = env.step(&cmds)?;
        let t = env.world.step_count;
        form_sum += out.formation_error;
        let dev = c_dev * out.deviation.iter().sum::<f64>() / n as f64;
        dev_sum += dev;
        fallbacks += out.fallbacks;
        if let Some(tr) = trace.as_mut() {
            tr.record(&env.world, &out.proposed, &out.executed, out.status);
        }
        let state = out.status.state;
        if state == EpisodeState::GoalReached {
            goals_reached += 1;
        }
        steps.push(StepRow {
            trial,
            step: t,
            formation_error: out.formation_error,
            centroid_distance: (env.world.centroid() - env.world.centroid_goal).norm(),
            deviation_penalty: dev,
            goals_reached,
        });
        obs = out.next_obs;
        if state == EpisodeState::Collision {
            break Outcome::Collision;
        }
        match &waypoints {
            None => match state {
                EpisodeState::GoalReached => break Outcome::Success,
                EpisodeState::Stuck | EpisodeState::Timeout => break Outcome::Timeout,
                _ => {}
            },
            Some(w) => {
                wp_steps += 1;
                if state == EpisodeState::GoalReached || wp_steps >= cfg.waypoint_steps {
                    wp += 1;
                    wp_steps = 0;
                    if wp == w.len() {
                        break if goals_reached == w.len() { Outcome::Success } else { Outcome::Timeout };
                    }
                    env.set_goal(w[wp]);
                }
            }
        }
    };
    let n_steps = env.world.step_count;
    let completion_time = match (&waypoints, outcome) {
        (None, Outcome::Success) => Some(n_steps as f64 * dt),
        (Some(_), o) if o != Outcome::Collision => Some(n_steps as f64 * dt),
        _ => None,
    };
    let row = TrialRow {
        trial,
        seed,
        scenario: cfg.scenario.to_string(),
        n_robots: n,
        outcome,
        steps: n_steps,
        completion_time,
        formation_error: form_sum / n_steps as f64,
        goals_reached,
        goals_total,
        mean_deviation_penalty: dev_sum / n_steps as f64,
        fallbacks,
    };
    Ok(TrialResult { row, steps, trace })
}

/// Per-trial seeds derived from the master seed.
pub fn trial_seeds(seed: u64, trials: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials).map(|_| rng.next_u64()).collect()
}

pub fn run_eval(setup: &EnvSetup, policy: &PolicySpec, cfg: &EvalConfig) -> Result<EvalOutput> {
    if cfg.trials == 0 {
        return Err(MarlError::Config("trials must be at least 1".into()));
    }
    if cfg.waypoint_steps == 0 {
        return Err(MarlError::Config("waypoint_steps must be positive".into()));
    }
    let setup = trial_setup(setup, cfg);
    let seeds = trial_seeds(cfg.seed, cfg.trials);
    let jobs = cfg.jobs.clamp(1, cfg.trials);
    let mut results: Vec<Option<Result<TrialResult>>> = (0..cfg.trials).map(|_| None).collect();
    if jobs == 1 {
        for (t, slot) in results.iter_mut().enumerate() {
            *slot = Some(run_trial(&setup, policy, cfg, t, seeds[t]));
        }
    } else {
        let chunk = cfg.trials.div_ceil(jobs);
        std::thread::scope(|s| {
            for (c, part) in results.chunks_mut(chunk).enumerate() {
                let (setup, seeds) = (&setup, &seeds);
                s.spawn(move || {
                    for (k, slot) in part.iter_mut().enumerate() {
                        let t = c * chunk + k;
                        *slot = Some(run_trial(setup, policy, cfg, t, seeds[t]));
                    }
                });
            }
        });
    }
    let mut rows = Vec::with_capacity(cfg.trials);
    let mut steps = Vec::new();
    let mut traces = Vec::new();
    for r in results {
        let r = r.expect("every trial slot is filled")?;
        rows.push(r.row);
        steps.extend(r.steps);
        traces.extend(r.trace);
    }
    Ok(EvalOutput { report: EvalReport::from_rows(&rows), rows, steps, traces })
}

/// Runs one S-shaped path for `trials` start configurations.
pub fn s_path_runner(setup: &EnvSetup, path: u8, policy: &PolicySpec, cfg: &EvalConfig) -> Result<EvalOutput> {
    run_eval(setup, policy, &EvalConfig { scenario: ScenarioSpec::SPath(path), ..cfg.clone() })
}

pub const GENERALIZE_TRIALS: usize = 100;

/// Goal reaching in the empty walled arena with `n` robots on a ring.
pub fn generalize_n_robots(setup: &EnvSetup, n: usize, policy: &PolicySpec, cfg: &EvalConfig) -> Result<EvalOutput> {
    if !(3..=8).contains(&n) {
        return Err(MarlError::Config(format!("team size must be in 3..=8, got {n}")));
    }
    run_eval(
        setup,
        policy,
        &EvalConfig {
            scenario: ScenarioSpec::EmptyWalled,
            n_robots: Some(n),
            ..cfg.clone()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use safenav_core::mpc::MpcConfig;
    use safenav_core::reward::RewardWeights;
    use safenav_core::scenario::ScenarioParams;
    use safenav_core::SimParams;

    fn setup() -> EnvSetup {
        EnvSetup {
            env: EnvConfig::default(),
            sim: SimParams { max_steps: 150, ..Default::default() },
            scenario: ScenarioParams::default(),
            reward: RewardWeights::default(),
            mpc: MpcConfig::default(),
            mpc_enabled: true,
            respawn_goal: true,
        }
    }

    #[test]
    fn zero_policy_times_out() {
        let cfg = EvalConfig { trials: 3, ..Default::default() };
        let out = run_eval(&setup(), &PolicySpec::Zero, &cfg).unwrap();
        assert_eq!(out.report.timeout_rate, 1.0);
        assert!(out.report.completion_time.is_none());
    }

    #[test]
    fn report_matches_rows_and_jobs_do_not_matter() {
        let cfg = EvalConfig { trials: 4, ..Default::default() };
        let a = run_eval(&setup(), &PolicySpec::Random, &cfg).unwrap();
        let b = run_eval(&setup(), &PolicySpec::Random, &EvalConfig { jobs: 3, ..cfg }).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.report, EvalReport::from_rows(&a.rows));
        let r = &a.report;
        assert!((r.success_rate + r.collision_rate + r.timeout_rate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_std_population() {
        let m = MeanStd::of(&[1.0, 3.0]).unwrap();
        assert_eq!((m.mean, m.std, m.count), (2.0, 1.0, 2));
        assert!(MeanStd::of(&[]).is_none());
    }
}
