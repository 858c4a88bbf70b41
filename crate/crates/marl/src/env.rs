//! Team environment: world, per-robot observations and rewards, and the
//! safety filter between the policies and the world.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use safenav_core::lidar::{add_noise, cast_lidar, N_BEAMS};
use safenav_core::mpc::{Intervention, MpcConfig, SafetyFilter};
use safenav_core::observation::{nearest_obstacle_from_scan, observation_from_scan, NeighborAssignment, OBS_DIM};
use safenav_core::reward::{compute_reward, formation_error, mpc_deviation, RewardContext, RewardWeights};
use safenav_core::scenario::{resample_goal, spawn_scenario, ScenarioParams, ScenarioSpec};
use safenav_core::{ActionCmd, EpisodeState, EpisodeStatus, SimParams, Vec2, WorldState};

use crate::error::Result;

pub type Obs = [f64; OBS_DIM];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub scenario: ScenarioSpec,
    pub d_ref: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioSpec::EmptyWalled,
            d_ref: 1.0,
        }
    }
}

/// Everything an environment needs, shared by training and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSetup {
    pub env: EnvConfig,
    pub sim: SimParams,
    pub scenario: ScenarioParams,
    pub reward: RewardWeights,
    pub mpc: MpcConfig,
    pub mpc_enabled: bool,
    /// On reaching the goal, draw a new one and keep going instead of ending
    /// the episode.
    pub respawn_goal: bool,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// Proposals after clamping to the action bounds.
    pub proposed: Vec<ActionCmd>,
    pub executed: Vec<ActionCmd>,
    pub rewards: Vec<f64>,
    /// Bound-normalized distance between proposal and executed action.
    pub deviation: Vec<f64>,
    pub fallbacks: usize,
    pub status: EpisodeStatus,
    pub goal_reached: bool,
    /// Collision or stuck: no bootstrapping past this step.
    pub terminal: bool,
    /// The episode is over (terminal, timeout, or goal without respawn).
    pub finished: bool,
    pub formation_error: f64,
    pub next_obs: Vec<Obs>,
}

pub struct TeamEnv {
    pub setup: EnvSetup,
    pub world: WorldState,
    pub assignment: NeighborAssignment,
    filter: SafetyFilter,
    rng: ChaCha8Rng,
    pub goals_reached: usize,
}

impl TeamEnv {
    pub fn new(setup: EnvSetup, seed: u64) -> Result<Self> {
        setup.sim.validate()?;
        setup.reward.validate()?;
        setup.mpc.validate()?;
        let world = spawn_scenario(&setup.env.scenario, &setup.scenario, &setup.sim, seed)?;
        Ok(Self::from_world(setup, world, seed))
    }

    /// Wraps an existing world, e.g. one loaded from a scenario file.
    pub fn from_world(setup: EnvSetup, world: WorldState, seed: u64) -> Self {
        let n = world.n_robots();
        let assignment = NeighborAssignment::ring(n).expect("worlds hold at least three robots");
        let mut mpc = setup.mpc;
        mpc.dt = setup.sim.dt;
        mpc.bounds = setup.sim.bounds;
        Self {
            setup,
            world,
            assignment,
            filter: SafetyFilter::new(mpc, n),
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15),
            goals_reached: 0,
        }
    }

    pub fn n_robots(&self) -> usize {
        self.world.n_robots()
    }

    pub fn set_goal(&mut self, goal: Vec2) {
        self.world.centroid_goal = goal;
    }

    fn scans(&mut self) -> Vec<Vec<f64>> {
        let range = self.world.params.lidar_range;
        let sigma = self.world.params.lidar_noise;
        (0..self.n_robots())
            .map(|i| {
                let mut s = cast_lidar(&self.world, i, N_BEAMS, range);
                if sigma > 0.0 {
                    add_noise(&mut s, sigma, range, &mut self.rng);
                }
                s
            })
            .collect()
    }

    fn observe_scans(&self, scans: &[Vec<f64>]) -> Vec<Obs> {
        scans
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let prev = self.world.robots[i].last_action;
                observation_from_scan(&self.world, i, s, &self.assignment, self.setup.env.d_ref, prev).to_array()
            })
            .collect()
    }

    pub fn observe(&mut self) -> Vec<Obs> {
        let scans = self.scans();
        self.observe_scans(&scans)
    }

    /// Filters `proposals` (if enabled), steps the world, and scores the
    /// result. Observations after the step carry the executed action in
    /// their previous-action slots.
    pub fn step(&mut self, proposals: &[ActionCmd]) -> Result<StepOutcome> {
        let bounds = self.world.params.bounds;
        let proposed: Vec<ActionCmd> = proposals.iter().map(|a| bounds.clamp(*a)).collect();
        let (executed, fallbacks) = if self.setup.mpc_enabled {
            let outs = self.filter.filter_all(&self.world, &self.assignment, &proposed);
            let fb = outs.iter().filter(|o| o.intervention == Intervention::Fallback).count();
            (outs.into_iter().map(|o| o.action).collect::<Vec<_>>(), fb)
        } else {
            (proposed.clone(), 0)
        };
        let status = self.world.step(&executed)?;
        let scans = self.scans();
        let ctx = RewardContext {
            assignment: &self.assignment,
            d_ref: self.setup.env.d_ref,
            bounds: &bounds,
            weights: &self.setup.reward,
        };
        let n = self.n_robots();
        let mut rewards = Vec::with_capacity(n);
        let mut deviation = Vec::with_capacity(n);
        for i in 0..n {
            let (d_obs, _) = nearest_obstacle_from_scan(&scans[i]);
            rewards.push(compute_reward(&self.world, i, &status, proposed[i], executed[i], d_obs, &ctx).total);
            deviation.push(mpc_deviation(proposed[i], executed[i], &bounds));
        }
        let formation_error = formation_error(&self.world, &self.assignment, self.setup.env.d_ref);
        let goal_reached = status.state == EpisodeState::GoalReached;
        if goal_reached {
            self.goals_reached += 1;
        }
        let terminal = matches!(status.state, EpisodeState::Collision | EpisodeState::Stuck);
        let mut finished = status.is_terminal();
        if goal_reached && self.setup.respawn_goal {
            let g = resample_goal(&self.world, &self.setup.scenario, &mut self.rng);
            self.world.centroid_goal = g;
            // a goal reached on the last step still ends the episode
            finished = self.world.step_count >= self.world.params.max_steps;
        }
        let next_obs = self.observe_scans(&scans);
        Ok(StepOutcome {
            proposed,
            executed,
            rewards,
            deviation,
            fallbacks,
            status,
            goal_reached,
            terminal,
            finished,
            formation_error,
            next_obs,
        })
    }
}
