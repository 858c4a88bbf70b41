//! Per-robot reward, formation error and the MPC-deviation measure.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::kinematics::{ActionBounds, ActionCmd};
use crate::observation::NeighborAssignment;
use crate::world::{EpisodeState, EpisodeStatus, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub r_goal: f64,
    pub r_collision: f64,
    pub c_form: f64,
    pub c_obs: f64,
    /// Obstacle clearance (lidar range) below which the obstacle term is active.
    pub d_safe: f64,
    pub c_cent: f64,
    pub c_dev: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            r_goal: 20.0,
            r_collision: -20.0,
            c_form: 1.0,
            c_obs: 1.0,
            d_safe: 0.5,
            c_cent: 0.5,
            c_dev: 0.5,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.r_goal, self.r_collision, self.c_form, self.c_obs, self.d_safe, self.c_cent, self.c_dev];
        let ok = all.iter().all(|x| x.is_finite())
            && self.r_collision <= 0.0
            && self.r_goal >= 0.0
            && self.c_form >= 0.0
            && self.c_obs >= 0.0
            && self.c_cent >= 0.0
            && self.c_dev >= 0.0
            && self.d_safe >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidInput(format!("bad reward weights {self:?}")))
        }
    }
}

pub const TERM_GOAL: &str = "goal";
pub const TERM_COLLISION: &str = "collision";
pub const TERM_FORMATION: &str = "formation";
pub const TERM_OBSTACLE: &str = "obstacle";
pub const TERM_CENTROID: &str = "centroid";
pub const TERM_DEVIATION: &str = "deviation";

#[derive(Debug, Clone, PartialEq)]
pub struct RewardBreakdown {
    pub total: f64,
    pub components: BTreeMap<&'static str, f64>,
}

impl RewardBreakdown {
    fn from_components(components: BTreeMap<&'static str, f64>) -> Self {
        Self {
            total: components.values().sum(),
            components,
        }
    }

    pub fn get(&self, term: &str) -> f64 {
        self.components.get(term).copied().unwrap_or(0.0)
    }
}

/// Static per-episode inputs to the reward.
#[derive(Debug, Clone, Copy)]
pub struct RewardContext<'a> {
    pub assignment: &'a NeighborAssignment,
    pub d_ref: f64,
    pub bounds: &'a ActionBounds,
    pub weights: &'a RewardWeights,
}

/// Reward of `robot` after a step.
///
/// Exactly one of the goal, failure, or shaping branches contributes; the
/// deviation penalty is added in every branch. `d_obs` is the robot's
/// closest lidar return in meters.
pub fn compute_reward(
    world: &WorldState,
    robot: usize,
    status: &EpisodeStatus,
    a_rl: ActionCmd,
    a_mpc: ActionCmd,
    d_obs: f64,
    ctx: &RewardContext<'_>,
) -> RewardBreakdown {
    let w = ctx.weights;
    let mut c = BTreeMap::new();
    match status.state {
        EpisodeState::GoalReached => {
            c.insert(TERM_GOAL, w.r_goal);
        }
        EpisodeState::Collision | EpisodeState::Stuck => {
            c.insert(TERM_COLLISION, w.r_collision);
        }
        EpisodeState::Running | EpisodeState::Timeout => {
            let (n1, n2) = ctx.assignment.neighbors(robot);
            let p = world.position(robot);
            let r_form = -[n1, n2]
                .iter()
                .map(|&j| ((world.position(j) - p).norm() - ctx.d_ref).abs())
                .sum::<f64>();
            let r_obs = -(w.d_safe - d_obs).max(0.0);
            let r_cent = -(world.centroid() - world.centroid_goal).norm();
            c.insert(TERM_FORMATION, w.c_form * r_form);
            c.insert(TERM_OBSTACLE, w.c_obs * r_obs);
            c.insert(TERM_CENTROID, w.c_cent * r_cent);
        }
    }
    c.insert(TERM_DEVIATION, -w.c_dev * mpc_deviation(a_rl, a_mpc, ctx.bounds));
    RewardBreakdown::from_components(c)
}

/// Mean absolute ring-edge error `(1/N) Σ_i |d(i, i+1) - d_ref|`.
pub fn formation_error(world: &WorldState, assignment: &NeighborAssignment, d_ref: f64) -> f64 {
    let n = world.n_robots();
    let sum: f64 = assignment
        .ring_edges()
        .map(|(i, j)| ((world.position(i) - world.position(j)).norm() - d_ref).abs())
        .sum();
    sum / n as f64
}

/// Euclidean distance between two actions with each axis scaled by the
/// width of its bound.
pub fn mpc_deviation(a_rl: ActionCmd, a_mpc: ActionCmd, bounds: &ActionBounds) -> f64 {
    let dv = (a_rl.v - a_mpc.v) / bounds.v_width();
    let dw = (a_rl.w - a_mpc.w) / bounds.w_width();
    dv.hypot(dw)
}
