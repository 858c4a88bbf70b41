use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::geometry::Arena;
use crate::kinematics::ActionBounds;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverParams {
    pub max_iters: usize,
    pub step_tol: f64,
    pub cost_tol: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            max_iters: 30,
            step_tol: 1e-6,
            cost_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcConfig {
    /// Prediction horizon in steps.
    pub horizon: usize,
    pub dt: f64,
    /// Weight on the deviation of the first action from the proposed one.
    pub r0: [[f64; 2]; 2],
    /// Weight on the magnitude of later actions.
    pub r: [[f64; 2]; 2],
    /// Weight of the exponential proximity penalties.
    pub d: f64,
    pub bounds: ActionBounds,
    /// Admissible robot-center positions; `None` leaves states unbounded.
    pub state_box: Option<Arena>,
    pub robot_radius: f64,
    /// Clearance below which a step that closes in on a hazard is replaced
    /// by the stop-and-turn fallback.
    pub hard_stop_dist: f64,
    /// Turn rate of the fallback as a fraction of the angular bound.
    pub escape_turn: f64,
    pub solver: SolverParams,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            dt: 0.1,
            r0: [[10.0, 0.0], [0.0, 10.0]],
            r: [[0.5, 0.0], [0.0, 0.5]],
            d: 0.02,
            bounds: ActionBounds::default(),
            state_box: None,
            robot_radius: 0.15,
            hard_stop_dist: 0.05,
            escape_turn: 0.5,
            solver: SolverParams::default(),
        }
    }
}

fn positive_definite(m: &[[f64; 2]; 2]) -> bool {
    let sym = (m[0][1] - m[1][0]).abs() <= 1e-12 * (1.0 + m[0][1].abs());
    sym && m[0][0] > 0.0 && m[0][0] * m[1][1] - m[0][1] * m[1][0] > 0.0
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(SimError::MpcConfig(m.to_string()));
        if self.horizon == 0 {
            return err("horizon must be >= 1");
        }
        if !(self.dt > 0.0) {
            return err("dt must be positive");
        }
        if !positive_definite(&self.r0) || !positive_definite(&self.r) {
            return err("r0 and r must be symmetric positive definite");
        }
        if !(self.r0[0][0] > self.r[0][0] && self.r0[1][1] > self.r[1][1]) {
            return err("r0 must weigh each action component more than r");
        }
        if !(self.d >= 0.0 && self.d.is_finite()) {
            return err("d must be finite and non-negative");
        }
        if !(self.robot_radius > 0.0) {
            return err("robot_radius must be positive");
        }
        if !(self.hard_stop_dist > 0.0) {
            return err("hard_stop_dist must be positive");
        }
        if !(0.0..=1.0).contains(&self.escape_turn) {
            return err("escape_turn must lie in [0, 1]");
        }
        if self.solver.max_iters == 0 {
            return err("solver.max_iters must be >= 1");
        }
        self.bounds.validate().map_err(|e| SimError::MpcConfig(e.to_string()))
    }

    /// Whether two filtered robots closing at full speed can never cross the
    /// fallback margin within one step.
    pub fn guard_covers_pairs(&self) -> bool {
        let vmax = self.bounds.v_max.abs().max(self.bounds.v_min.abs());
        vmax * self.dt < self.hard_stop_dist
    }
}
