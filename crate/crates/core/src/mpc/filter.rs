//! Per-robot filtering of proposed actions against the live world.

use crate::kinematics::{unicycle, ActionCmd, Vec2};
use crate::observation::{relative_polar, NeighborAssignment};
use crate::world::{HazardSource, WorldState};

use super::config::MpcConfig;
use super::problem::MpcProblem;
use super::solver::{solve, MpcSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Intervention {
    /// The optimized first action was executed.
    Optimized,
    /// The one-step clearance check rejected the optimized action, or the
    /// solver failed near a hazard; the robot stops and turns away.
    Fallback,
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub action: ActionCmd,
    pub solution: MpcSolution,
    pub intervention: Intervention,
}

/// Builds robot `robot`'s problem from current measurements: its two
/// neighbors, and the closest point of the nearest other hazard (walls,
/// obstacles and non-neighbor robots, as a lidar would see them).
pub fn build_problem(
    world: &WorldState,
    robot: usize,
    assignment: &NeighborAssignment,
    a_rl: ActionCmd,
    config: &MpcConfig,
) -> MpcProblem {
    let (n1, n2) = assignment.neighbors(robot);
    let hazard = world.nearest_hazard(robot, &[n1, n2]);
    let mut cfg = *config;
    cfg.robot_radius = world.robot_radius();
    cfg.state_box = Some(world.arena.shrink(world.robot_radius()));
    MpcProblem {
        x0: world.robots[robot].pose,
        a_rl: cfg.bounds.clamp(a_rl),
        neighbor_positions: [Some(world.position(n1)), Some(world.position(n2))],
        obstacle_position: Some(hazard.point),
        config: cfg,
    }
}

/// Whether moving robot `robot` from its position to `next` keeps clear of
/// every hazard. A step that ends below `margin` is still allowed when it
/// does not close in on that hazard.
fn step_is_clear(world: &WorldState, robot: usize, next: Vec2, margin: f64) -> bool {
    let here = world.position(robot);
    let now = world.hazards_at(robot, here, &[]);
    let then = world.hazards_at(robot, next, &[]);
    now.iter().zip(&then).all(|(h0, h1)| {
        debug_assert_eq!(h0.source, h1.source);
        if h1.clearance >= margin {
            return true;
        }
        match h1.source {
            HazardSource::Robot(j) => {
                // first-order non-approach keeps simultaneous moves safe
                let away = here - world.position(j);
                h1.clearance >= h0.clearance && away.dot(&(next - here)) >= 0.0
            }
            _ => h1.clearance >= h0.clearance,
        }
    })
}

fn fallback_action(world: &WorldState, robot: usize, config: &MpcConfig) -> ActionCmd {
    let pose = world.robots[robot].pose;
    let h = world.nearest_hazard(robot, &[]);
    let (_, bearing) = relative_polar(pose, h.point);
    let rate = config.escape_turn * config.bounds.w_max.min(-config.bounds.w_min);
    let w = if bearing >= 0.0 { -rate } else { rate };
    config.bounds.clamp(ActionCmd::new(0.0_f64.clamp(config.bounds.v_min, config.bounds.v_max), w))
}

/// Filters `a_rl` for robot `robot`. Always returns an executable action
/// within the action bounds.
pub fn filter_action(
    world: &WorldState,
    robot: usize,
    assignment: &NeighborAssignment,
    a_rl: ActionCmd,
    warm_start: Option<&[ActionCmd]>,
    config: &MpcConfig,
) -> FilterOutcome {
    let problem = build_problem(world, robot, assignment, a_rl, config);
    let solution = solve(&problem, warm_start);
    let candidate = solution.first_action();

    let pose = world.robots[robot].pose;
    let next = unicycle(pose, candidate, problem.config.dt).position();
    let solver_failed_near_hazard =
        !solution.converged && problem.min_clearance(&solution.states) < config.hard_stop_dist;
    let clear = step_is_clear(world, robot, next, config.hard_stop_dist);

    if clear && !solver_failed_near_hazard {
        FilterOutcome {
            action: candidate,
            solution,
            intervention: Intervention::Optimized,
        }
    } else {
        FilterOutcome {
            action: fallback_action(world, robot, config),
            solution,
            intervention: Intervention::Fallback,
        }
    }
}

/// Bank of per-robot filters that carries warm starts between steps.
#[derive(Debug, Clone)]
pub struct SafetyFilter {
    pub config: MpcConfig,
    warm: Vec<Option<Vec<ActionCmd>>>,
}

impl SafetyFilter {
    pub fn new(config: MpcConfig, n_robots: usize) -> Self {
        Self {
            config,
            warm: vec![None; n_robots],
        }
    }

    pub fn reset(&mut self) {
        self.warm.iter_mut().for_each(|w| *w = None);
    }

    /// Filters every robot's proposal against the same world snapshot.
    pub fn filter_all(
        &mut self,
        world: &WorldState,
        assignment: &NeighborAssignment,
        proposals: &[ActionCmd],
    ) -> Vec<FilterOutcome> {
        if self.warm.len() != world.n_robots() {
            self.warm = vec![None; world.n_robots()];
        }
        proposals
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let out = filter_action(world, i, assignment, *a, self.warm[i].as_deref(), &self.config);
                self.warm[i] = Some(out.solution.shifted());
                out
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Arena;
    use crate::kinematics::Pose2D;
    use crate::world::SimParams;

    fn world(poses: Vec<Pose2D>) -> WorldState {
        WorldState::new(poses, vec![], Arena::square(12.0), Vec2::zeros(), SimParams::default()).unwrap()
    }

    #[test]
    fn open_space_passes_through() {
        let w = world(vec![Pose2D::new(0.0, 0.0, 0.2), Pose2D::new(4.0, 0.0, 0.0), Pose2D::new(0.0, 4.0, 0.0)]);
        let a = NeighborAssignment::ring(3).unwrap();
        let out = filter_action(&w, 0, &a, ActionCmd::new(0.2, 1.0), None, &MpcConfig::default());
        assert_eq!(out.intervention, Intervention::Optimized);
        assert!((out.action.v - 0.2).abs() < 1e-3 && (out.action.w - 1.0).abs() < 1e-3);
    }

    #[test]
    fn out_of_bounds_proposal_is_clamped() {
        let w = world(vec![Pose2D::new(0.0, 0.0, 0.2), Pose2D::new(4.0, 0.0, 0.0), Pose2D::new(0.0, 4.0, 0.0)]);
        let a = NeighborAssignment::ring(3).unwrap();
        let cfg = MpcConfig::default();
        let out = filter_action(&w, 0, &a, ActionCmd::new(3.0, -9.0), None, &cfg);
        assert!(cfg.bounds.contains(out.action));
    }

    #[test]
    fn head_on_pair_stays_apart() {
        let mut w = world(vec![Pose2D::new(-0.6, 0.0, 0.0), Pose2D::new(0.6, 0.0, std::f64::consts::PI), Pose2D::new(0.0, 4.0, 0.0)]);
        let a = NeighborAssignment::ring(3).unwrap();
        let mut f = SafetyFilter::new(MpcConfig::default(), 3);
        for _ in 0..200 {
            let outs = f.filter_all(&w, &a, &[ActionCmd::new(0.22, 0.0), ActionCmd::new(0.22, 0.0), ActionCmd::ZERO]);
            let acts: Vec<ActionCmd> = outs.iter().map(|o| o.action).collect();
            let s = w.step(&acts).unwrap();
            assert_ne!(s.state, crate::world::EpisodeState::Collision);
            assert!((w.position(0) - w.position(1)).norm() >= 0.3);
        }
    }
}
