//! The multi-robot world and its episode lifecycle.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::geometry::{Arena, Obstacle};
use crate::kinematics::{unicycle, ActionBounds, ActionCmd, Pose2D, Vec2};

/// Simulation constants shared by every episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    pub dt: f64,
    pub robot_radius: f64,
    pub bounds: ActionBounds,
    pub lidar_range: f64,
    /// Standard deviation of additive lidar noise in meters; 0 disables it.
    pub lidar_noise: f64,
    pub max_steps: usize,
    pub goal_tolerance: f64,
    pub stuck_eps: f64,
    pub stuck_steps: usize,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            robot_radius: 0.15,
            bounds: ActionBounds::default(),
            lidar_range: 3.5,
            lidar_noise: 0.0,
            max_steps: 1000,
            goal_tolerance: 0.15,
            stuck_eps: 0.01,
            stuck_steps: 50,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        let ok = self.dt > 0.0
            && self.robot_radius > 0.0
            && self.lidar_range > 0.0
            && self.lidar_noise >= 0.0
            && self.max_steps > 0
            && self.goal_tolerance > 0.0
            && self.stuck_eps >= 0.0
            && self.stuck_steps > 0;
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidInput(format!("bad sim params {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: Pose2D,
    pub last_action: ActionCmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeState {
    Running,
    GoalReached,
    Collision,
    Stuck,
    Timeout,
}

impl EpisodeState {
    pub fn as_str(&self) -> &'static str {
        match self {
            EpisodeState::Running => "running",
            EpisodeState::GoalReached => "goal_reached",
            EpisodeState::Collision => "collision",
            EpisodeState::Stuck => "stuck",
            EpisodeState::Timeout => "timeout",
        }
    }
}

/// Status after a step. `offending_robot` is set exactly for collision and
/// stuck outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeStatus {
    pub state: EpisodeState,
    pub offending_robot: Option<usize>,
}

impl EpisodeStatus {
    pub const RUNNING: EpisodeStatus = EpisodeStatus {
        state: EpisodeState::Running,
        offending_robot: None,
    };

    pub fn simple(state: EpisodeState) -> Self {
        debug_assert!(!matches!(state, EpisodeState::Collision | EpisodeState::Stuck));
        Self {
            state,
            offending_robot: None,
        }
    }

    pub fn with_robot(state: EpisodeState, robot: usize) -> Self {
        debug_assert!(matches!(state, EpisodeState::Collision | EpisodeState::Stuck));
        Self {
            state,
            offending_robot: Some(robot),
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.state != EpisodeState::Running
    }

    pub fn is_failure(&self) -> bool {
        matches!(self.state, EpisodeState::Collision | EpisodeState::Stuck)
    }
}

/// A hazard near a robot, described by its closest surface point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hazard {
    pub source: HazardSource,
    /// Closest point on the hazard's surface.
    pub point: Vec2,
    /// Surface-to-surface clearance from the robot disc.
    pub clearance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HazardSource {
    Robot(usize),
    Obstacle(usize),
    Wall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub robots: Vec<RobotState>,
    pub obstacles: Vec<Obstacle>,
    pub arena: Arena,
    pub centroid_goal: Vec2,
    pub step_count: usize,
    pub params: SimParams,
    /// Joint poses of the last `stuck_steps + 1` steps, oldest first.
    history: VecDeque<Vec<Pose2D>>,
}

impl WorldState {
    pub fn new(
        poses: Vec<Pose2D>,
        obstacles: Vec<Obstacle>,
        arena: Arena,
        centroid_goal: Vec2,
        params: SimParams,
    ) -> Result<Self> {
        params.validate()?;
        if poses.len() < 3 {
            return Err(SimError::InvalidInput(format!(
                "need at least 3 robots, got {}",
                poses.len()
            )));
        }
        if !poses.iter().all(Pose2D::is_finite) {
            return Err(SimError::InvalidInput("non-finite robot pose".into()));
        }
        if !arena.contains(centroid_goal) {
            return Err(SimError::InvalidInput(format!(
                "centroid goal {centroid_goal:?} outside arena"
            )));
        }
        for o in &obstacles {
            o.validate()?;
        }
        let robots = poses
            .iter()
            .map(|&pose| RobotState {
                pose: Pose2D::new(pose.x, pose.y, pose.theta),
                last_action: ActionCmd::ZERO,
            })
            .collect::<Vec<_>>();
        let mut history = VecDeque::with_capacity(params.stuck_steps + 1);
        history.push_back(robots.iter().map(|r| r.pose).collect());
        Ok(Self {
            robots,
            obstacles,
            arena,
            centroid_goal,
            step_count: 0,
            params,
            history,
        })
    }

    pub fn n_robots(&self) -> usize {
        self.robots.len()
    }

    pub fn robot_radius(&self) -> f64 {
        self.params.robot_radius
    }

    pub fn poses(&self) -> Vec<Pose2D> {
        self.robots.iter().map(|r| r.pose).collect()
    }

    pub fn position(&self, robot: usize) -> Vec2 {
        self.robots[robot].pose.position()
    }

    pub fn centroid(&self) -> Vec2 {
        centroid(self)
    }

    pub fn history(&self) -> &VecDeque<Vec<Pose2D>> {
        &self.history
    }

    /// Resets the stuck window, e.g. after the goal moves.
    pub fn reset_history(&mut self) {
        self.history.clear();
        self.history.push_back(self.poses());
    }

    /// Advances the world in place by one control step.
    pub fn step(&mut self, actions: &[ActionCmd]) -> Result<EpisodeStatus> {
        self.step_dt(actions, self.params.dt)
    }

    pub fn step_dt(&mut self, actions: &[ActionCmd], dt: f64) -> Result<EpisodeStatus> {
        if actions.len() != self.robots.len() {
            return Err(SimError::InvalidInput(format!(
                "expected {} actions, got {}",
                self.robots.len(),
                actions.len()
            )));
        }
        if !(dt > 0.0) {
            return Err(SimError::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        if let Some(bad) = actions.iter().find(|a| !a.is_finite()) {
            return Err(SimError::InvalidInput(format!("non-finite action {bad:?}")));
        }
        let bounds = self.params.bounds;
        for (robot, a) in self.robots.iter_mut().zip(actions) {
            let a = bounds.clamp(*a);
            robot.pose = unicycle(robot.pose, a, dt);
            robot.last_action = a;
        }
        let arena = self.arena;
        for o in &mut self.obstacles {
            o.advance(dt, &arena);
        }
        self.step_count += 1;
        self.history.push_back(self.poses());
        while self.history.len() > self.params.stuck_steps + 1 {
            self.history.pop_front();
        }
        Ok(self.evaluate_status())
    }

    /// Termination check on the current configuration.
    pub fn evaluate_status(&self) -> EpisodeStatus {
        if let Some(i) = self.first_colliding_robot() {
            return EpisodeStatus::with_robot(EpisodeState::Collision, i);
        }
        if (self.centroid() - self.centroid_goal).norm() < self.params.goal_tolerance {
            return EpisodeStatus::simple(EpisodeState::GoalReached);
        }
        let (h, k) = (&self.history, self.params.stuck_steps);
        if h.len() > k {
            let (first, last) = (&h[h.len() - 1 - k], &h[h.len() - 1]);
            if all_displacements_below(first, last, self.params.stuck_eps) {
                return EpisodeStatus::with_robot(EpisodeState::Stuck, least_moving(first, last));
            }
        }
        if self.step_count >= self.params.max_steps {
            return EpisodeStatus::simple(EpisodeState::Timeout);
        }
        EpisodeStatus::RUNNING
    }

    /// Lowest index of a robot in collision with a robot, obstacle or wall.
    pub fn first_colliding_robot(&self) -> Option<usize> {
        let r = self.params.robot_radius;
        (0..self.robots.len()).find(|&i| {
            let p = self.position(i);
            if self.arena.wall_distance(p) < r {
                return true;
            }
            if self.obstacles.iter().any(|o| o.signed_distance(p) < r) {
                return true;
            }
            (0..self.robots.len()).any(|j| j != i && (self.position(j) - p).norm() < 2.0 * r)
        })
    }

    /// Every hazard around robot `i` (other robots not in `exclude`,
    /// obstacles, nearest wall), evaluated at position `at`.
    pub fn hazards_at(&self, i: usize, at: Vec2, exclude: &[usize]) -> Vec<Hazard> {
        let r = self.params.robot_radius;
        let mut out = Vec::with_capacity(self.robots.len() + self.obstacles.len() + 1);
        let wall = self.arena.closest_wall_point(at);
        out.push(Hazard {
            source: HazardSource::Wall,
            point: wall,
            clearance: self.arena.wall_distance(at) - r,
        });
        for (k, o) in self.obstacles.iter().enumerate() {
            out.push(Hazard {
                source: HazardSource::Obstacle(k),
                point: o.closest_point(at),
                clearance: o.signed_distance(at) - r,
            });
        }
        for j in 0..self.robots.len() {
            if j == i || exclude.contains(&j) {
                continue;
            }
            let c = self.position(j);
            let d = at - c;
            let n = d.norm();
            let dir = if n > 1e-12 { d / n } else { Vec2::new(1.0, 0.0) };
            out.push(Hazard {
                source: HazardSource::Robot(j),
                point: c + dir * r,
                clearance: n - 2.0 * r,
            });
        }
        out
    }

    /// Closest hazard to robot `i` at its current position.
    pub fn nearest_hazard(&self, i: usize, exclude: &[usize]) -> Hazard {
        let at = self.position(i);
        self.hazards_at(i, at, exclude)
            .into_iter()
            .min_by(|a, b| a.clearance.total_cmp(&b.clearance))
            .expect("the wall is always a hazard")
    }
}

fn all_displacements_below(first: &[Pose2D], last: &[Pose2D], eps: f64) -> bool {
    first
        .iter()
        .zip(last)
        .all(|(a, b)| (b.position() - a.position()).norm() < eps)
}

fn least_moving(first: &[Pose2D], last: &[Pose2D]) -> usize {
    let moved = |i: usize| (last[i].position() - first[i].position()).norm();
    (0..first.len())
        .min_by(|&a, &b| moved(a).total_cmp(&moved(b)))
        .unwrap_or(0)
}

/// Functional form of [`WorldState::step_dt`].
pub fn step_world(world: &WorldState, actions: &[ActionCmd], dt: f64) -> Result<(WorldState, EpisodeStatus)> {
    let mut next = world.clone();
    let status = next.step_dt(actions, dt)?;
    Ok((next, status))
}

/// Arithmetic mean of robot positions.
pub fn centroid(world: &WorldState) -> Vec2 {
    let n = world.robots.len().max(1) as f64;
    world.robots.iter().fold(Vec2::zeros(), |acc, r| acc + r.pose.position()) / n
}

/// True iff the window spans at least `k` steps and every robot's net
/// displacement over the last `k` steps is below `eps`.
///
/// `history[t][i]` is robot `i`'s pose at time `t`, oldest first.
pub fn detect_stuck(history: &[Vec<Pose2D>], eps: f64, k: usize) -> bool {
    if k == 0 || history.len() < k + 1 {
        return false;
    }
    all_displacements_below(&history[history.len() - 1 - k], &history[history.len() - 1], eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle_world() -> WorldState {
        WorldState::new(
            vec![
                Pose2D::new(0.0, 0.0, 0.0),
                Pose2D::new(2.0, 0.0, 0.0),
                Pose2D::new(1.0, 3.0, 0.0),
            ],
            vec![],
            Arena::square(10.0),
            Vec2::new(4.0, 4.0),
            SimParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn centroid_is_mean() {
        let w = triangle_world();
        assert!((centroid(&w) - Vec2::new(1.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn zero_actions_keep_poses() {
        let w = triangle_world();
        let (next, status) = step_world(&w, &[ActionCmd::ZERO; 3], 0.1).unwrap();
        assert_eq!(next.poses(), w.poses());
        assert_eq!(status, EpisodeStatus::RUNNING);
        assert_eq!(next.step_count, 1);
    }

    #[test]
    fn action_count_mismatch() {
        let w = triangle_world();
        assert!(step_world(&w, &[ActionCmd::ZERO; 2], 0.1).is_err());
    }

    #[test]
    fn collision_after_step() {
        let eps = 1e-3;
        let mut w = WorldState::new(
            vec![
                Pose2D::new(0.0, 0.0, 0.0),
                Pose2D::new(0.3 - eps + 0.022, 0.0, 0.0),
                Pose2D::new(0.0, 3.0, 0.0),
            ],
            vec![],
            Arena::square(10.0),
            Vec2::new(4.0, 4.0),
            SimParams::default(),
        )
        .unwrap();
        let s = w.step(&[ActionCmd::new(0.22, 0.0), ActionCmd::ZERO, ActionCmd::ZERO]).unwrap();
        assert_eq!(s.state, EpisodeState::Collision);
        assert_eq!(s.offending_robot, Some(0));
    }

    #[test]
    fn timeout_at_max_steps() {
        let mut params = SimParams::default();
        params.max_steps = 5;
        params.stuck_steps = 50;
        let mut w = WorldState::new(
            triangle_world().poses(),
            vec![],
            Arena::square(10.0),
            Vec2::new(4.0, 4.0),
            params,
        )
        .unwrap();
        let mut last = EpisodeStatus::RUNNING;
        for _ in 0..5 {
            last = w.step(&[ActionCmd::new(0.1, 0.3); 3]).unwrap();
        }
        assert_eq!(last.state, EpisodeState::Timeout);
    }

    #[test]
    fn stuck_detection_cases() {
        let k = 5;
        let still: Vec<Vec<Pose2D>> = (0..=k).map(|_| vec![Pose2D::default(); 3]).collect();
        assert!(detect_stuck(&still, 0.01, k));
        let moving: Vec<Vec<Pose2D>> = (0..=k)
            .map(|t| vec![Pose2D::new(0.02 * t as f64, 0.0, 0.0); 3])
            .collect();
        assert!(!detect_stuck(&moving, 0.01, k));
        // back and forth by 0.1 m, ending 0.004 m from the start
        let osc: Vec<Vec<Pose2D>> = (0..=k)
            .map(|t| {
                let x = if t == k { 0.004 } else if t % 2 == 1 { 0.1 } else { 0.0 };
                vec![Pose2D::new(x, 0.0, 0.0); 3]
            })
            .collect();
        assert!(detect_stuck(&osc, 0.01, k));
        assert!(!detect_stuck(&still[..k], 0.01, k));
    }

    #[test]
    fn world_becomes_stuck_under_zero_actions() {
        let mut w = triangle_world();
        let mut status = EpisodeStatus::RUNNING;
        for _ in 0..50 {
            status = w.step(&[ActionCmd::ZERO; 3]).unwrap();
        }
        assert_eq!(status.state, EpisodeState::Stuck);
        assert!(status.offending_robot.is_some());
    }

    #[test]
    fn hazards_include_walls_obstacles_robots() {
        let mut w = triangle_world();
        w.obstacles.push(Obstacle::cylinder(0.0, -1.0, 0.2));
        let h = w.nearest_hazard(0, &[]);
        assert_eq!(h.source, HazardSource::Obstacle(0));
        assert!((h.clearance - (0.8 - 0.15)).abs() < 1e-12);
        let hs = w.hazards_at(0, w.position(0), &[1]);
        assert!(hs.iter().all(|h| h.source != HazardSource::Robot(1)));
        assert!(hs.iter().any(|h| h.source == HazardSource::Robot(2)));
    }
}
