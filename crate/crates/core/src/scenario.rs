//! Scenario generation and scenario files.
//!
//! A [`ScenarioSpec`] names a family of start configurations; together with
//! [`ScenarioParams`] and a seed it yields a reproducible [`WorldState`].
//! Named layouts ship as TOML scenario files:
//!
//! ```toml
//! name = "face-to-face"
//! arena = { x_min = -4.0, x_max = 4.0, y_min = -4.0, y_max = 4.0 }
//! goals = [[0.0, 1.5]]            # centroid goal(s), in order
//! robots = [[-1.0, 0.0, 0.0], [1.0, 0.0, 3.1416], [0.0, -1.2, 1.5708]]  # x, y, theta
//!
//! [[obstacles]]                   # optional
//! kind = "cylinder"               # cylinder | box | wall-segment | dynamic-cylinder
//! center = [0.0, 3.0]
//! radius = 0.3
//! ```

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::geometry::{Arena, Obstacle};
use crate::kinematics::{Pose2D, Vec2};
use crate::world::{SimParams, WorldState};

pub const NAMED_CONFIGS: [&str; 5] = ["in-formation", "3-corners", "centerline", "collinear", "face-to-face"];
pub const N_S_PATHS: u8 = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ScenarioSpec {
    EmptyWalled,
    /// Static cylinders.
    RandomObstacles(usize),
    /// Static cylinders, boxes and wall sections.
    MixedObstacles(usize),
    /// Cylinders moving at constant speed, reflecting off the walls.
    DynamicObstacles(usize),
    Named(String),
    /// Sinusoidal centroid path, ids `1..=8`.
    SPath(u8),
}

impl fmt::Display for ScenarioSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioSpec::EmptyWalled => write!(f, "empty-walled"),
            ScenarioSpec::RandomObstacles(k) => write!(f, "random-obstacles:{k}"),
            ScenarioSpec::MixedObstacles(k) => write!(f, "mixed-obstacles:{k}"),
            ScenarioSpec::DynamicObstacles(k) => write!(f, "dynamic-obstacles:{k}"),
            ScenarioSpec::Named(n) => write!(f, "named:{n}"),
            ScenarioSpec::SPath(id) => write!(f, "s-path:{id}"),
        }
    }
}

impl FromStr for ScenarioSpec {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let count = |a: Option<&str>| -> Result<usize> {
            a.ok_or_else(|| SimError::Scenario(format!("{head} needs a count, e.g. {head}:3")))?
                .parse()
                .map_err(|_| SimError::Scenario(format!("bad count in {s:?}")))
        };
        let spec = match head {
            "empty-walled" => ScenarioSpec::EmptyWalled,
            "random-obstacles" => ScenarioSpec::RandomObstacles(count(arg)?),
            "mixed-obstacles" => ScenarioSpec::MixedObstacles(count(arg)?),
            "dynamic-obstacles" => ScenarioSpec::DynamicObstacles(count(arg)?),
            "named" => {
                let name = arg.ok_or_else(|| SimError::Scenario("named needs a configuration name".into()))?;
                if !NAMED_CONFIGS.contains(&name) {
                    return Err(SimError::Scenario(format!(
                        "unknown named configuration {name:?}; expected one of {NAMED_CONFIGS:?}"
                    )));
                }
                ScenarioSpec::Named(name.to_string())
            }
            "s-path" => {
                let id: u8 = count(arg)?
                    .try_into()
                    .map_err(|_| SimError::Scenario(format!("bad s-path id in {s:?}")))?;
                if !(1..=N_S_PATHS).contains(&id) {
                    return Err(SimError::Scenario(format!("s-path id must be in 1..={N_S_PATHS}, got {id}")));
                }
                ScenarioSpec::SPath(id)
            }
            other => return Err(SimError::Scenario(format!("unknown scenario kind {other:?}"))),
        };
        Ok(spec)
    }
}

impl TryFrom<String> for ScenarioSpec {
    type Error = SimError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ScenarioSpec> for String {
    fn from(s: ScenarioSpec) -> String {
        s.to_string()
    }
}

/// Generator settings for randomized scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioParams {
    pub arena_side: f64,
    pub n_robots: usize,
    /// Side of the square robots are spawned in, for three robots; scaled by
    /// `sqrt(n / 3)` for larger teams.
    pub spawn_side: f64,
    /// Minimum center distance between spawned robots.
    pub spawn_clearance: f64,
    /// Minimum distance of robot centers and goals from the walls.
    pub wall_margin: f64,
    pub goal_distance_min: f64,
    pub goal_distance_max: f64,
    pub obstacle_radius_min: f64,
    pub obstacle_radius_max: f64,
    /// Minimum obstacle-surface distance to any robot center or the goal.
    pub obstacle_clearance: f64,
    /// Minimum surface gap between two obstacles.
    pub obstacle_gap: f64,
    pub dynamic_speed: f64,
    pub max_attempts: usize,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            arena_side: 8.0,
            n_robots: 3,
            spawn_side: 3.0,
            spawn_clearance: 0.6,
            wall_margin: 1.0,
            goal_distance_min: 1.0,
            goal_distance_max: 3.0,
            obstacle_radius_min: 0.15,
            obstacle_radius_max: 0.35,
            obstacle_clearance: 0.5,
            obstacle_gap: 0.4,
            dynamic_speed: 0.15,
            max_attempts: 10_000,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.arena_side > 2.0 * self.wall_margin
            && self.n_robots >= 3
            && self.spawn_side > 0.0
            && self.spawn_clearance > 0.0
            && self.goal_distance_min >= 0.0
            && self.goal_distance_max >= self.goal_distance_min
            && self.obstacle_radius_min > 0.0
            && self.obstacle_radius_max >= self.obstacle_radius_min
            && self.max_attempts > 0;
        if ok {
            Ok(())
        } else {
            Err(SimError::Scenario(format!("bad scenario params {self:?}")))
        }
    }

    fn arena(&self) -> Arena {
        Arena::square(self.arena_side)
    }
}

/// Explicit layout read from a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub arena: Arena,
    pub goals: Vec<[f64; 2]>,
    pub robots: Vec<[f64; 3]>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        let f: ScenarioFile = toml::from_str(text)?;
        Ok(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Scenario(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| SimError::Scenario(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario files are always serializable")
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let text = match name {
            "in-formation" => include_str!("../scenarios/in-formation.toml"),
            "3-corners" => include_str!("../scenarios/3-corners.toml"),
            "centerline" => include_str!("../scenarios/centerline.toml"),
            "collinear" => include_str!("../scenarios/collinear.toml"),
            "face-to-face" => include_str!("../scenarios/face-to-face.toml"),
            other => return Err(SimError::Scenario(format!("no built-in scenario {other:?}"))),
        };
        Self::parse(text)
    }

    /// Checks geometry against the simulation constants: at least three
    /// robots, everything inside the arena, and no initial contact.
    pub fn validate(&self, sim: &SimParams) -> Result<()> {
        self.to_world(sim).and_then(|w| match w.first_colliding_robot() {
            Some(i) => Err(SimError::Scenario(format!("robot {i} starts in contact"))),
            None => Ok(()),
        })
    }

    pub fn to_world(&self, sim: &SimParams) -> Result<WorldState> {
        let goal = self
            .goals
            .first()
            .ok_or_else(|| SimError::Scenario(format!("{}: at least one goal required", self.name)))?;
        let poses = self.robots.iter().map(|r| Pose2D::new(r[0], r[1], r[2])).collect();
        WorldState::new(poses, self.obstacles.clone(), self.arena, Vec2::from(*goal), *sim)
    }
}

/// Centroid waypoints of the sinusoidal path `id` (`1..=8`).
pub fn s_path_waypoints(id: u8) -> Result<Vec<Vec2>> {
    // (amplitude, periods, phase, mirrored)
    const VARIANTS: [(f64, f64, f64, bool); 8] = [
        (1.0, 1.0, 0.0, false),
        (1.0, 1.0, 0.0, true),
        (1.5, 1.0, 0.0, false),
        (1.5, 1.0, 0.0, true),
        (1.0, 0.75, 0.0, false),
        (1.0, 1.25, 0.0, false),
        (1.2, 1.0, PI / 4.0, false),
        (1.2, 1.0, -PI / 4.0, true),
    ];
    if !(1..=N_S_PATHS).contains(&id) {
        return Err(SimError::Scenario(format!("s-path id must be in 1..={N_S_PATHS}, got {id}")));
    }
    let (amp, periods, phase, mirrored) = VARIANTS[(id - 1) as usize];
    let n = 8;
    Ok((0..n)
        .map(|i| {
            let s = i as f64 / (n - 1) as f64;
            let y = amp * (2.0 * PI * periods * s + phase).sin();
            Vec2::new(-3.0 + 6.5 * s, if mirrored { -y } else { y })
        })
        .collect())
}

pub const S_PATH_ARENA_SIDE: f64 = 10.0;

struct Spawner<'a> {
    params: &'a ScenarioParams,
    sim: &'a SimParams,
    rng: ChaCha8Rng,
    attempts: usize,
}

impl Spawner<'_> {
    fn tick(&mut self, what: &str) -> Result<()> {
        self.attempts += 1;
        if self.attempts > self.params.max_attempts {
            return Err(SimError::SpawnFailure {
                attempts: self.attempts - 1,
                what: what.to_string(),
            });
        }
        Ok(())
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            lo
        } else {
            self.rng.random_range(lo..hi)
        }
    }

    /// Team of `n` robots inside a square of side `side` centered at `center`.
    fn robots(&mut self, arena: &Arena, center: Vec2, side: f64, n: usize) -> Result<Vec<Pose2D>> {
        let inner = arena.shrink(self.params.wall_margin.max(self.sim.robot_radius));
        let mut poses: Vec<Pose2D> = Vec::with_capacity(n);
        while poses.len() < n {
            self.tick("robot placement")?;
            let p = Vec2::new(
                center.x + self.uniform(-0.5 * side, 0.5 * side),
                center.y + self.uniform(-0.5 * side, 0.5 * side),
            );
            if !inner.contains(p) {
                continue;
            }
            if poses.iter().any(|q| (q.position() - p).norm() < self.params.spawn_clearance) {
                continue;
            }
            let theta = self.uniform(-PI, PI);
            poses.push(Pose2D::new(p.x, p.y, theta));
        }
        Ok(poses)
    }

    fn goal_from(&mut self, arena: &Arena, from: Vec2) -> Result<Vec2> {
        let inner = arena.shrink(self.params.wall_margin);
        loop {
            self.tick("goal placement")?;
            let a = self.uniform(-PI, PI);
            let d = self.uniform(self.params.goal_distance_min, self.params.goal_distance_max);
            let g = from + Vec2::new(a.cos(), a.sin()) * d;
            if inner.contains(g) {
                return Ok(g);
            }
        }
    }

    fn obstacles(&mut self, arena: &Arena, robots: &[Pose2D], goal: Vec2, k: usize, mix: ObstacleMix) -> Result<Vec<Obstacle>> {
        // obstacles go where they matter: around the team and its goal
        let c = robots.iter().fold(Vec2::zeros(), |a, p| a + p.position()) / robots.len() as f64;
        let lo = Vec2::new(c.x.min(goal.x) - 2.0, c.y.min(goal.y) - 2.0);
        let hi = Vec2::new(c.x.max(goal.x) + 2.0, c.y.max(goal.y) + 2.0);
        let p = *self.params;
        let mut out: Vec<Obstacle> = Vec::with_capacity(k);
        while out.len() < k {
            self.tick("obstacle placement")?;
            let center = Vec2::new(self.uniform(lo.x, hi.x), self.uniform(lo.y, hi.y));
            let kind = match mix {
                ObstacleMix::Cylinders | ObstacleMix::Dynamic => 0,
                ObstacleMix::Mixed => self.rng.random_range(0..3),
            };
            let ob = match kind {
                0 => {
                    let radius = self.uniform(p.obstacle_radius_min, p.obstacle_radius_max);
                    if mix == ObstacleMix::Dynamic {
                        let a = self.uniform(-PI, PI);
                        Obstacle::DynamicCylinder {
                            center: center.into(),
                            radius,
                            velocity: [p.dynamic_speed * a.cos(), p.dynamic_speed * a.sin()],
                        }
                    } else {
                        Obstacle::Cylinder { center: center.into(), radius }
                    }
                }
                1 => Obstacle::Box {
                    center: center.into(),
                    half_extents: [
                        self.uniform(p.obstacle_radius_min, p.obstacle_radius_max),
                        self.uniform(p.obstacle_radius_min, p.obstacle_radius_max),
                    ],
                    rotation: self.uniform(-PI, PI),
                },
                _ => {
                    let len = self.uniform(0.6, 1.2);
                    let a = self.uniform(-PI, PI);
                    let d = Vec2::new(a.cos(), a.sin()) * (0.5 * len);
                    Obstacle::WallSegment {
                        start: (center - d).into(),
                        end: (center + d).into(),
                        thickness: 0.1,
                    }
                }
            };
            let br = ob.bounding_radius();
            if arena.wall_distance(center) < br + 2.0 * self.sim.robot_radius + p.obstacle_gap {
                continue;
            }
            let robot_clear = robots.iter().all(|r| ob.signed_distance(r.position()) >= p.obstacle_clearance + self.sim.robot_radius);
            // robots gather roughly a formation circumradius around the goal
            let goal_clear = ob.signed_distance(goal) >= p.obstacle_clearance + 0.6;
            let gap_ok = out
                .iter()
                .all(|o| (o.center() - center).norm() >= o.bounding_radius() + br + p.obstacle_gap);
            if robot_clear && goal_clear && gap_ok {
                out.push(ob);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ObstacleMix {
    Cylinders,
    Mixed,
    Dynamic,
}

/// Reproducible start configuration for `spec`.
pub fn spawn_scenario(spec: &ScenarioSpec, params: &ScenarioParams, sim: &SimParams, seed: u64) -> Result<WorldState> {
    params.validate()?;
    sim.validate()?;
    let mut sp = Spawner {
        params,
        sim,
        rng: ChaCha8Rng::seed_from_u64(seed),
        attempts: 0,
    };
    let n = params.n_robots;
    let side = params.spawn_side * (n as f64 / 3.0).sqrt();
    match spec {
        ScenarioSpec::Named(name) => {
            let file = ScenarioFile::builtin(name)?;
            if n != file.robots.len() {
                return Err(SimError::Scenario(format!(
                    "{name} is a {}-robot layout, {n} robots requested",
                    file.robots.len()
                )));
            }
            file.to_world(sim)
        }
        ScenarioSpec::SPath(id) => {
            let waypoints = s_path_waypoints(*id)?;
            let arena = Arena::square(S_PATH_ARENA_SIDE);
            let start = waypoints[0] - Vec2::new(1.0, 0.0);
            let robots = sp.robots(&arena, start, side.min(2.0), n)?;
            WorldState::new(robots, vec![], arena, waypoints[0], *sim)
        }
        _ => {
            let arena = params.arena();
            let inner = arena.shrink(params.wall_margin + 0.5 * side);
            let center = Vec2::new(sp.uniform(inner.x_min, inner.x_max), sp.uniform(inner.y_min, inner.y_max));
            let robots = sp.robots(&arena, center, side, n)?;
            let c = robots.iter().fold(Vec2::zeros(), |a, p| a + p.position()) / n as f64;
            let goal = sp.goal_from(&arena, c)?;
            let obstacles = match spec {
                ScenarioSpec::RandomObstacles(k) => sp.obstacles(&arena, &robots, goal, *k, ObstacleMix::Cylinders)?,
                ScenarioSpec::MixedObstacles(k) => sp.obstacles(&arena, &robots, goal, *k, ObstacleMix::Mixed)?,
                ScenarioSpec::DynamicObstacles(k) => sp.obstacles(&arena, &robots, goal, *k, ObstacleMix::Dynamic)?,
                _ => vec![],
            };
            WorldState::new(robots, obstacles, arena, goal, *sim)
        }
    }
}

/// Samples a fresh centroid goal for a running episode.
pub fn resample_goal<R: Rng>(world: &WorldState, params: &ScenarioParams, rng: &mut R) -> Vec2 {
    let inner = world.arena.shrink(params.wall_margin);
    let c = world.centroid();
    for _ in 0..params.max_attempts {
        let a = rng.random_range(-PI..PI);
        let d = if params.goal_distance_max > params.goal_distance_min {
            rng.random_range(params.goal_distance_min..params.goal_distance_max)
        } else {
            params.goal_distance_min
        };
        let g = c + Vec2::new(a.cos(), a.sin()) * d;
        let clear = world.obstacles.iter().all(|o| o.signed_distance(g) >= params.obstacle_clearance + 0.6);
        if inner.contains(g) && clear {
            return g;
        }
    }
    inner.center()
}
