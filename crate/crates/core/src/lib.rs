//! Simulation core for safe cooperative navigation of differential-drive
//! robot teams: kinematics, world and scenarios, lidar, observations,
//! rewards, and the per-robot NMPC safety filter.

pub mod error;
pub mod geometry;
pub mod kinematics;
pub mod lidar;
pub mod mpc;
pub mod observation;
pub mod reward;
pub mod scenario;
pub mod trace;
pub mod world;

pub use error::{Result, SimError};
pub use geometry::{Arena, Obstacle};
pub use kinematics::{step_unicycle, wrap_angle, ActionBounds, ActionCmd, Pose2D, Vec2};
pub use scenario::{spawn_scenario, ScenarioFile, ScenarioParams, ScenarioSpec};
pub use trace::{Trace, TraceRow};
pub use world::{centroid, detect_stuck, step_world, EpisodeState, EpisodeStatus, SimParams, WorldState};
