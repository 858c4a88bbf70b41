//! Receding-horizon NMPC safety filter.
//!
//! Each robot solves its own problem: stay close to the proposed action on
//! the first step, keep later controls small, and pay an exponential price
//! for predicted proximity to its two neighbors and the closest other
//! hazard. The problem has box constraints only, so a projected Newton
//! method with a curvature model of the penalties is enough.

mod config;
mod filter;
mod problem;
mod solver;

pub use config::{MpcConfig, SolverParams};

pub use problem::{cost, cost_and_gradient, rollout, MpcProblem};
pub use filter::{build_problem, filter_action, FilterOutcome, Intervention, SafetyFilter};
pub use solver::{solve, MpcSolution};
