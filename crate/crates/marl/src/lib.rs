//! Centralized-training, decentralized-execution soft actor-critic for robot
//! teams, with attention critics and the NMPC safety filter in the loop.

pub mod actor;
pub mod buffer;
pub mod critic;
pub mod env;
pub mod error;
pub mod eval;
pub mod sac;
pub mod train;

pub use actor::{Actor, ACT_DIM};
pub use buffer::{Batch, JointTransition, ReplayBuffer};
pub use critic::{AttentionCritic, CriticShape};
pub use env::{EnvConfig, EnvSetup, Obs, StepOutcome, TeamEnv};
pub use error::{MarlError, Result};
pub use sac::{Agent, Losses, SacConfig};
pub use eval::{run_eval, EvalConfig, EvalOutput, EvalReport, Outcome, PolicySpec, TrialRow};
pub use train::{train, EpisodeMetrics, TrainConfig, TrainOutput};
