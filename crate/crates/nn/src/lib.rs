//! Dense reverse-mode automatic differentiation over 2-D `f64` tensors, with
//! the pieces needed for soft actor-critic agents: MLPs, grouped multi-head
//! attention, tanh-squashed Gaussian policies, Adam, and a checkpoint
//! container.

pub mod adam;
pub mod attention;
pub mod checkpoint;
pub mod error;
pub mod gaussian;
pub mod gradcheck;
pub mod mlp;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use attention::{attention, AttentionOutput};
pub use checkpoint::{Checkpoint, NamedArray};
pub use error::{NnError, Result};
pub use gaussian::{squashed_gaussian, standard_normal, SquashedSample, LOG_STD_MAX, LOG_STD_MIN};
pub use mlp::{Activation, Mlp, MlpSpec};
pub use params::{Bound, ParamId, ParamSet};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
