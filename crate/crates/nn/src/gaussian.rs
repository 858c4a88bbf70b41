//! Tanh-squashed diagonal Gaussian policies.
//!
//! With pre-activation `u = mean + exp(log_std) * noise` and `a = tanh(u)`,
//!
//! ```text
//! log p(a) = sum_j [ -noise_j^2 / 2 - log_std_j - ln(2 pi) / 2 - ln(1 - tanh(u_j)^2) ]
//! ```
//!
//! where `ln(1 - tanh(u)^2) = 2 (ln 2 - u - softplus(-2u))` keeps the
//! correction finite for saturated actions.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{shape_err, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, Copy)]
pub struct SquashedSample {
    /// Actions in `(-1, 1)`, one row per sample.
    pub action: Var,
    /// Column of per-row log densities.
    pub log_prob: Var,
}

/// Reparameterized sample; `log_std` is clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
pub fn squashed_gaussian(tape: &mut Tape, mean: Var, log_std: Var, noise: Var) -> Result<SquashedSample> {
    if tape.shape(mean) != tape.shape(log_std) || tape.shape(mean) != tape.shape(noise) {
        return shape_err(
            "squashed_gaussian",
            format!("mean {:?}, log_std {:?}, noise {:?}", tape.shape(mean), tape.shape(log_std), tape.shape(noise)),
        );
    }
    let ls = tape.clamp(log_std, LOG_STD_MIN, LOG_STD_MAX);
    let std = tape.exp(ls);
    let spread = tape.mul(std, noise)?;
    let u = tape.add(mean, spread)?;
    let action = tape.tanh(u);

    // gaussian part: -noise^2/2 - log_std - ln(2 pi)/2
    let n2 = tape.square(noise);
    let n2 = tape.scale(n2, -0.5);
    let g = tape.sub(n2, ls)?;
    let g = tape.add_const(g, -HALF_LN_2PI);

    // squash correction: ln(1 - tanh(u)^2)
    let m2u = tape.scale(u, -2.0);
    let sp = tape.softplus(m2u);
    let usp = tape.add(u, sp)?;
    let corr = tape.scale(usp, -2.0);
    let corr = tape.add_const(corr, 2.0 * std::f64::consts::LN_2);

    let per_dim = tape.sub(g, corr)?;
    let log_prob = tape.sum_cols(per_dim);
    Ok(SquashedSample { action, log_prob })
}

pub fn standard_normal<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}
