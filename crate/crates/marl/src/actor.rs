//! Decentralized policy: each robot's own observation in, a squashed
//! Gaussian over the unit action square out. One parameter set is shared by
//! all robots.

use rand::Rng;

use safenav_core::observation::OBS_DIM;
use safenav_core::{ActionBounds, ActionCmd};
use safenav_nn::{squashed_gaussian, standard_normal, Activation, Bound, Mlp, MlpSpec, ParamSet, SquashedSample, Tape, Tensor, Var};

use crate::error::Result;

pub const ACT_DIM: usize = 2;

#[derive(Debug, Clone)]
pub struct Actor {
    pub net: Mlp,
    pub params: ParamSet,
}

impl Actor {
    pub fn new<R: Rng>(hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut sizes = vec![OBS_DIM];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * ACT_DIM);
        let spec = MlpSpec::new(&sizes, Activation::Relu, Activation::Identity)?;
        let mut params = ParamSet::new();
        let net = Mlp::new(spec, "pi", &mut params, rng)?;
        Ok(Self { net, params })
    }

    pub fn hidden(&self) -> Vec<usize> {
        let s = &self.net.spec().sizes;
        s[1..s.len() - 1].to_vec()
    }

    /// Reparameterized sample for each row of `obs` with the given noise.
    pub fn sample(&self, tape: &mut Tape, bound: &Bound, obs: Var, noise: Var) -> Result<SquashedSample> {
        let out = self.net.forward(tape, bound, obs)?;
        let mean = tape.slice_cols(out, 0, ACT_DIM)?;
        let log_std = tape.slice_cols(out, ACT_DIM, ACT_DIM)?;
        Ok(squashed_gaussian(tape, mean, log_std, noise)?)
    }

    /// Unit-square actions for a batch of observations: sampled when `rng`
    /// is given, otherwise the mode `tanh(mean)`.
    pub fn act<R: Rng>(&self, obs: &[[f64; OBS_DIM]], rng: Option<&mut R>) -> Result<Vec<[f64; ACT_DIM]>> {
        let rows: Vec<Vec<f64>> = obs.iter().map(|o| o.to_vec()).collect();
        let x = Tensor::from_rows(&rows)?;
        let out = self.net.eval(&self.params, &x)?;
        let mut acts = Vec::with_capacity(obs.len());
        let noise = rng.map(|r| standard_normal(r, obs.len(), ACT_DIM));
        for i in 0..obs.len() {
            let row = out.row(i);
            let mut a = [0.0; ACT_DIM];
            for j in 0..ACT_DIM {
                let mean = row[j];
                let u = match &noise {
                    Some(n) => {
                        let ls = row[ACT_DIM + j].clamp(safenav_nn::LOG_STD_MIN, safenav_nn::LOG_STD_MAX);
                        mean + ls.exp() * n.get(i, j)
                    }
                    None => mean,
                };
                a[j] = u.tanh();
            }
            acts.push(a);
        }
        Ok(acts)
    }
}

pub fn unit_to_cmd(a: [f64; ACT_DIM], bounds: &ActionBounds) -> ActionCmd {
    bounds.from_unit(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn batched_and_tape_sampling_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let actor = Actor::new(&[16, 16], &mut rng).unwrap();
        let obs: Vec<[f64; OBS_DIM]> = (0..3).map(|k| std::array::from_fn(|j| ((j + k) % 7) as f64 * 0.1)).collect();
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let fast = actor.act(&obs, Some(&mut r1)).unwrap();

        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let noise = standard_normal(&mut r2, 3, ACT_DIM);
        let mut tape = Tape::new();
        let b = actor.params.bind_frozen(&mut tape);
        let rows: Vec<Vec<f64>> = obs.iter().map(|o| o.to_vec()).collect();
        let x = tape.constant(Tensor::from_rows(&rows).unwrap());
        let n = tape.constant(noise);
        let s = actor.sample(&mut tape, &b, x, n).unwrap();
        for i in 0..3 {
            for j in 0..ACT_DIM {
                assert!((tape.value(s.action).get(i, j) - fast[i][j]).abs() < 1e-15);
            }
        }
    }
}
