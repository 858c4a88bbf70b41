//! Centralized attention critic.
//!
//! Every agent's `(observation, action)` pair is embedded by one shared
//! encoder into `e_j`. Agent `i` queries the embeddings of the other agents
//! through multi-head scaled dot-product attention, giving `z_i`; two
//! independent heads map `concat(e_i, z_i)` to `Q1` and `Q2`. With attention
//! disabled the heads see `e_i` alone.
//!
//! Batches are laid out group-major: row `b * n_agents + i` is agent `i` at
//! sample `b`.

use rand::Rng;

use safenav_core::observation::OBS_DIM;
use safenav_nn::{Activation, Bound, Mlp, MlpSpec, NnError, ParamSet, Tape, Tensor, Var};

use crate::actor::ACT_DIM;
use crate::error::{MarlError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CriticShape {
    pub embed: usize,
    pub heads: usize,
    pub hidden: Vec<usize>,
    pub attention: bool,
}

#[derive(Debug, Clone)]
pub struct AttentionCritic {
    pub shape: CriticShape,
    encoder: Mlp,
    query: Mlp,
    key: Mlp,
    value: Mlp,
    head1: Mlp,
    head2: Mlp,
}

#[derive(Debug, Clone, Copy)]
pub struct QPair {
    pub q1: Var,
    pub q2: Var,
    /// Attention output; `None` when attention is disabled.
    pub z: Option<Var>,
}

impl AttentionCritic {
    /// Registers all parameters in `params` under the `q.` prefix.
    pub fn new<R: Rng>(shape: CriticShape, params: &mut ParamSet, rng: &mut R) -> Result<Self> {
        if shape.embed == 0 || shape.heads == 0 || shape.embed % shape.heads != 0 {
            return Err(MarlError::Config(format!(
                "embedding width {} must split evenly into {} heads",
                shape.embed, shape.heads
            )));
        }
        let lin = |n: usize| MlpSpec::new(&[n, n], Activation::Identity, Activation::Identity);
        let encoder = Mlp::new(
            MlpSpec::new(&[OBS_DIM + ACT_DIM, shape.embed], Activation::Relu, Activation::Relu)?,
            "q.enc",
            params,
            rng,
        )?;
        let query = Mlp::new(lin(shape.embed)?, "q.query", params, rng)?;
        let key = Mlp::new(lin(shape.embed)?, "q.key", params, rng)?;
        let value = Mlp::new(lin(shape.embed)?, "q.value", params, rng)?;
        let head_in = if shape.attention { 2 * shape.embed } else { shape.embed };
        let mut sizes = vec![head_in];
        sizes.extend_from_slice(&shape.hidden);
        sizes.push(1);
        let head1 = Mlp::new(MlpSpec::new(&sizes, Activation::Relu, Activation::Identity)?, "q.head1", params, rng)?;
        let head2 = Mlp::new(MlpSpec::new(&sizes, Activation::Relu, Activation::Identity)?, "q.head2", params, rng)?;
        Ok(Self { shape, encoder, query, key, value, head1, head2 })
    }

    fn encode(&self, tape: &mut Tape, b: &Bound, obs: Var, act: Var) -> Result<Var> {
        let x = tape.concat_cols(&[obs, act])?;
        Ok(self.encoder.forward(tape, b, x)?)
    }

    /// Twin Q values for every row.
    pub fn forward(&self, tape: &mut Tape, b: &Bound, obs: Var, act: Var, n_agents: usize) -> Result<QPair> {
        let e = self.encode(tape, b, obs, act)?;
        self.heads(tape, b, e, e, n_agents)
    }

    /// Like [`forward`](Self::forward), but the other agents are encoded from
    /// `act_others` while each agent's own embedding uses `act_own`. Used to
    /// let policy gradients flow only through each agent's own action.
    pub fn forward_split(
        &self,
        tape: &mut Tape,
        b: &Bound,
        obs: Var,
        act_own: Var,
        act_others: Var,
        n_agents: usize,
    ) -> Result<QPair> {
        let own = self.encode(tape, b, obs, act_own)?;
        let others = if self.shape.attention { self.encode(tape, b, obs, act_others)? } else { own };
        self.heads(tape, b, own, others, n_agents)
    }

    fn heads(&self, tape: &mut Tape, b: &Bound, own: Var, others: Var, n_agents: usize) -> Result<QPair> {
        let rows = tape.shape(own).0;
        if n_agents == 0 || rows % n_agents != 0 {
            return Err(MarlError::Config(format!("{rows} rows do not split into groups of {n_agents}")));
        }
        let (input, z) = if self.shape.attention {
            if n_agents < 2 {
                return Err(NnError::InvalidInput("attention critic needs at least two agents".into()).into());
            }
            let q = self.query.forward(tape, b, own)?;
            let k = self.key.forward(tape, b, others)?;
            let v = self.value.forward(tape, b, others)?;
            let z = tape.attention(q, k, v, n_agents, self.shape.heads)?;
            (tape.concat_cols(&[own, z])?, Some(z))
        } else {
            (own, None)
        };
        let q1 = self.head1.forward(tape, b, input)?;
        let q2 = self.head2.forward(tape, b, input)?;
        Ok(QPair { q1, q2, z })
    }

    /// Q-value (head `which` ∈ {1, 2}) of `agent` for one joint
    /// observation/action.
    pub fn critic_q(
        &self,
        params: &ParamSet,
        all_obs: &[[f64; OBS_DIM]],
        all_actions: &[[f64; ACT_DIM]],
        agent: usize,
        which: u8,
    ) -> Result<f64> {
        let n = all_obs.len();
        if agent >= n || all_actions.len() != n {
            return Err(MarlError::Config(format!("agent {agent} out of range for {n} agents")));
        }
        if which != 1 && which != 2 {
            return Err(MarlError::Config(format!("critic head must be 1 or 2, got {which}")));
        }
        let mut tape = Tape::new();
        let b = params.bind_frozen(&mut tape);
        let o = tape.constant(Tensor::from_rows(&all_obs.iter().map(|x| x.to_vec()).collect::<Vec<_>>())?);
        let a = tape.constant(Tensor::from_rows(&all_actions.iter().map(|x| x.to_vec()).collect::<Vec<_>>())?);
        let qp = self.forward(&mut tape, &b, o, a, n)?;
        let q = if which == 1 { qp.q1 } else { qp.q2 };
        Ok(tape.value(q).get(agent, 0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn critic(attention: bool) -> (AttentionCritic, ParamSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut ps = ParamSet::new();
        let shape = CriticShape { embed: 16, heads: 4, hidden: vec![16], attention };
        (AttentionCritic::new(shape, &mut ps, &mut rng).unwrap(), ps)
    }

    fn joint(n: usize, seed: u64) -> (Vec<[f64; OBS_DIM]>, Vec<[f64; ACT_DIM]>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
        let act = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
        (obs, act)
    }

    #[test]
    fn two_agents_attend_to_the_single_other_value() {
        let (c, ps) = critic(true);
        let (obs, act) = joint(2, 1);
        let mut tape = Tape::new();
        let b = ps.bind_frozen(&mut tape);
        let o = tape.constant(Tensor::from_rows(&obs.iter().map(|x| x.to_vec()).collect::<Vec<_>>()).unwrap());
        let a = tape.constant(Tensor::from_rows(&act.iter().map(|x| x.to_vec()).collect::<Vec<_>>()).unwrap());
        let e = c.encode(&mut tape, &b, o, a).unwrap();
        let v = c.value.forward(&mut tape, &b, e).unwrap();
        let qp = c.forward(&mut tape, &b, o, a, 2).unwrap();
        let z = tape.value(qp.z.unwrap()).clone();
        assert_eq!(z.row(0), tape.value(v).row(1));
        assert_eq!(z.row(1), tape.value(v).row(0));
    }

    #[test]
    fn variable_team_sizes_evaluate() {
        let (c, ps) = critic(true);
        for n in 2..=8 {
            let (obs, act) = joint(n, n as u64);
            for i in 0..n {
                assert!(c.critic_q(&ps, &obs, &act, i, 1).unwrap().is_finite());
            }
        }
    }

    #[test]
    fn bad_agent_index_is_error() {
        let (c, ps) = critic(true);
        let (obs, act) = joint(3, 0);
        assert!(c.critic_q(&ps, &obs, &act, 3, 1).is_err());
        assert!(c.critic_q(&ps, &obs, &act, 0, 3).is_err());
    }

    #[test]
    fn without_attention_q_ignores_others() {
        let (c, ps) = critic(false);
        let (obs, act) = joint(3, 2);
        let (mut obs2, act2) = joint(3, 3);
        obs2[0] = obs[0];
        let mut act2 = act2;
        act2[0] = act[0];
        let q = c.critic_q(&ps, &obs, &act, 0, 2).unwrap();
        let q2 = c.critic_q(&ps, &obs2, &act2, 0, 2).unwrap();
        assert_eq!(q, q2);
    }
}
