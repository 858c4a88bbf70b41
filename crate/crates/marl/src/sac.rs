//! Soft actor-critic learner: shared actor, attention critic with twin
//! heads and a target copy, and an automatically tuned entropy weight.

use rand::Rng;

use safenav_nn::{standard_normal, Adam, AdamConfig, Checkpoint, ParamSet, Tape, Tensor};

use crate::actor::{Actor, ACT_DIM};
use crate::buffer::Batch;
use crate::critic::{AttentionCritic, CriticShape};
use crate::error::{MarlError, Result};

/// Network shapes and learner hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SacConfig {
    pub lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub target_entropy: f64,
    pub init_alpha: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_embed: usize,
    pub critic_heads: usize,
    pub critic_hidden: Vec<usize>,
    pub attention_enabled: bool,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            gamma: 0.99,
            tau: 0.005,
            target_entropy: -(ACT_DIM as f64),
            init_alpha: 1.0,
            actor_hidden: vec![256, 256],
            critic_embed: 128,
            critic_heads: 4,
            critic_hidden: vec![256, 256],
            attention_enabled: true,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MarlError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) && self.gamma != 0.0 {
            return bad("gamma must be in [0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must be in (0, 1]");
        }
        if !(self.lr > 0.0) || !(self.init_alpha > 0.0) {
            return bad("lr and init_alpha must be positive");
        }
        if self.actor_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        Ok(())
    }

    pub fn critic_shape(&self) -> CriticShape {
        CriticShape {
            embed: self.critic_embed,
            heads: self.critic_heads,
            hidden: self.critic_hidden.clone(),
            attention: self.attention_enabled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Losses {
    pub critic: f64,
    pub actor: f64,
    pub alpha: f64,
    /// Entropy weight used in this update.
    pub alpha_value: f64,
    pub mean_log_prob: f64,
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub config: SacConfig,
    pub actor: Actor,
    pub critic: AttentionCritic,
    pub critic_params: ParamSet,
    pub critic_target: ParamSet,
    /// Single `log_alpha` scalar; the weight is `exp(log_alpha) > 0`.
    pub alpha_params: ParamSet,
    actor_opt: Adam,
    critic_opt: Adam,
    alpha_opt: Adam,
    pub updates: u64,
}

fn as_scalar_tensor(values: &[f64]) -> Tensor {
    Tensor::new(values.len(), 1, values.to_vec()).expect("column shape")
}

impl Agent {
    pub fn new<R: Rng>(config: SacConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let actor = Actor::new(&config.actor_hidden, rng)?;
        let mut critic_params = ParamSet::new();
        let critic = AttentionCritic::new(config.critic_shape(), &mut critic_params, rng)?;
        let critic_target = critic_params.clone();
        let mut alpha_params = ParamSet::new();
        alpha_params.add("log_alpha", Tensor::scalar(config.init_alpha.ln()));
        let adam = AdamConfig { lr: config.lr, ..Default::default() };
        Ok(Self {
            actor_opt: Adam::new(&actor.params, adam),
            critic_opt: Adam::new(&critic_params, adam),
            alpha_opt: Adam::new(&alpha_params, adam),
            config,
            actor,
            critic,
            critic_params,
            critic_target,
            alpha_params,
            updates: 0,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha_params.values()[0].item().exp()
    }

    /// Soft Bellman targets `r + gamma (1 - done) (min Q_targ(s', a') - alpha log pi(a'|s'))`
    /// with `a'` drawn from the current policy.
    pub fn targets<R: Rng>(&self, batch: &Batch, rng: &mut R) -> Result<Tensor> {
        let rows = batch.obs.rows();
        let mut tape = Tape::new();
        let ab = self.actor.params.bind_frozen(&mut tape);
        let cb = self.critic_target.bind_frozen(&mut tape);
        let next = tape.constant(batch.next_obs.clone());
        let noise = tape.constant(standard_normal(rng, rows, ACT_DIM));
        let s = self.actor.sample(&mut tape, &ab, next, noise)?;
        let qp = self.critic.forward(&mut tape, &cb, next, s.action, batch.n_agents)?;
        let q = tape.min(qp.q1, qp.q2)?;
        let alpha = self.alpha();
        let (qv, lp) = (tape.value(q), tape.value(s.log_prob));
        let y: Vec<f64> = (0..rows)
            .map(|r| {
                let soft = qv.get(r, 0) - alpha * lp.get(r, 0);
                batch.rewards.get(r, 0) + self.config.gamma * (1.0 - batch.done.get(r, 0)) * soft
            })
            .collect();
        Ok(as_scalar_tensor(&y))
    }

    /// Twin-head squared error against fixed targets, and its gradient.
    pub fn critic_loss(&self, batch: &Batch, y: &Tensor) -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let cb = self.critic_params.bind(&mut tape);
        let obs = tape.constant(batch.obs.clone());
        let act = tape.constant(batch.actions.clone());
        let yv = tape.constant(y.clone());
        let qp = self.critic.forward(&mut tape, &cb, obs, act, batch.n_agents)?;
        let d1 = tape.sub(qp.q1, yv)?;
        let d2 = tape.sub(qp.q2, yv)?;
        let s1 = tape.square(d1);
        let s2 = tape.square(d2);
        let l1 = tape.mean(s1);
        let l2 = tape.mean(s2);
        let loss = tape.add(l1, l2)?;
        let value = tape.value(loss).item();
        let mut g = tape.backward(loss)?;
        Ok((value, cb.grads(&mut g)))
    }

    /// One gradient step on critic, actor, entropy weight, then the target
    /// sync.
    pub fn update<R: Rng>(&mut self, batch: &Batch, rng: &mut R) -> Result<Losses> {
        let alpha = self.alpha();
        let y = self.targets(batch, rng)?;
        let (critic_loss, cg) = self.critic_loss(batch, &y)?;
        self.critic_opt.step(&mut self.critic_params, &cg)?;

        // actor: gradients reach each agent's policy only through its own action
        let rows = batch.obs.rows();
        let mut tape = Tape::new();
        let ab = self.actor.params.bind(&mut tape);
        let cb = self.critic_params.bind_frozen(&mut tape);
        let obs = tape.constant(batch.obs.clone());
        let noise = tape.constant(standard_normal(rng, rows, ACT_DIM));
        let s = self.actor.sample(&mut tape, &ab, obs, noise)?;
        let frozen = tape.constant(tape.value(s.action).clone());
        let qp = self.critic.forward_split(&mut tape, &cb, obs, s.action, frozen, batch.n_agents)?;
        let q = tape.min(qp.q1, qp.q2)?;
        let weighted = tape.scale(s.log_prob, alpha);
        let diff = tape.sub(weighted, q)?;
        let actor_loss = tape.mean(diff);
        let actor_value = tape.value(actor_loss).item();
        let mean_log_prob = tape.value(s.log_prob).sum() / rows as f64;
        let mut g = tape.backward(actor_loss)?;
        let ag = ab.grads(&mut g);
        self.actor_opt.step(&mut self.actor.params, &ag)?;

        // entropy weight: d/d(log_alpha) of -log_alpha * (log_pi + target)
        let log_alpha = self.alpha_params.values()[0].item();
        let gap = mean_log_prob + self.config.target_entropy;
        let alpha_loss = -log_alpha * gap;
        self.alpha_opt.step(&mut self.alpha_params, &[Tensor::scalar(-gap)])?;

        self.critic_target.soft_update(&self.critic_params, self.config.tau)?;
        self.updates += 1;
        Ok(Losses {
            critic: critic_loss,
            actor: actor_value,
            alpha: alpha_loss,
            alpha_value: alpha,
            mean_log_prob,
        })
    }

    /// Writes networks, targets, entropy weight and optimizer moments.
    pub fn write_to(&self, ckpt: &mut Checkpoint) {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        ckpt.set_meta("format", "safenav-agent");
        ckpt.set_meta("obs_dim", safenav_core::observation::OBS_DIM.to_string());
        ckpt.set_meta("actor_hidden", list(&self.config.actor_hidden));
        ckpt.set_meta("critic_embed", self.config.critic_embed.to_string());
        ckpt.set_meta("critic_heads", self.config.critic_heads.to_string());
        ckpt.set_meta("critic_hidden", list(&self.config.critic_hidden));
        ckpt.set_meta("attention_enabled", self.config.attention_enabled.to_string());
        ckpt.set_meta("updates", self.updates.to_string());
        self.actor.params.write_to("actor.", ckpt);
        self.critic_params.write_to("critic.", ckpt);
        self.critic_target.write_to("critic_target.", ckpt);
        self.alpha_params.write_to("alpha.", ckpt);
        self.actor_opt.write_to("opt.actor.", ckpt);
        self.critic_opt.write_to("opt.critic.", ckpt);
        self.alpha_opt.write_to("opt.alpha.", ckpt);
    }

    /// Network shapes recorded in a checkpoint's metadata, on top of `base`.
    pub fn config_from_checkpoint(ckpt: &Checkpoint, base: &SacConfig) -> Result<SacConfig> {
        let missing = |k: &str| MarlError::Checkpoint(format!("metadata key {k:?} missing"));
        if ckpt.meta("format") != Some("safenav-agent") {
            return Err(MarlError::Checkpoint("not an agent checkpoint".into()));
        }
        let list = |k: &str| -> Result<Vec<usize>> {
            let s = ckpt.meta(k).ok_or_else(|| missing(k))?;
            if s.is_empty() {
                return Ok(vec![]);
            }
            s.split(',')
                .map(|x| x.parse().map_err(|_| MarlError::Checkpoint(format!("bad {k} entry {x:?}"))))
                .collect()
        };
        let num = |k: &str| -> Result<usize> {
            ckpt.meta(k)
                .ok_or_else(|| missing(k))?
                .parse()
                .map_err(|_| MarlError::Checkpoint(format!("bad {k}")))
        };
        Ok(SacConfig {
            actor_hidden: list("actor_hidden")?,
            critic_embed: num("critic_embed")?,
            critic_heads: num("critic_heads")?,
            critic_hidden: list("critic_hidden")?,
            attention_enabled: ckpt.meta("attention_enabled") == Some("true"),
            ..base.clone()
        })
    }

    /// Rebuilds an agent from a checkpoint written by [`write_to`](Self::write_to).
    pub fn from_checkpoint<R: Rng>(ckpt: &Checkpoint, base: &SacConfig, rng: &mut R) -> Result<Self> {
        let config = Self::config_from_checkpoint(ckpt, base)?;
        let mut agent = Self::new(config, rng)?;
        agent.actor.params.read_from("actor.", ckpt)?;
        agent.critic_params.read_from("critic.", ckpt)?;
        agent.critic_target.read_from("critic_target.", ckpt)?;
        agent.alpha_params.read_from("alpha.", ckpt)?;
        agent.actor_opt.read_from("opt.actor.", ckpt)?;
        agent.critic_opt.read_from("opt.critic.", ckpt)?;
        agent.alpha_opt.read_from("opt.alpha.", ckpt)?;
        agent.updates = ckpt.meta("updates").and_then(|s| s.parse().ok()).unwrap_or(0);
        Ok(agent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buffer::{JointTransition, ReplayBuffer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use safenav_core::observation::OBS_DIM;

    fn small() -> SacConfig {
        SacConfig {
            actor_hidden: vec![16, 16],
            critic_embed: 16,
            critic_heads: 4,
            critic_hidden: vec![16],
            ..Default::default()
        }
    }

    fn filled(done: bool, n: usize) -> ReplayBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut b = ReplayBuffer::new(1000, 3).unwrap();
        for _ in 0..n {
            let obs = (0..3).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
            let next_obs = (0..3).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect::<Vec<[f64; OBS_DIM]>>();
            b.push(&JointTransition {
                obs,
                actions: (0..3).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect(),
                rewards: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                next_obs,
                done,
            })
            .unwrap();
        }
        b
    }

    #[test]
    fn terminal_targets_are_rewards() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let agent = Agent::new(small(), &mut rng).unwrap();
        let batch = filled(true, 20).sample(8, &mut rng).unwrap();
        let y = agent.targets(&batch, &mut rng).unwrap();
        assert_eq!(y.data(), batch.rewards.data());
    }

    #[test]
    fn zero_discount_targets_are_rewards() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let agent = Agent::new(SacConfig { gamma: 0.0, ..small() }, &mut rng).unwrap();
        let batch = filled(false, 20).sample(8, &mut rng).unwrap();
        assert_eq!(agent.targets(&batch, &mut rng).unwrap().data(), batch.rewards.data());
    }

    #[test]
    fn critic_loss_decreases_on_frozen_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut agent = Agent::new(SacConfig { lr: 1e-4, ..small() }, &mut rng).unwrap();
        let batch = filled(false, 64).sample(32, &mut rng).unwrap();
        let y = agent.targets(&batch, &mut rng).unwrap();
        let mut last = f64::INFINITY;
        for _ in 0..3 {
            let (l, g) = agent.critic_loss(&batch, &y).unwrap();
            assert!(l <= last, "{l} > {last}");
            last = l;
            agent.critic_opt.step(&mut agent.critic_params, &g).unwrap();
        }
    }

    #[test]
    fn alpha_stays_positive_and_checkpoint_roundtrips() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut agent = Agent::new(small(), &mut rng).unwrap();
        let buf = filled(false, 64);
        for _ in 0..20 {
            let batch = buf.sample(16, &mut rng).unwrap();
            let l = agent.update(&batch, &mut rng).unwrap();
            assert!(l.alpha_value > 0.0 && l.critic.is_finite() && l.actor.is_finite());
        }
        let mut ck = Checkpoint::new();
        agent.write_to(&mut ck);
        let back = Agent::from_checkpoint(&Checkpoint::from_bytes(&ck.to_bytes()).unwrap(), &SacConfig::default(), &mut rng).unwrap();
        assert_eq!(back.actor.params, agent.actor.params);
        assert_eq!(back.critic_target, agent.critic_target);
        assert_eq!(back.alpha(), agent.alpha());
        assert_eq!(back.updates, 20);
    }
}
