//! Joint replay buffer: one row per world step holding every agent's
//! transition, so sampled batches stay aligned across agents.

use rand::Rng;

use safenav_core::observation::OBS_DIM;
use safenav_nn::Tensor;

use crate::actor::ACT_DIM;
use crate::error::{MarlError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct JointTransition {
    pub obs: Vec<[f64; OBS_DIM]>,
    /// Policy proposals in unit coordinates, before any filtering.
    pub actions: Vec<[f64; ACT_DIM]>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<[f64; OBS_DIM]>,
    pub done: bool,
}

/// Sampled batch, group-major (`row = b * n_agents + agent`).
#[derive(Debug, Clone)]
pub struct Batch {
    pub n_agents: usize,
    pub obs: Tensor,
    pub actions: Tensor,
    pub rewards: Tensor,
    pub next_obs: Tensor,
    pub done: Tensor,
    /// Buffer slot of each sample.
    pub slots: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    n_agents: usize,
    len: usize,
    next: usize,
    obs: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_obs: Vec<f64>,
    done: Vec<bool>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, n_agents: usize) -> Result<Self> {
        if capacity == 0 || n_agents == 0 {
            return Err(MarlError::Config("replay buffer needs positive capacity and agent count".into()));
        }
        Ok(Self {
            capacity,
            n_agents,
            len: 0,
            next: 0,
            obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_obs: Vec::new(),
            done: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    /// Appends, overwriting the oldest row once full.
    pub fn push(&mut self, t: &JointTransition) -> Result<()> {
        let n = self.n_agents;
        if t.obs.len() != n || t.actions.len() != n || t.rewards.len() != n || t.next_obs.len() != n {
            return Err(MarlError::Config(format!("transition does not cover {n} agents")));
        }
        let slot = self.next;
        let write = |dst: &mut Vec<f64>, src: &[f64], width: usize| {
            let start = slot * n * width;
            if dst.len() < start + src.len() {
                dst.resize(start + src.len(), 0.0);
            }
            dst[start..start + src.len()].copy_from_slice(src);
        };
        write(&mut self.obs, t.obs.concat().as_slice(), OBS_DIM);
        write(&mut self.actions, t.actions.concat().as_slice(), ACT_DIM);
        write(&mut self.rewards, &t.rewards, 1);
        write(&mut self.next_obs, t.next_obs.concat().as_slice(), OBS_DIM);
        if self.done.len() <= slot {
            self.done.resize(slot + 1, false);
        }
        self.done[slot] = t.done;
        self.next = (self.next + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
        Ok(())
    }

    pub fn get(&self, slot: usize) -> Option<JointTransition> {
        if slot >= self.len {
            return None;
        }
        let n = self.n_agents;
        let rows = |src: &[f64], width: usize| -> Vec<Vec<f64>> {
            (0..n).map(|i| src[(slot * n + i) * width..(slot * n + i + 1) * width].to_vec()).collect()
        };
        let arr = |v: Vec<f64>| -> [f64; OBS_DIM] { v.try_into().expect("observation width") };
        Some(JointTransition {
            obs: rows(&self.obs, OBS_DIM).into_iter().map(arr).collect(),
            actions: rows(&self.actions, ACT_DIM).into_iter().map(|v| [v[0], v[1]]).collect(),
            rewards: self.rewards[slot * n..(slot + 1) * n].to_vec(),
            next_obs: rows(&self.next_obs, OBS_DIM).into_iter().map(arr).collect(),
            done: self.done[slot],
        })
    }

    /// Uniform sample with replacement; `None` while fewer than `batch` rows
    /// are stored.
    pub fn sample<R: Rng>(&self, batch: usize, rng: &mut R) -> Option<Batch> {
        if batch == 0 || self.len < batch {
            return None;
        }
        let n = self.n_agents;
        let slots: Vec<usize> = (0..batch).map(|_| rng.random_range(0..self.len)).collect();
        let gather = |src: &[f64], width: usize| -> Tensor {
            let mut data = Vec::with_capacity(batch * n * width);
            for &s in &slots {
                data.extend_from_slice(&src[s * n * width..(s + 1) * n * width]);
            }
            Tensor::new(batch * n, width, data).expect("gathered rows match shape")
        };
        let done = Tensor::from_fn(batch * n, 1, |r, _| if self.done[slots[r / n]] { 1.0 } else { 0.0 });
        Some(Batch {
            n_agents: n,
            obs: gather(&self.obs, OBS_DIM),
            actions: gather(&self.actions, ACT_DIM),
            rewards: gather(&self.rewards, 1),
            next_obs: gather(&self.next_obs, OBS_DIM),
            done,
            slots,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(tag: f64, n: usize) -> JointTransition {
        JointTransition {
            obs: (0..n).map(|i| [tag + i as f64 * 0.1; OBS_DIM]).collect(),
            actions: (0..n).map(|i| [tag, i as f64]).collect(),
            rewards: (0..n).map(|i| tag * 10.0 + i as f64).collect(),
            next_obs: (0..n).map(|i| [tag + 0.5 + i as f64 * 0.1; OBS_DIM]).collect(),
            done: tag as i64 % 2 == 0,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(3, 2).unwrap();
        for k in 0..5 {
            b.push(&tr(k as f64, 2)).unwrap();
        }
        assert_eq!(b.len(), 3);
        let tags: Vec<f64> = (0..3).map(|s| b.get(s).unwrap().actions[0][0]).collect();
        // slots 0, 1 were overwritten by transitions 3, 4
        assert_eq!(tags, vec![3.0, 4.0, 2.0]);
    }

    #[test]
    fn batches_keep_agents_aligned() {
        let mut b = ReplayBuffer::new(100, 3).unwrap();
        for k in 0..50 {
            b.push(&tr(k as f64, 3)).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = b.sample(32, &mut rng).unwrap();
        for (row, &slot) in batch.slots.iter().enumerate() {
            let t = b.get(slot).unwrap();
            for i in 0..3 {
                let r = row * 3 + i;
                assert_eq!(batch.actions.get(r, 0), t.actions[i][0]);
                assert_eq!(batch.actions.get(r, 1), i as f64);
                assert_eq!(batch.rewards.get(r, 0), t.rewards[i]);
                assert_eq!(batch.obs.row(r), &t.obs[i][..]);
                assert_eq!(batch.next_obs.row(r), &t.next_obs[i][..]);
                assert_eq!(batch.done.get(r, 0) == 1.0, t.done);
            }
        }
    }

    #[test]
    fn underfull_buffer_gives_no_batch() {
        let mut b = ReplayBuffer::new(10, 3).unwrap();
        b.push(&tr(1.0, 3)).unwrap();
        assert!(b.sample(2, &mut ChaCha8Rng::seed_from_u64(0)).is_none());
    }
}
