//! Adam with bias-corrected moments.

use crate::checkpoint::{Checkpoint, NamedArray};
use crate::error::{NnError, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let zeros = || params.values().iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
        Self { config, step: 0, m: zeros(), v: zeros() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) -> Result<()> {
        if grads.len() != self.m.len() || grads.iter().zip(params.values()).any(|(g, p)| g.shape() != p.shape()) {
            return Err(NnError::InvalidInput("gradients do not match the parameter layout".into()));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params.values_mut().iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let (p, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn write_to(&self, prefix: &str, ckpt: &mut Checkpoint) {
        ckpt.push(NamedArray::new(format!("{prefix}step"), vec![1], vec![self.step as f64]));
        for (k, (m, v)) in self.m.iter().zip(&self.v).enumerate() {
            ckpt.push(NamedArray::from_tensor(format!("{prefix}m{k}"), m));
            ckpt.push(NamedArray::from_tensor(format!("{prefix}v{k}"), v));
        }
    }

    pub fn read_from(&mut self, prefix: &str, ckpt: &Checkpoint) -> Result<()> {
        let fetch = |name: String, shape: (usize, usize)| -> Result<Tensor> {
            let arr = ckpt
                .get(&name)
                .ok_or_else(|| NnError::CorruptArray { name: name.clone(), detail: "missing".into() })?;
            arr.to_tensor(shape)
                .map_err(|_| NnError::CorruptArray { name, detail: "shape mismatch".into() })
        };
        self.step = fetch(format!("{prefix}step"), (1, 1))?.item() as u64;
        for k in 0..self.m.len() {
            self.m[k] = fetch(format!("{prefix}m{k}"), self.m[k].shape())?;
            self.v[k] = fetch(format!("{prefix}v{k}"), self.v[k].shape())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_set(x: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.add("x", Tensor::scalar(x));
        ps
    }

    #[test]
    fn zero_grad_is_noop() {
        let mut ps = scalar_set(1.5);
        let mut opt = Adam::new(&ps, AdamConfig::default());
        opt.step(&mut ps, &[Tensor::scalar(0.0)]).unwrap();
        assert_eq!(ps.values()[0].item(), 1.5);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        for g in [3.0, -0.02] {
            let mut ps = scalar_set(0.0);
            let cfg = AdamConfig::default();
            let mut opt = Adam::new(&ps, cfg);
            opt.step(&mut ps, &[Tensor::scalar(g)]).unwrap();
            // m_hat = g, v_hat = g^2 after bias correction
            let expect = -cfg.lr * g / (g.abs() + cfg.eps);
            assert!((ps.values()[0].item() - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut ps = scalar_set(2.0);
            let mut opt = Adam::new(&ps, AdamConfig::default());
            for k in 0..50 {
                let x = ps.values()[0].item();
                opt.step(&mut ps, &[Tensor::scalar(2.0 * x + k as f64 * 0.01)]).unwrap();
            }
            ps.values()[0].item()
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }
}
