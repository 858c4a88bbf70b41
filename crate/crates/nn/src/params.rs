//! Named parameter storage and its binding onto a tape.

use rand::Rng;

use crate::checkpoint::{Checkpoint, NamedArray};
use crate::error::{NnError, Result};
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Tensor>,
}

/// Tape variables for every parameter of a set, in registration order.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Wraps variables already on a tape, one per parameter in order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self { vars }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn grads(&self, g: &mut Gradients) -> Vec<Tensor> {
        self.vars.iter().map(|&v| g.take(v)).collect()
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Registers a `rows x cols` tensor drawn from `U(-bound, bound)`.
    pub fn add_uniform<R: Rng>(&mut self, name: impl Into<String>, rows: usize, cols: usize, bound: f64, rng: &mut R) -> ParamId {
        let t = Tensor::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound));
        self.add(name, t)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Differentiable leaves for every parameter.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound { vars: self.values.iter().map(|v| tape.leaf(v.clone())).collect() }
    }

    /// Constant leaves; nothing flows back into these parameters.
    pub fn bind_frozen(&self, tape: &mut Tape) -> Bound {
        Bound { vars: self.values.iter().map(|v| tape.constant(v.clone())).collect() }
    }

    fn check_compatible(&self, other: &ParamSet) -> Result<()> {
        let same = self.len() == other.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| a.shape() == b.shape());
        if same {
            Ok(())
        } else {
            Err(NnError::InvalidInput("parameter sets differ in layout".into()))
        }
    }

    /// `self <- (1 - tau) * self + tau * online`.
    pub fn soft_update(&mut self, online: &ParamSet, tau: f64) -> Result<()> {
        self.check_compatible(online)?;
        for (t, o) in self.values.iter_mut().zip(&online.values) {
            for (x, y) in t.data_mut().iter_mut().zip(o.data()) {
                *x = (1.0 - tau) * *x + tau * y;
            }
        }
        Ok(())
    }

    pub fn write_to(&self, prefix: &str, ckpt: &mut Checkpoint) {
        for (n, v) in self.names.iter().zip(&self.values) {
            ckpt.push(NamedArray::from_tensor(format!("{prefix}{n}"), v));
        }
    }

    /// Overwrites every parameter from `ckpt`, matching by name and shape.
    pub fn read_from(&mut self, prefix: &str, ckpt: &Checkpoint) -> Result<()> {
        for (n, v) in self.names.iter().zip(self.values.iter_mut()) {
            let name = format!("{prefix}{n}");
            let arr = ckpt
                .get(&name)
                .ok_or_else(|| NnError::CorruptArray { name: name.clone(), detail: "missing".into() })?;
            *v = arr.to_tensor(v.shape()).map_err(|_| NnError::CorruptArray {
                name: name.clone(),
                detail: format!("shape {:?}, expected {:?}", arr.shape, v.shape()),
            })?;
        }
        Ok(())
    }
}
