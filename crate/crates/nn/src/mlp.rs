//! Fully connected networks.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{shape_err, NnError, Result};
use crate::params::{Bound, ParamId, ParamSet};
use crate::tape::{Tape, Var};
use crate::tensor::{gemm, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        })
    }
}

impl FromStr for Activation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(format!("unknown activation {other:?}")),
        }
    }
}

/// Layer widths `sizes[0] -> sizes[1] -> ...` with one activation per layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub sizes: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl MlpSpec {
    /// `hidden` activation on every layer but the last, which gets `output`.
    pub fn new(sizes: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        let n = sizes.len().saturating_sub(1);
        let activations = (0..n).map(|i| if i + 1 == n { output } else { hidden }).collect();
        let spec = Self { sizes: sizes.to_vec(), activations };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.len() < 2 || self.sizes.contains(&0) || self.activations.len() != self.sizes.len() - 1 {
            return Err(NnError::InvalidInput(format!("bad mlp spec {self:?}")));
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().expect("validated spec")
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    /// Registers weights `{prefix}.l{k}.w` (`in x out`) and biases
    /// `{prefix}.l{k}.b` (`1 x out`), uniform in `±1/sqrt(in)`.
    pub fn new<R: Rng>(spec: MlpSpec, prefix: &str, params: &mut ParamSet, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::new();
        for (k, w) in spec.sizes.windows(2).enumerate() {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let wid = params.add_uniform(format!("{prefix}.l{k}.w"), w[0], w[1], bound, rng);
            let bid = params.add_uniform(format!("{prefix}.l{k}.b"), 1, w[1], bound, rng);
            layers.push((wid, bid));
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layer_params(&self) -> &[(ParamId, ParamId)] {
        &self.layers
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        if tape.shape(x).1 != self.spec.input_size() {
            return shape_err("mlp", format!("input width {} != {}", tape.shape(x).1, self.spec.input_size()));
        }
        let mut h = x;
        for (&(w, b), act) in self.layers.iter().zip(&self.spec.activations) {
            let z = tape.matmul(h, bound.var(w))?;
            let z = tape.add_bias(z, bound.var(b))?;
            h = match act {
                Activation::Relu => tape.relu(z),
                Activation::Tanh => tape.tanh(z),
                Activation::Identity => z,
            };
        }
        Ok(h)
    }

    /// Inference without recording.
    pub fn eval(&self, params: &ParamSet, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.spec.input_size() {
            return shape_err("mlp", format!("input width {} != {}", x.cols(), self.spec.input_size()));
        }
        let mut h = x.clone();
        for (&(w, b), act) in self.layers.iter().zip(&self.spec.activations) {
            let (wv, bv) = (params.get(w), params.get(b));
            let mut z = Tensor::zeros(h.rows(), wv.cols());
            gemm(&h, false, wv, false, &mut z, 0.0);
            for i in 0..z.rows() {
                for (x, bias) in z.row_mut(i).iter_mut().zip(bv.data()) {
                    *x = act.apply(*x + bias);
                }
            }
            h = z;
        }
        Ok(h)
    }
}
