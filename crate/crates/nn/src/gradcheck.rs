//! Central finite-difference gradient checking.
//!
//! [`op_cases`] lists every differentiable tape operation with a random-shape
//! builder; [`check_case`] compares the tape gradient of
//! `sum(output * weights)` (fixed random weights) with central differences of
//! the forward values only.

use rand::Rng;

use crate::error::Result;
use crate::gaussian::squashed_gaussian;
use crate::mlp::{Activation, Mlp, MlpSpec};
use crate::params::{Bound, ParamSet};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// `max|a - b| / max(max|a|, max|b|, floor)`.
pub fn relative_error(a: &Tensor, b: &Tensor, floor: f64) -> f64 {
    let diff = a.data().iter().zip(b.data()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / a.max_abs().max(b.max_abs()).max(floor)
}

/// Central differences of scalar `f` at `inputs`, one tensor per input.
pub fn central_difference(mut f: impl FnMut(&[Tensor]) -> f64, inputs: &[Tensor], h: f64) -> Vec<Tensor> {
    let mut xs = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for t in 0..xs.len() {
        let mut g = Tensor::zeros(xs[t].rows(), xs[t].cols());
        for i in 0..xs[t].len() {
            let x0 = xs[t].data()[i];
            xs[t].data_mut()[i] = x0 + h;
            let fp = f(&xs);
            xs[t].data_mut()[i] = x0 - h;
            let fm = f(&xs);
            xs[t].data_mut()[i] = x0;
            g.data_mut()[i] = (fp - fm) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;

pub struct OpCase {
    pub name: &'static str,
    pub inputs: Vec<Tensor>,
    pub build: Build,
}

fn rand_t<R: Rng>(rng: &mut R, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

/// Values bounded away from `kinks` by `gap`, so finite differences never
/// straddle a non-differentiable point.
fn away_from<R: Rng>(rng: &mut R, rows: usize, cols: usize, kinks: &[f64], gap: f64) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| loop {
        let x: f64 = rng.random_range(-2.0..2.0);
        if kinks.iter().all(|k| (x - k).abs() > gap) {
            return x;
        }
    })
}

/// One random instance of every differentiable operation.
pub fn op_cases<R: Rng>(rng: &mut R) -> Vec<OpCase> {
    let (r, c) = (rng.random_range(1..5), rng.random_range(1..5));
    let inner = rng.random_range(1..5);
    let mut cases: Vec<OpCase> = Vec::new();
    let mut add = |name: &'static str, inputs: Vec<Tensor>, build: Build| cases.push(OpCase { name, inputs, build });

    add("matmul", vec![rand_t(rng, r, inner, -1.0, 1.0), rand_t(rng, inner, c, -1.0, 1.0)], Box::new(|t, v| t.matmul(v[0], v[1])));
    add("add_bias", vec![rand_t(rng, r, c, -1.0, 1.0), rand_t(rng, 1, c, -1.0, 1.0)], Box::new(|t, v| t.add_bias(v[0], v[1])));
    add("add", vec![rand_t(rng, r, c, -1.0, 1.0), rand_t(rng, r, c, -1.0, 1.0)], Box::new(|t, v| t.add(v[0], v[1])));
    add("sub", vec![rand_t(rng, r, c, -1.0, 1.0), rand_t(rng, r, c, -1.0, 1.0)], Box::new(|t, v| t.sub(v[0], v[1])));
    add("mul", vec![rand_t(rng, r, c, -1.0, 1.0), rand_t(rng, r, c, -1.0, 1.0)], Box::new(|t, v| t.mul(v[0], v[1])));
    {
        let a = rand_t(rng, r, c, -1.0, 1.0);
        // keep every pair apart so the min branch is stable
        let b = Tensor::from_fn(r, c, |i, j| {
            let shift: f64 = rng.random_range(0.1..1.0);
            if rng.random_bool(0.5) { a.get(i, j) + shift } else { a.get(i, j) - shift }
        });
        add("min", vec![a, b], Box::new(|t, v| t.min(v[0], v[1])));
    }
    add("mul_scalar", vec![rand_t(rng, r, c, -1.0, 1.0), rand_t(rng, 1, 1, -1.0, 1.0)], Box::new(|t, v| t.mul_scalar(v[0], v[1])));
    let k: f64 = rng.random_range(-2.0..2.0);
    add("scale", vec![rand_t(rng, r, c, -1.0, 1.0)], Box::new(move |t, v| Ok(t.scale(v[0], k))));
    add("add_const", vec![rand_t(rng, r, c, -1.0, 1.0)], Box::new(move |t, v| Ok(t.add_const(v[0], k))));
    add("relu", vec![away_from(rng, r, c, &[0.0], 1e-3)], Box::new(|t, v| Ok(t.relu(v[0]))));
    add("tanh", vec![rand_t(rng, r, c, -2.0, 2.0)], Box::new(|t, v| Ok(t.tanh(v[0]))));
    add("exp", vec![rand_t(rng, r, c, -2.0, 2.0)], Box::new(|t, v| Ok(t.exp(v[0]))));
    add("square", vec![rand_t(rng, r, c, -2.0, 2.0)], Box::new(|t, v| Ok(t.square(v[0]))));
    add("softplus", vec![rand_t(rng, r, c, -4.0, 4.0)], Box::new(|t, v| Ok(t.softplus(v[0]))));
    add("clamp", vec![away_from(rng, r, c, &[-1.0, 1.0], 1e-3)], Box::new(|t, v| Ok(t.clamp(v[0], -1.0, 1.0))));
    add("sum", vec![rand_t(rng, r, c, -1.0, 1.0)], Box::new(|t, v| Ok(t.sum(v[0]))));
    add("mean", vec![rand_t(rng, r, c, -1.0, 1.0)], Box::new(|t, v| Ok(t.mean(v[0]))));
    add("sum_cols", vec![rand_t(rng, r, c, -1.0, 1.0)], Box::new(|t, v| Ok(t.sum_cols(v[0]))));
    add(
        "concat_cols",
        vec![rand_t(rng, r, c, -1.0, 1.0), rand_t(rng, r, inner, -1.0, 1.0)],
        Box::new(|t, v| t.concat_cols(&[v[0], v[1], v[0]])),
    );
    let start = rng.random_range(0..c);
    add("slice_cols", vec![rand_t(rng, r, c, -1.0, 1.0)], Box::new(move |t, v| t.slice_cols(v[0], start, c - start)));
    add(
        "concat_rows",
        vec![rand_t(rng, r, c, -1.0, 1.0), rand_t(rng, inner, c, -1.0, 1.0)],
        Box::new(|t, v| t.concat_rows(&[v[1], v[0]])),
    );
    let idx: Vec<usize> = (0..r + 2).map(|_| rng.random_range(0..r)).collect();
    add("gather_rows", vec![rand_t(rng, r, c, -1.0, 1.0)], Box::new(move |t, v| t.gather_rows(v[0], &idx)));
    {
        let group = rng.random_range(2..5);
        let blocks = rng.random_range(1..3);
        let heads = rng.random_range(1..3);
        let width = heads * rng.random_range(1..4);
        let rows = group * blocks;
        let inputs = (0..3).map(|_| rand_t(rng, rows, width, -1.5, 1.5)).collect();
        add("attention", inputs, Box::new(move |t, v| t.attention(v[0], v[1], v[2], group, heads)));
    }
    {
        let noise = rand_t(rng, r, 2, -2.0, 2.0);
        let inputs = vec![rand_t(rng, r, 2, -1.0, 1.0), rand_t(rng, r, 2, -1.5, 1.0)];
        add(
            "squashed_gaussian",
            inputs,
            Box::new(move |t, v| {
                let n = t.constant(noise.clone());
                let s = squashed_gaussian(t, v[0], v[1], n)?;
                t.concat_cols(&[s.action, s.log_prob])
            }),
        );
    }
    {
        let mut ps = ParamSet::new();
        let spec = MlpSpec::new(&[3, 5, 2], Activation::Tanh, Activation::Identity).expect("valid spec");
        let mlp = Mlp::new(spec, "g", &mut ps, rng).expect("valid spec");
        let mut inputs = vec![rand_t(rng, r, 3, -1.0, 1.0)];
        inputs.extend(ps.values().iter().cloned());
        add(
            "mlp",
            inputs,
            Box::new(move |t, v| mlp.forward(t, &Bound::from_vars(v[1..].to_vec()), v[0])),
        );
    }
    cases
}

/// Relative error between the tape gradient and central differences for
/// every input of `case`.
pub fn check_case<R: Rng>(case: &OpCase, rng: &mut R) -> Result<f64> {
    let mut probe = Tape::new();
    let vars: Vec<Var> = case.inputs.iter().map(|x| probe.leaf(x.clone())).collect();
    let out = (case.build)(&mut probe, &vars)?;
    let (r, c) = probe.shape(out);
    let weights = rand_t(rng, r, c, -1.0, 1.0);

    let loss_of = |tape: &mut Tape, vars: &[Var]| -> Result<Var> {
        let out = (case.build)(tape, vars)?;
        let w = tape.constant(weights.clone());
        let prod = tape.mul(out, w)?;
        Ok(tape.sum(prod))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = case.inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let loss = loss_of(&mut tape, &vars)?;
    let mut grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.take(v)).collect();

    let numeric = central_difference(
        |xs| {
            let mut t = Tape::new();
            let vs: Vec<Var> = xs.iter().map(|x| t.constant(x.clone())).collect();
            let l = loss_of(&mut t, &vs).expect("shapes fixed by the probe");
            t.value(l).item()
        },
        &case.inputs,
        1e-6,
    );
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error(a, n, 1e-6))
        .fold(0.0, f64::max))
}
