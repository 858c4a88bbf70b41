//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] records every operation of one forward pass. Each op appends a
//! node holding its output value; [`Tape::backward`] walks the nodes in
//! reverse, accumulating adjoints. Leaves created with [`Tape::constant`]
//! never receive gradients and ops whose inputs are all constant skip their
//! backward rule. A tape is consumed by one backward pass.

use crate::attention::{attention_backward, attention_forward};
use crate::error::{shape_err, NnError, Result};
use crate::tensor::{gemm, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    MulScalar(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    Square(Var),
    Softplus(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Attention { q: Var, k: Var, v: Var, group: usize, heads: usize },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
    /// Attention weights kept for the backward pass.
    aux: Option<Vec<f64>>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; zeros when `v` does not
    /// influence the loss.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad, aux: None });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, a: Var, value: Tensor, op: Op) -> Var {
        let ng = self.nodes[a.0].needs_grad;
        self.push(value, op, ng)
    }

    fn binary(&mut self, a: Var, b: Var, value: Tensor, op: Op) -> Var {
        let ng = self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad;
        self.push(value, op, ng)
    }

    /// Differentiable leaf, e.g. a parameter.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Attention weights recorded by an [`Tape::attention`] node, laid out
    /// `[row][head][key]`.
    pub fn attention_weights(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].aux.as_deref()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.binary(a, b, out, Op::MatMul(a, b)))
    }

    /// Adds the `1 x cols` row `bias` to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return shape_err("add_bias", format!("{:?} + {:?}", av.shape(), bv.shape()));
        }
        let mut out = av.clone();
        for i in 0..out.rows() {
            for (x, b) in out.row_mut(i).iter_mut().zip(bv.data()) {
                *x += b;
            }
        }
        Ok(self.binary(a, bias, out, Op::AddBias(a, bias)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.value(a), self.value(b))?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.binary(a, b, out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("sub", self.value(a), self.value(b))?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.binary(a, b, out, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("mul", self.value(a), self.value(b))?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.binary(a, b, out, Op::Mul(a, b)))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("min", self.value(a), self.value(b))?;
        let out = self.value(a).zip_map(self.value(b), f64::min);
        Ok(self.binary(a, b, out, Op::Min(a, b)))
    }

    /// `a * s` for a 1x1 tensor `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.shape(s) != (1, 1) {
            return shape_err("mul_scalar", format!("scalar operand is {:?}", self.shape(s)));
        }
        let k = self.value(s).item();
        let out = self.value(a).map(|x| x * k);
        Ok(self.binary(a, s, out, Op::MulScalar(a, s)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x * c);
        self.unary(a, out, Op::Scale(a, c))
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x + c);
        self.unary(a, out, Op::AddConst(a))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.unary(a, out, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.unary(a, out, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        self.unary(a, out, Op::Exp(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * x);
        self.unary(a, out, Op::Square(a))
    }

    /// `ln(1 + e^x)`, overflow-safe.
    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(softplus);
        self.unary(a, out, Op::Softplus(a))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        self.unary(a, out, Op::Clamp(a, lo, hi))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.unary(a, out, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = Tensor::scalar(v.sum() / v.len().max(1) as f64);
        self.unary(a, out, Op::Mean(a))
    }

    /// Sums each row, giving a column vector.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = Tensor::from_fn(v.rows(), 1, |i, _| v.row(i).iter().sum());
        self.unary(a, out, Op::SumCols(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return shape_err("concat_cols", "no inputs");
        };
        let rows = self.shape(first).0;
        if parts.iter().any(|&p| self.shape(p).0 != rows) {
            return shape_err("concat_cols", "row counts differ");
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Tensor::zeros(rows, cols);
        for i in 0..rows {
            let dst = out.row_mut(i);
            let mut off = 0;
            for &p in parts {
                let src = self.nodes[p.0].value.row(i);
                dst[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let ng = parts.iter().any(|&p| self.nodes[p.0].needs_grad);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let v = self.value(a);
        if start + len > v.cols() {
            return shape_err("slice_cols", format!("cols {start}..{} of {}", start + len, v.cols()));
        }
        let out = Tensor::from_fn(v.rows(), len, |i, j| v.get(i, start + j));
        Ok(self.unary(a, out, Op::SliceCols(a, start)))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return shape_err("concat_rows", "no inputs");
        };
        let cols = self.shape(first).1;
        if parts.iter().any(|&p| self.shape(p).1 != cols) {
            return shape_err("concat_rows", "column counts differ");
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.nodes[p.0].value.data());
        }
        let rows = data.len() / cols.max(1);
        let out = Tensor::new(rows, cols, data)?;
        let ng = parts.iter().any(|&p| self.nodes[p.0].needs_grad);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), ng))
    }

    /// Row `i` of the output is row `idx[i]` of `a`.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let v = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= v.rows()) {
            return shape_err("gather_rows", format!("row {bad} of {}", v.rows()));
        }
        let out = Tensor::from_fn(idx.len(), v.cols(), |i, j| v.get(idx[i], j));
        Ok(self.unary(a, out, Op::GatherRows(a, idx.to_vec())))
    }

    /// Multi-head scaled dot-product attention within groups of `group`
    /// consecutive rows: each row queries the other rows of its group (never
    /// itself). `q`, `k`, `v` share shape `(groups * group) x (heads * d)`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, group: usize, heads: usize) -> Result<Var> {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        if qv.shape() != kv.shape() || qv.shape() != vv.shape() {
            return shape_err("attention", format!("q {:?}, k {:?}, v {:?}", qv.shape(), kv.shape(), vv.shape()));
        }
        if group < 2 {
            return Err(NnError::InvalidInput("attention needs at least one key per query".into()));
        }
        if heads == 0 || qv.cols() % heads != 0 || qv.rows() % group != 0 {
            return shape_err("attention", format!("{:?} with group {group}, {heads} heads", qv.shape()));
        }
        let (out, weights) = attention_forward(qv, kv, vv, group, heads);
        let ng = [q, k, v].iter().any(|x| self.nodes[x.0].needs_grad);
        let var = self.push(out, Op::Attention { q, k, v, group, heads }, ng);
        self.nodes[var.0].aux = Some(weights);
        Ok(var)
    }

    /// Reverse sweep from the 1x1 `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(NnError::BackwardTwice);
        }
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(NnError::NotScalar(r, c));
        }
        self.consumed = true;
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for idx in (0..n).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.needs_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].needs_grad;
        let mut acc = |v: Var, d: Tensor| match &mut grads[v.0] {
            Some(x) => x.add_assign(&d),
            slot => *slot = Some(d),
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if wants(*a) {
                    let mut d = Tensor::zeros(val(*a).rows(), val(*a).cols());
                    gemm(g, false, val(*b), true, &mut d, 0.0);
                    acc(*a, d);
                }
                if wants(*b) {
                    let mut d = Tensor::zeros(val(*b).rows(), val(*b).cols());
                    gemm(val(*a), true, g, false, &mut d, 0.0);
                    acc(*b, d);
                }
            }
            Op::AddBias(a, b) => {
                if wants(*b) {
                    let mut d = Tensor::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (x, y) in d.data_mut().iter_mut().zip(g.row(i)) {
                            *x += y;
                        }
                    }
                    acc(*b, d);
                }
                if wants(*a) {
                    acc(*a, g.clone());
                }
            }
            Op::Add(a, b) => {
                if wants(*a) {
                    acc(*a, g.clone());
                }
                if wants(*b) {
                    acc(*b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    acc(*a, g.clone());
                }
                if wants(*b) {
                    acc(*b, g.map(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    acc(*a, g.zip_map(val(*b), |x, y| x * y));
                }
                if wants(*b) {
                    acc(*b, g.zip_map(val(*a), |x, y| x * y));
                }
            }
            Op::Min(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                if wants(*a) {
                    let d = Tensor::from_fn(g.rows(), g.cols(), |i, j| {
                        if av.get(i, j) <= bv.get(i, j) { g.get(i, j) } else { 0.0 }
                    });
                    acc(*a, d);
                }
                if wants(*b) {
                    let d = Tensor::from_fn(g.rows(), g.cols(), |i, j| {
                        if av.get(i, j) <= bv.get(i, j) { 0.0 } else { g.get(i, j) }
                    });
                    acc(*b, d);
                }
            }
            Op::MulScalar(a, s) => {
                let k = val(*s).item();
                if wants(*a) {
                    acc(*a, g.map(|x| x * k));
                }
                if wants(*s) {
                    let dot: f64 = g.data().iter().zip(val(*a).data()).map(|(x, y)| x * y).sum();
                    acc(*s, Tensor::scalar(dot));
                }
            }
            Op::Scale(a, c) => acc(*a, g.map(|x| x * c)),
            Op::AddConst(a) => acc(*a, g.clone()),
            Op::Relu(a) => acc(*a, g.zip_map(val(*a), |d, x| if x > 0.0 { d } else { 0.0 })),
            Op::Tanh(a) => acc(*a, g.zip_map(&node.value, |d, t| d * (1.0 - t * t))),
            Op::Exp(a) => acc(*a, g.zip_map(&node.value, |d, e| d * e)),
            Op::Square(a) => acc(*a, g.zip_map(val(*a), |d, x| 2.0 * d * x)),
            Op::Softplus(a) => acc(*a, g.zip_map(val(*a), |d, x| d * sigmoid(x))),
            Op::Clamp(a, lo, hi) => {
                acc(*a, g.zip_map(val(*a), |d, x| if x >= *lo && x <= *hi { d } else { 0.0 }))
            }
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                acc(*a, Tensor::full(r, c, g.item()));
            }
            Op::Mean(a) => {
                let (r, c) = val(*a).shape();
                acc(*a, Tensor::full(r, c, g.item() / (r * c).max(1) as f64));
            }
            Op::SumCols(a) => {
                let (r, c) = val(*a).shape();
                acc(*a, Tensor::from_fn(r, c, |i, _| g.get(i, 0)));
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let (r, c) = val(p).shape();
                    if wants(p) {
                        acc(p, Tensor::from_fn(r, c, |i, j| g.get(i, off + j)));
                    }
                    off += c;
                }
            }
            Op::SliceCols(a, start) => {
                let (r, c) = val(*a).shape();
                let mut d = Tensor::zeros(r, c);
                for i in 0..r {
                    d.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                }
                acc(*a, d);
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let (r, c) = val(p).shape();
                    if wants(p) {
                        let d = Tensor::new(r, c, g.data()[off * c..(off + r) * c].to_vec())
                            .expect("slice matches part shape");
                        acc(p, d);
                    }
                    off += r;
                }
            }
            Op::GatherRows(a, idx) => {
                let (r, c) = val(*a).shape();
                let mut d = Tensor::zeros(r, c);
                for (i, &src) in idx.iter().enumerate() {
                    for (x, y) in d.row_mut(src).iter_mut().zip(g.row(i)) {
                        *x += y;
                    }
                }
                acc(*a, d);
            }
            Op::Attention { q, k, v, group, heads } => {
                let weights = node.aux.as_deref().expect("attention node keeps its weights");
                let (dq, dk, dv) = attention_backward(val(*q), val(*k), val(*v), weights, g, *group, *heads);
                if wants(*q) {
                    acc(*q, dq);
                }
                if wants(*k) {
                    acc(*k, dk);
                }
                if wants(*v) {
                    acc(*v, dv);
                }
            }
        }
    }
}
