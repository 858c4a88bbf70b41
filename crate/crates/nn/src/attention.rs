//! Multi-head scaled dot-product attention kernels.
//!
//! Rows are grouped in blocks of `group`; a row's query attends over the keys
//! of the other rows in its block. Per head `h` with width `d`, the logits are
//! `q_h . k_h / sqrt(d)` and the output slice is the softmax-weighted sum of
//! the value slices. Weights are stored `[row][head][key]` where the key index
//! skips the querying row.

use crate::error::{NnError, Result};
use crate::tensor::Tensor;

pub(crate) fn softmax_in_place(x: &mut [f64]) {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in x.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in x.iter_mut() {
        *v /= s;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Block members other than `i`, in order.
fn others(block: usize, group: usize, i: usize) -> impl Iterator<Item = usize> {
    (0..group).filter(move |&j| j != i).map(move |j| block * group + j)
}

pub(crate) fn attention_forward(q: &Tensor, k: &Tensor, v: &Tensor, group: usize, heads: usize) -> (Tensor, Vec<f64>) {
    let (rows, width) = q.shape();
    let d = width / heads;
    let scale = 1.0 / (d as f64).sqrt();
    let nk = group - 1;
    let mut out = Tensor::zeros(rows, width);
    let mut weights = vec![0.0; rows * heads * nk];
    let mut logits = vec![0.0; nk];
    for r in 0..rows {
        let (block, i) = (r / group, r % group);
        for h in 0..heads {
            let cols = h * d..(h + 1) * d;
            let qh = &q.row(r)[cols.clone()];
            for (slot, j) in others(block, group, i).enumerate() {
                logits[slot] = dot(qh, &k.row(j)[cols.clone()]) * scale;
            }
            softmax_in_place(&mut logits);
            let w = &mut weights[(r * heads + h) * nk..(r * heads + h + 1) * nk];
            w.copy_from_slice(&logits);
            let o = &mut out.row_mut(r)[cols.clone()];
            for (slot, j) in others(block, group, i).enumerate() {
                for (x, y) in o.iter_mut().zip(&v.row(j)[cols.clone()]) {
                    *x += w[slot] * y;
                }
            }
        }
    }
    (out, weights)
}

pub(crate) fn attention_backward(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    weights: &[f64],
    g: &Tensor,
    group: usize,
    heads: usize,
) -> (Tensor, Tensor, Tensor) {
    let (rows, width) = q.shape();
    let d = width / heads;
    let scale = 1.0 / (d as f64).sqrt();
    let nk = group - 1;
    let mut dq = Tensor::zeros(rows, width);
    let mut dk = Tensor::zeros(rows, width);
    let mut dv = Tensor::zeros(rows, width);
    let mut dw = vec![0.0; nk];
    for r in 0..rows {
        let (block, i) = (r / group, r % group);
        for h in 0..heads {
            let cols = h * d..(h + 1) * d;
            let w = &weights[(r * heads + h) * nk..(r * heads + h + 1) * nk];
            let gh = &g.row(r)[cols.clone()];
            for (slot, j) in others(block, group, i).enumerate() {
                dw[slot] = dot(gh, &v.row(j)[cols.clone()]);
                for (x, y) in dv.row_mut(j)[cols.clone()].iter_mut().zip(gh) {
                    *x += w[slot] * y;
                }
            }
            let mean: f64 = w.iter().zip(&dw).map(|(a, b)| a * b).sum();
            for (slot, j) in others(block, group, i).enumerate() {
                let dl = w[slot] * (dw[slot] - mean) * scale;
                if dl == 0.0 {
                    continue;
                }
                for c in cols.clone() {
                    let qc = q.get(r, c);
                    let kc = k.get(j, c);
                    dq.row_mut(r)[c] += dl * kc;
                    dk.row_mut(j)[c] += dl * qc;
                }
            }
        }
    }
    (dq, dk, dv)
}

/// Result of [`attention`]: concatenated per-head outputs and one weight
/// simplex per head.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub output: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
}

/// Single-query attention over explicit key/value lists.
pub fn attention(query: &[f64], keys: &[Vec<f64>], values: &[Vec<f64>], n_heads: usize) -> Result<AttentionOutput> {
    if keys.is_empty() {
        return Err(NnError::InvalidInput("attention over an empty key set".into()));
    }
    let width = query.len();
    if keys.len() != values.len() {
        return Err(NnError::InvalidInput(format!("{} keys but {} values", keys.len(), values.len())));
    }
    if n_heads == 0 || width % n_heads != 0 {
        return Err(NnError::InvalidInput(format!("width {width} not divisible into {n_heads} heads")));
    }
    if keys.iter().chain(values).any(|x| x.len() != width) {
        return Err(NnError::InvalidInput("key/value width differs from query".into()));
    }
    let d = width / n_heads;
    let scale = 1.0 / (d as f64).sqrt();
    let mut output = vec![0.0; width];
    let mut weights = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let cols = h * d..(h + 1) * d;
        let mut w: Vec<f64> = keys.iter().map(|kj| dot(&query[cols.clone()], &kj[cols.clone()]) * scale).collect();
        softmax_in_place(&mut w);
        for (wj, vj) in w.iter().zip(values) {
            for c in cols.clone() {
                output[c] += wj * vj[c];
            }
        }
        weights.push(w);
    }
    Ok(AttentionOutput { output, weights })
}
