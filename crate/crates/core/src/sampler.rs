//! Context-dependent scale selection through a Gumbel-Softmax relaxation.
//!
//! Logits `z = W h_{t-1} + U x_t + b` define class probabilities
//! `π = softmax(z)`; a relaxed sample is `y = softmax((log π + g) / τ)` with
//! i.i.d. Gumbel(0, 1) noise `g`. The noise is a graph constant, so gradients
//! reach `z` only through the deterministic part.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Graph handles of the sampler weights `W: [J×m]`, `U: [J×n]`, `b: [J×1]`.
#[derive(Clone, Copy, Debug)]
pub struct SamplerParams {
    pub w: NodeId,
    pub u: NodeId,
    pub b: NodeId,
}

/// One relaxed draw, for a single example.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleSample {
    pub z: Vec<f64>,
    pub pi: Vec<f64>,
    pub y: Vec<f64>,
    pub hard: usize,
    pub tau: f64,
}

/// Scale logits for a batch: `h_prev: [m×B]`, `x: [n×B]` → `[J×B]`.
pub fn logits(g: &mut Graph, h_prev: NodeId, x: NodeId, params: &SamplerParams) -> Result<NodeId> {
    let wh = g.matmul(params.w, h_prev)?;
    let ux = g.matmul(params.u, x)?;
    let s = g.add(wh, ux)?;
    g.add_bias(s, params.b)
}

/// Standard Gumbel draws `−log(−log u)`, `u ~ U(0,1)`, as a `[rows×cols]` tensor.
pub fn gumbel_noise(rows: usize, cols: usize, rng: &mut RngStream) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| gumbel_from_uniform(rng.uniform_open()))
        .collect();
    Tensor::from_vec(rows, cols, data).expect("noise shape")
}

/// Inverse CDF of Gumbel(0, 1).
pub fn gumbel_from_uniform(u: f64) -> f64 {
    -(-u.ln()).ln()
}

/// Relaxed categorical sample `softmax((z − logsumexp(z) + g) / τ)` per column.
pub fn gm_sample(g: &mut Graph, z: NodeId, noise: &Tensor, tau: f64) -> Result<NodeId> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Parameter(format!("temperature must be positive, got {tau}")));
    }
    let log_pi = g.log_softmax(z);
    let perturbed = g.add_constant(log_pi, noise)?;
    let scaled = g.scale(perturbed, 1.0 / tau);
    Ok(g.softmax(scaled))
}

/// Index of the largest entry; ties go to the smaller index.
pub fn hard_scale(y: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in y.iter().enumerate() {
        if *v > y[best] {
            best = i;
        }
    }
    best
}

/// One-hot `[J×B]` tensor from per-column indices.
pub fn one_hot(classes: usize, indices: &[usize]) -> Tensor {
    let mut t = Tensor::zeros(classes, indices.len());
    for (c, &i) in indices.iter().enumerate() {
        t.set(i, c, 1.0);
    }
    t
}

/// Per-column argmax of a `[J×B]` tensor.
pub fn hard_scales(y: &Tensor) -> Vec<usize> {
    (0..y.cols()).map(|c| hard_scale(&y.column_values(c))).collect()
}
