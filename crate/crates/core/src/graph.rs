//! Define-by-run reverse-mode differentiation over dense matrices.
//!
//! A [`Graph`] is an append-only record of nodes. Every operation evaluates
//! eagerly and pushes a node holding its value and the rule needed to send
//! gradients back to its parents. Because parents always precede children,
//! creation order is a topological order and [`Graph::backward`] is a single
//! reverse sweep.
//!
//! Columns index independent examples: `[n×B]` is a batch of `B` vectors of
//! length `n`. Softmax-like operations act on each column separately.

use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pointwise operations selectable by tag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elementwise {
    Add,
    Sub,
    Hadamard,
    Sigmoid,
    Tanh,
    Exp,
    Log,
    Neg,
    Scale(f64),
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Log(NodeId),
    /// `scale * x + shift`
    Affine(NodeId, f64),
    /// `x + c` for a constant `c`; gradient passes straight through.
    AddConst(NodeId),
    Softmax(NodeId),
    LogSoftmax(NodeId),
    /// `out[:, b] = Σ_j w[j, b] · bases[j][:, b]`
    Mix(NodeId, Vec<Tensor>),
    /// `Σ_b weight_b · (−log softmax(x[:, b])[target_b])`
    CrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        weights: Vec<f64>,
    },
    Sum(NodeId),
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension {
            op,
            left: a.shape(),
            right: b.shape(),
        });
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

/// Column-wise softmax with max subtraction.
pub(crate) fn softmax_columns(x: &Tensor) -> Tensor {
    let (rows, cols) = (x.rows(), x.cols());
    let mut out = Tensor::zeros(rows, cols);
    for c in 0..cols {
        let mut max = f64::NEG_INFINITY;
        for r in 0..rows {
            max = max.max(x.get(r, c));
        }
        let mut sum = 0.0;
        for r in 0..rows {
            let e = (x.get(r, c) - max).exp();
            out.set(r, c, e);
            sum += e;
        }
        for r in 0..rows {
            out.set(r, c, out.get(r, c) / sum);
        }
    }
    out
}

/// Column-wise `x − logsumexp(x)`.
pub(crate) fn log_softmax_columns(x: &Tensor) -> Tensor {
    let (rows, cols) = (x.rows(), x.cols());
    let mut out = Tensor::zeros(rows, cols);
    for c in 0..cols {
        let mut max = f64::NEG_INFINITY;
        for r in 0..rows {
            max = max.max(x.get(r, c));
        }
        let mut sum = 0.0;
        for r in 0..rows {
            sum += (x.get(r, c) - max).exp();
        }
        let lse = max + sum.ln();
        for r in 0..rows {
            out.set(r, c, x.get(r, c) - lse);
        }
    }
    out
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[NodeId]) -> NodeId {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        // Nothing upstream is trainable: keep the value, drop the rule.
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Trainable input; receives a gradient on [`Graph::backward`].
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            op: Op::Leaf,
            requires_grad: true,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Input that is never differentiated.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            op: Op::Leaf,
            requires_grad: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Gradient from the last backward pass, if the node requires one.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(Error::Dimension {
                op: "matmul",
                left: va.shape(),
                right: vb.shape(),
            });
        }
        let (p, q, r) = (va.rows(), va.cols(), vb.cols());
        let mut out = Tensor::zeros(p, r);
        tensor::matmul_acc(va.data(), vb.data(), out.data_mut(), p, q, r);
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape("add", va, vb)?;
        let mut out = va.clone();
        out.data_mut().iter_mut().zip(vb.data()).for_each(|(o, y)| *o += y);
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape("sub", va, vb)?;
        let mut out = va.clone();
        out.data_mut().iter_mut().zip(vb.data()).for_each(|(o, y)| *o -= y);
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape("hadamard", va, vb)?;
        let mut out = va.clone();
        out.data_mut().iter_mut().zip(vb.data()).for_each(|(o, y)| *o *= y);
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    /// Adds a column vector `bias: [r×1]` to every column of `a: [r×B]`.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(bias));
        if vb.cols() != 1 || vb.rows() != va.rows() {
            return Err(Error::Dimension {
                op: "add_bias",
                left: va.shape(),
                right: vb.shape(),
            });
        }
        let mut out = va.clone();
        let cols = va.cols();
        for (r, chunk) in out.data_mut().chunks_mut(cols).enumerate() {
            let b = vb.data()[r];
            chunk.iter_mut().for_each(|o| *o += b);
        }
        Ok(self.push(out, Op::AddBias(a, bias), &[a, bias]))
    }

    fn map(&mut self, a: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v = f(*v));
        self.push(out, op, &[a])
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.map(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        if let Some(bad) = self.value(a).data().iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("non-positive input {bad}"),
            });
        }
        Ok(self.map(a, f64::ln, Op::Log(a)))
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: NodeId, scale: f64, shift: f64) -> NodeId {
        self.map(a, |v| scale * v + shift, Op::Affine(a, scale))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.map(a, |v| -v, Op::Affine(a, -1.0))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.map(a, |v| c * v, Op::Affine(a, c))
    }

    /// `1 − a`.
    pub fn one_minus(&mut self, a: NodeId) -> NodeId {
        self.map(a, |v| 1.0 - v, Op::Affine(a, -1.0))
    }

    /// Tag-dispatched pointwise op: binary tags take two operands, the rest one.
    pub fn elementwise(&mut self, op: Elementwise, operands: &[NodeId]) -> Result<NodeId> {
        let arity = match op {
            Elementwise::Add | Elementwise::Sub | Elementwise::Hadamard => 2,
            _ => 1,
        };
        if operands.len() != arity {
            return Err(Error::Usage(format!(
                "{op:?} takes {arity} operand(s), got {}",
                operands.len()
            )));
        }
        let a = operands[0];
        Ok(match op {
            Elementwise::Add => self.add(a, operands[1])?,
            Elementwise::Sub => self.sub(a, operands[1])?,
            Elementwise::Hadamard => self.mul(a, operands[1])?,
            Elementwise::Sigmoid => self.sigmoid(a),
            Elementwise::Tanh => self.tanh(a),
            Elementwise::Exp => self.exp(a),
            Elementwise::Log => self.log(a)?,
            Elementwise::Neg => self.neg(a),
            Elementwise::Scale(c) => self.scale(a, c),
        })
    }

    /// Adds a constant tensor; the constant itself carries no gradient.
    pub fn add_constant(&mut self, a: NodeId, c: &Tensor) -> Result<NodeId> {
        let va = self.value(a);
        same_shape("add_constant", va, c)?;
        let mut out = va.clone();
        out.data_mut().iter_mut().zip(c.data()).for_each(|(o, y)| *o += y);
        Ok(self.push(out, Op::AddConst(a), &[a]))
    }

    /// Column-wise softmax.
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let out = softmax_columns(self.value(a));
        self.push(out, Op::Softmax(a), &[a])
    }

    /// Column-wise log-softmax, `x − logsumexp(x)`.
    pub fn log_softmax(&mut self, a: NodeId) -> NodeId {
        let out = log_softmax_columns(self.value(a));
        self.push(out, Op::LogSoftmax(a), &[a])
    }

    /// Per-column convex combination of constant bases.
    ///
    /// `weights` is `[J×B]`; each of the `J` bases is `[n×B]`; the result is
    /// `[n×B]` with column `b` equal to `Σ_j weights[j,b] · bases[j][:,b]`.
    pub fn mix(&mut self, weights: NodeId, bases: Vec<Tensor>) -> Result<NodeId> {
        let w = self.value(weights);
        if w.rows() != bases.len() || bases.is_empty() {
            return Err(Error::Usage(format!(
                "mix needs one basis per weight row ({} rows, {} bases)",
                w.rows(),
                bases.len()
            )));
        }
        let shape = bases[0].shape();
        for b in &bases {
            same_shape("mix", &bases[0], b)?;
        }
        if shape[1] != w.cols() {
            return Err(Error::Dimension {
                op: "mix",
                left: w.shape(),
                right: shape,
            });
        }
        let cols = shape[1];
        let mut out = Tensor::zeros(shape[0], cols);
        for (j, basis) in bases.iter().enumerate() {
            let wrow = w.row(j);
            for (o_row, b_row) in out
                .data_mut()
                .chunks_mut(cols)
                .zip(basis.data().chunks(cols))
            {
                for c in 0..cols {
                    o_row[c] += wrow[c] * b_row[c];
                }
            }
        }
        Ok(self.push(out, Op::Mix(weights, bases), &[weights]))
    }

    /// Softmax cross-entropy of a single column of logits.
    pub fn cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        self.cross_entropy_weighted(logits, &[target], &[1.0])
    }

    /// `Σ_b weight_b · (−log softmax(logits[:,b])[target_b])`, a `[1×1]` node.
    pub fn cross_entropy_weighted(
        &mut self,
        logits: NodeId,
        targets: &[usize],
        weights: &[f64],
    ) -> Result<NodeId> {
        let x = self.value(logits);
        let (classes, cols) = (x.rows(), x.cols());
        if targets.len() != cols || weights.len() != cols {
            return Err(Error::Usage(format!(
                "cross_entropy: {cols} columns but {} targets / {} weights",
                targets.len(),
                weights.len()
            )));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= classes) {
            return Err(Error::Index {
                index: bad,
                len: classes,
            });
        }
        let logp = log_softmax_columns(x);
        let mut total = 0.0;
        for c in 0..cols {
            if weights[c] != 0.0 {
                total -= weights[c] * logp.get(targets[c], c);
            }
        }
        Ok(self.push(
            Tensor::scalar(total),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
            },
            &[logits],
        ))
    }

    /// Sum of all entries as a `[1×1]` node.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    /// Reverse sweep from a scalar node.
    ///
    /// Previous gradients are discarded first; afterwards every node that
    /// requires a gradient holds one of the same shape as its value (zeros if
    /// the loss does not depend on it).
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.value(loss).shape() != [1, 1] {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.zero_grad();
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (i, node) in self.nodes.iter_mut().enumerate() {
            if !node.requires_grad {
                continue;
            }
            let [r, c] = node.value.shape();
            node.grad = Some(match grads.get_mut(i).and_then(Option::take) {
                Some(g) => Tensor::from_vec(r, c, g).expect("gradient shape"),
                None => Tensor::zeros(r, c),
            });
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (p, q, r) = (va.rows(), va.cols(), vb.cols());
                if let Some(ga) = self.slot(*a, grads) {
                    tensor::matmul_bt_acc(g, vb.data(), ga, p, q, r);
                }
                if let Some(gb) = self.slot(*b, grads) {
                    tensor::matmul_at_acc(va.data(), g, gb, p, q, r);
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = self.slot(*a, grads) {
                    tensor::axpy(1.0, g, ga);
                }
                if let Some(gb) = self.slot(*b, grads) {
                    tensor::axpy(1.0, g, gb);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.slot(*a, grads) {
                    tensor::axpy(1.0, g, ga);
                }
                if let Some(gb) = self.slot(*b, grads) {
                    tensor::axpy(-1.0, g, gb);
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = self.slot(*a, grads) {
                    for k in 0..g.len() {
                        ga[k] += g[k] * vb[k];
                    }
                }
                if let Some(gb) = self.slot(*b, grads) {
                    for k in 0..g.len() {
                        gb[k] += g[k] * va[k];
                    }
                }
            }
            Op::AddBias(a, bias) => {
                let cols = node.value.cols();
                if let Some(ga) = self.slot(*a, grads) {
                    tensor::axpy(1.0, g, ga);
                }
                if let Some(gb) = self.slot(*bias, grads) {
                    for (r, chunk) in g.chunks(cols).enumerate() {
                        gb[r] += chunk.iter().sum::<f64>();
                    }
                }
            }
            Op::Sigmoid(a) => {
                if let Some(ga) = self.slot(*a, grads) {
                    for k in 0..g.len() {
                        ga[k] += g[k] * out[k] * (1.0 - out[k]);
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(ga) = self.slot(*a, grads) {
                    for k in 0..g.len() {
                        ga[k] += g[k] * (1.0 - out[k] * out[k]);
                    }
                }
            }
            Op::Exp(a) => {
                if let Some(ga) = self.slot(*a, grads) {
                    for k in 0..g.len() {
                        ga[k] += g[k] * out[k];
                    }
                }
            }
            Op::Log(a) => {
                let va = self.value(*a).data();
                if let Some(ga) = self.slot(*a, grads) {
                    for k in 0..g.len() {
                        ga[k] += g[k] / va[k];
                    }
                }
            }
            Op::Affine(a, scale) => {
                if let Some(ga) = self.slot(*a, grads) {
                    tensor::axpy(*scale, g, ga);
                }
            }
            Op::AddConst(a) => {
                if let Some(ga) = self.slot(*a, grads) {
                    tensor::axpy(1.0, g, ga);
                }
            }
            Op::Softmax(a) => {
                let (rows, cols) = (node.value.rows(), node.value.cols());
                if let Some(ga) = self.slot(*a, grads) {
                    for c in 0..cols {
                        let mut s = 0.0;
                        for r in 0..rows {
                            s += g[r * cols + c] * out[r * cols + c];
                        }
                        for r in 0..rows {
                            let k = r * cols + c;
                            ga[k] += out[k] * (g[k] - s);
                        }
                    }
                }
            }
            Op::LogSoftmax(a) => {
                let (rows, cols) = (node.value.rows(), node.value.cols());
                if let Some(ga) = self.slot(*a, grads) {
                    for c in 0..cols {
                        let mut s = 0.0;
                        for r in 0..rows {
                            s += g[r * cols + c];
                        }
                        for r in 0..rows {
                            let k = r * cols + c;
                            ga[k] += g[k] - out[k].exp() * s;
                        }
                    }
                }
            }
            Op::Mix(w, bases) => {
                let cols = node.value.cols();
                if let Some(gw) = self.slot(*w, grads) {
                    for (j, basis) in bases.iter().enumerate() {
                        let row = &mut gw[j * cols..(j + 1) * cols];
                        for (g_row, b_row) in g.chunks(cols).zip(basis.data().chunks(cols)) {
                            for c in 0..cols {
                                row[c] += g_row[c] * b_row[c];
                            }
                        }
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                weights,
            } => {
                let x = self.value(*logits);
                let (rows, cols) = (x.rows(), x.cols());
                let probs = softmax_columns(x);
                if let Some(gx) = self.slot(*logits, grads) {
                    for c in 0..cols {
                        let w = weights[c] * g[0];
                        if w == 0.0 {
                            continue;
                        }
                        for r in 0..rows {
                            let k = r * cols + c;
                            let onehot = if r == targets[c] { 1.0 } else { 0.0 };
                            gx[k] += w * (probs.data()[k] - onehot);
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = self.slot(*a, grads) {
                    ga.iter_mut().for_each(|v| *v += g[0]);
                }
            }
        }
    }

    fn slot<'g>(&self, id: NodeId, grads: &'g mut [Option<Vec<f64>>]) -> Option<&'g mut [f64]> {
        let node = &self.nodes[id.0];
        if !node.requires_grad {
            return None;
        }
        Some(
            grads[id.0]
                .get_or_insert_with(|| vec![0.0; node.value.len()])
                .as_mut_slice(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Tensor {
        Tensor::column(v.to_vec())
    }

    #[test]
    fn matmul_values() {
        let mut g = Graph::new();
        let i = g.constant(Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap());
        let v = g.constant(col(&[3.0, 4.0]));
        let p = g.matmul(i, v).unwrap();
        assert_eq!(g.value(p).data(), &[3.0, 4.0]);

        let a = g.constant(Tensor::from_rows(&[&[1.0, 2.0]]).unwrap());
        let p = g.matmul(a, v).unwrap();
        assert_eq!(g.value(p).data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(2, 3));
        let b = g.constant(Tensor::zeros(2, 1));
        let err = g.matmul(a, b).unwrap_err();
        assert!(matches!(
            err,
            Error::Dimension {
                left: [2, 3],
                right: [2, 1],
                ..
            }
        ));
        assert!(err.to_string().contains("[2, 3]") && err.to_string().contains("[2, 1]"));
    }

    #[test]
    fn matmul_backward() {
        let mut g = Graph::new();
        let a = g.param(Tensor::from_rows(&[&[1.0, 2.0]]).unwrap());
        let b = g.constant(col(&[3.0, 4.0]));
        let p = g.matmul(a, b).unwrap();
        let s = g.sum(p);
        g.backward(s).unwrap();
        assert_eq!(g.grad(a).unwrap().data(), &[3.0, 4.0]);
        assert!(g.grad(b).is_none());
    }

    #[test]
    fn pointwise_values() {
        let mut g = Graph::new();
        let z = g.constant(col(&[0.0]));
        let s = g.sigmoid(z);
        let t = g.tanh(z);
        assert_eq!(g.value(s).data(), &[0.5]);
        assert_eq!(g.value(t).data(), &[0.0]);
        let a = g.constant(col(&[2.0, 3.0]));
        let b = g.constant(col(&[4.0, 5.0]));
        let h = g.elementwise(Elementwise::Hadamard, &[a, b]).unwrap();
        assert_eq!(g.value(h).data(), &[8.0, 15.0]);
    }

    #[test]
    fn log_rejects_nonpositive() {
        let mut g = Graph::new();
        let a = g.constant(col(&[1.0, 0.0]));
        assert!(matches!(g.log(a), Err(Error::Domain { .. })));
    }

    #[test]
    fn elementwise_arity_checked() {
        let mut g = Graph::new();
        let a = g.constant(col(&[1.0]));
        assert!(g.elementwise(Elementwise::Add, &[a]).is_err());
        assert!(g.elementwise(Elementwise::Add, &[a, a]).is_ok());
    }

    #[test]
    fn softmax_values() {
        let mut g = Graph::new();
        let a = g.constant(col(&[0.0; 4]));
        let s = g.softmax(a);
        assert_eq!(g.value(s).data(), &[0.25; 4]);

        let a = g.constant(col(&[1000.0, 0.0]));
        let s = g.softmax(a);
        let v = g.value(s).data();
        assert!((v[0] - 1.0).abs() < 1e-15 && v[1] >= 0.0 && v[1] < 1e-300 + 1e-15);
        assert!(v.iter().all(|x| x.is_finite()));

        let a = g.constant(col(&[1f64.ln(), 3f64.ln()]));
        let s = g.softmax(a);
        let v = g.value(s).data();
        assert!((v[0] - 0.25).abs() < 1e-15 && (v[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn square_derivative() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn cross_entropy_values_and_gradient() {
        let mut g = Graph::new();
        let l = g.param(col(&[0.0, 0.0]));
        let ce = g.cross_entropy(l, 0).unwrap();
        g.backward(ce).unwrap();
        let grad = g.grad(l).unwrap().data();
        assert!((grad[0] + 0.5).abs() < 1e-15 && (grad[1] - 0.5).abs() < 1e-15);

        let u = g.constant(col(&[0.3; 8]));
        let ce = g.cross_entropy(u, 5).unwrap();
        assert!((g.value(ce).scalar_value() - 8f64.ln()).abs() < 1e-12);

        let mut big = vec![0.0; 8];
        big[0] = 50.0;
        let b = g.constant(col(&big));
        let ce = g.cross_entropy(b, 0).unwrap();
        assert!(g.value(ce).scalar_value() < 1e-20);

        let c = g.constant(col(&[1.0, 2.0]));
        let ce = g.cross_entropy(c, 1).unwrap();
        // ln(1 + e^{-1})
        assert!((g.value(ce).scalar_value() - 0.313_261_687_518_222_8).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_target_out_of_range() {
        let mut g = Graph::new();
        let l = g.constant(col(&[0.0, 0.0]));
        assert!(matches!(
            g.cross_entropy(l, 2),
            Err(Error::Index { index: 2, len: 2 })
        ));
    }

    #[test]
    fn backward_requires_scalar() {
        let mut g = Graph::new();
        let a = g.param(col(&[1.0, 2.0]));
        assert!(matches!(g.backward(a), Err(Error::Usage(_))));
    }

    #[test]
    fn unreached_params_get_zero_gradients() {
        let mut g = Graph::new();
        let a = g.param(col(&[1.0, 2.0]));
        let b = g.param(Tensor::scalar(2.0));
        let s = g.sum(b);
        g.backward(s).unwrap();
        assert_eq!(g.grad(a).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn parameter_reuse_accumulates() {
        // y = w*x1 + w*x2 → dy/dw = x1 + x2
        let mut g = Graph::new();
        let w = g.param(Tensor::scalar(0.7));
        let x1 = g.constant(Tensor::scalar(2.0));
        let x2 = g.constant(Tensor::scalar(5.0));
        let a = g.mul(w, x1).unwrap();
        let b = g.mul(w, x2).unwrap();
        let y = g.add(a, b).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(w).unwrap().data(), &[7.0]);
    }

    #[test]
    fn mix_shape_checks() {
        let mut g = Graph::new();
        let w = g.param(Tensor::zeros(2, 3));
        assert!(g.mix(w, vec![Tensor::zeros(4, 3)]).is_err());
        assert!(g.mix(w, vec![Tensor::zeros(4, 2), Tensor::zeros(4, 2)]).is_err());
        assert!(g.mix(w, vec![Tensor::zeros(4, 3), Tensor::zeros(4, 3)]).is_ok());
    }
}
