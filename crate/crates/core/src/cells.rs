//! Recurrent cells with adaptive, fixed or no input scaling.
//!
//! In adaptive mode every step computes the filtered input for all `J`
//! scales, draws a relaxed one-hot `y_t` from the sampler and feeds the cell
//! `x̃_t = Σ_j y_t[j] · x̃_t^{(j)}`. Fixed mode always uses one scale; vanilla
//! mode feeds the raw frame. The cell equations are the usual LSTM and GRU
//! updates with `x̃_t` in place of `x_t`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{softmax_columns, Graph, NodeId};
use crate::rng::RngStream;
use crate::sampler::{self, SamplerParams};
use crate::tasks::{Target, TaskExample};
use crate::tensor::Tensor;
use crate::wavelet::WaveletBank;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    fn gates(self) -> &'static [&'static str] {
        match self {
            CellKind::Lstm => &["f", "i", "o", "g"],
            CellKind::Gru => &["z", "r", "g"],
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        })
    }
}

impl FromStr for CellKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            other => Err(Error::Config(format!("unknown cell `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScaleMode {
    Adaptive,
    Fixed(usize),
    Vanilla,
}

impl ScaleMode {
    pub fn name(self) -> &'static str {
        match self {
            ScaleMode::Adaptive => "adaptive",
            ScaleMode::Fixed(_) => "fixed",
            ScaleMode::Vanilla => "vanilla",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub cell: CellKind,
    pub mode: ScaleMode,
    pub hidden: usize,
    pub input: usize,
    pub classes: usize,
    /// `J`
    pub num_scales: usize,
    /// `K`
    pub kernel_size: usize,
    pub tau: f64,
    /// Straight-through: one-hot forward, relaxed backward.
    pub hard_forward: bool,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.input == 0 || self.classes == 0 {
            return Err(Error::Parameter("hidden, input and class counts must be positive".into()));
        }
        if self.num_scales == 0 || self.kernel_size == 0 {
            return Err(Error::Parameter("J and K must be positive".into()));
        }
        if let ScaleMode::Fixed(j) = self.mode {
            if j >= self.num_scales {
                return Err(Error::Parameter(format!(
                    "fixed scale {j} out of range for J={}",
                    self.num_scales
                )));
            }
        }
        if self.mode == ScaleMode::Adaptive && !(self.tau > 0.0) {
            return Err(Error::Parameter(format!("temperature must be positive, got {}", self.tau)));
        }
        Ok(())
    }

    /// Wavelet bank used by this model; vanilla cells behave as `J = K = 1`.
    pub fn bank(&self) -> Result<WaveletBank> {
        match self.mode {
            ScaleMode::Vanilla => WaveletBank::haar(1, 1),
            _ => WaveletBank::haar(self.kernel_size, self.num_scales),
        }
    }

    /// Scale count as seen by traces and statistics.
    pub fn trace_scales(&self) -> usize {
        match self.mode {
            ScaleMode::Vanilla => 1,
            _ => self.num_scales,
        }
    }

    /// Parameter names and shapes in declared order.
    pub fn param_shapes(&self) -> Vec<(String, [usize; 2])> {
        let (m, n) = (self.hidden, self.input);
        let mut out = Vec::new();
        for gate in self.cell.gates() {
            out.push((format!("W_{gate}"), [m, m]));
            out.push((format!("U_{gate}"), [m, n]));
            out.push((format!("b_{gate}"), [m, 1]));
        }
        if self.mode == ScaleMode::Adaptive {
            let j = self.num_scales;
            out.push(("W_s".into(), [j, m]));
            out.push(("U_s".into(), [j, n]));
            out.push(("b_s".into(), [j, 1]));
        }
        out.push(("W_out".into(), [self.classes, m]));
        out.push(("b_out".into(), [self.classes, 1]));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.param_shapes().iter().map(|(_, [r, c])| r * c).sum()
    }
}

/// Hidden size for `candidate` whose parameter count is closest to `reference`'s
/// (ties go to the smaller size).
pub fn matched_hidden(reference: &ModelSpec, candidate: &ModelSpec) -> usize {
    let target = reference.parameter_count() as i64;
    (1..=reference.hidden * 2 + 1)
        .min_by_key(|&h| {
            let s = ModelSpec {
                hidden: h,
                ..candidate.clone()
            };
            ((s.parameter_count() as i64 - target).abs(), h)
        })
        .unwrap_or(candidate.hidden)
}

/// Named parameter tensors in declared order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new(names: Vec<String>, tensors: Vec<Tensor>) -> Result<Self> {
        if names.len() != tensors.len() {
            return Err(Error::Usage("parameter names and tensors differ in count".into()));
        }
        Ok(Self { names, tensors })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(move |i| &mut self.tensors[i])
    }
}

/// Uniform on `±sqrt(6 / (rows + cols))`.
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut RngStream) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.uniform(-bound, bound)).collect();
    Tensor::from_vec(rows, cols, data).expect("glorot shape")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    bank: WaveletBank,
    params: ParamSet,
}

impl Model {
    /// Glorot-uniform weights, zero biases. Each tensor draws from its own
    /// stream derived from `rng` and its name, so the cell weights do not
    /// depend on whether sampler weights exist.
    pub fn init(spec: ModelSpec, rng: &RngStream) -> Result<Self> {
        spec.validate()?;
        let (names, tensors) = spec
            .param_shapes()
            .into_iter()
            .map(|(name, [r, c])| {
                let t = if c == 1 && name.starts_with("b_") {
                    Tensor::zeros(r, c)
                } else {
                    glorot_uniform(r, c, &mut rng.derive_named(&name))
                };
                (name, t)
            })
            .unzip();
        Ok(Self {
            bank: spec.bank()?,
            params: ParamSet::new(names, tensors)?,
            spec,
        })
    }

    pub fn from_params(spec: ModelSpec, params: ParamSet) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.param_shapes();
        if shapes.len() != params.len() {
            return Err(Error::Data(format!(
                "expected {} parameter tensors, found {}",
                shapes.len(),
                params.len()
            )));
        }
        for ((name, shape), (have, t)) in shapes.iter().zip(params.names().iter().zip(params.tensors())) {
            if name != have || *shape != t.shape() {
                return Err(Error::Data(format!(
                    "parameter `{have}` {:?} does not match expected `{name}` {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(Self {
            bank: spec.bank()?,
            params,
            spec,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn bank(&self) -> &WaveletBank {
        &self.bank
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}

/// Per-timestep scale record for one example.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTrace {
    pub t: usize,
    pub hard: usize,
    pub y: Vec<f64>,
    pub pi: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    /// Draw Gumbel noise; otherwise use the one-hot argmax of `π`.
    pub sample_scales: bool,
    /// Record parameters as trainable so that gradients can be taken.
    pub track_grad: bool,
    /// Adaptive mode only: replace `y_t` by this one-hot scale.
    pub force_scale: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            sample_scales: true,
            track_grad: true,
            force_scale: None,
        }
    }
}

/// Graph handles of one model's parameters.
struct Bound {
    cell: Vec<[NodeId; 3]>,
    sampler: Option<SamplerParams>,
    head_w: NodeId,
    head_b: NodeId,
    all: Vec<NodeId>,
}

fn bind(g: &mut Graph, model: &Model, trainable: bool) -> Bound {
    let all: Vec<NodeId> = model
        .params
        .tensors()
        .iter()
        .map(|t| {
            if trainable {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            }
        })
        .collect();
    let gates = model.spec.cell.gates().len();
    let cell = (0..gates)
        .map(|k| [all[3 * k], all[3 * k + 1], all[3 * k + 2]])
        .collect();
    let mut next = 3 * gates;
    let sampler = (model.spec.mode == ScaleMode::Adaptive).then(|| {
        let s = SamplerParams {
            w: all[next],
            u: all[next + 1],
            b: all[next + 2],
        };
        next += 3;
        s
    });
    Bound {
        cell,
        sampler,
        head_w: all[next],
        head_b: all[next + 1],
        all,
    }
}

/// Recurrent state handles: `h`, and `c` for LSTM.
#[derive(Clone, Copy, Debug)]
pub struct CellState {
    pub h: NodeId,
    pub c: Option<NodeId>,
}

/// Unrolls one model over a batch of equal-length sequences inside a graph.
pub struct Unroller<'m> {
    model: &'m Model,
    graph: Graph,
    bound: Bound,
    frames: Vec<Vec<f64>>,
    steps: usize,
    opts: RunOptions,
}

impl<'m> Unroller<'m> {
    pub fn new(model: &'m Model, batch: &[&TaskExample], opts: RunOptions) -> Result<Self> {
        let first = batch
            .first()
            .ok_or_else(|| Error::Usage("empty batch".into()))?;
        let steps = first.steps();
        if steps == 0 {
            return Err(Error::Usage("empty sequence".into()));
        }
        for ex in batch {
            if ex.steps() != steps || ex.dim != first.dim {
                return Err(Error::Usage("batch sequences must share length and frame size".into()));
            }
        }
        if first.dim != model.spec.input {
            return Err(Error::Dimension {
                op: "input frame",
                left: [first.dim, 1],
                right: [model.spec.input, 1],
            });
        }
        if let Some(j) = opts.force_scale {
            if j >= model.spec.num_scales {
                return Err(Error::Parameter(format!("forced scale {j} out of range")));
            }
        }
        let mut graph = Graph::new();
        let bound = bind(&mut graph, model, opts.track_grad);
        Ok(Self {
            model,
            graph,
            bound,
            frames: batch.iter().map(|e| e.frames_f64()).collect(),
            steps,
            opts,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn batch(&self) -> usize {
        self.frames.len()
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn initial_state(&mut self) -> CellState {
        let (m, b) = (self.model.spec.hidden, self.batch());
        let h = self.graph.constant(Tensor::zeros(m, b));
        let c = (self.model.spec.cell == CellKind::Lstm).then(|| self.graph.constant(Tensor::zeros(m, b)));
        CellState { h, c }
    }

    /// Raw frames at time `t` as `[n×B]`.
    fn raw_input(&self, t: usize) -> Tensor {
        let (n, b) = (self.model.spec.input, self.batch());
        let mut x = Tensor::zeros(n, b);
        for (col, f) in self.frames.iter().enumerate() {
            for i in 0..n {
                x.set(i, col, f[t * n + i]);
            }
        }
        x
    }

    /// Filtered inputs for every scale at time `t`: `J` tensors of `[n×B]`.
    pub fn scaled_bases(&self, t: usize) -> Result<Vec<Tensor>> {
        let (n, b) = (self.model.spec.input, self.batch());
        let bank = &self.model.bank;
        let mut bases = vec![Tensor::zeros(n, b); bank.num_scales()];
        for (col, f) in self.frames.iter().enumerate() {
            let all = bank.scaled_input_all(f, n, t)?;
            for (j, basis) in bases.iter_mut().enumerate() {
                for i in 0..n {
                    basis.set(i, col, all.get(j, i));
                }
            }
        }
        Ok(bases)
    }

    /// Cell input `x̃_t` and the per-example scale records.
    fn cell_input(&mut self, t: usize, h_prev: NodeId, rng: &mut RngStream) -> Result<(NodeId, Vec<StepTrace>)> {
        let b = self.batch();
        let model = self.model;
        let spec = &model.spec;
        match spec.mode {
            ScaleMode::Vanilla => {
                let x = self.graph.constant(self.raw_input(t));
                let traces = (0..b)
                    .map(|_| StepTrace {
                        t,
                        hard: 0,
                        y: vec![1.0],
                        pi: None,
                    })
                    .collect();
                Ok((x, traces))
            }
            ScaleMode::Fixed(j) => {
                let mut bases = self.scaled_bases(t)?;
                let x = self.graph.constant(bases.swap_remove(j));
                let onehot: Vec<f64> = (0..spec.num_scales).map(|k| if k == j { 1.0 } else { 0.0 }).collect();
                let traces = (0..b)
                    .map(|_| StepTrace {
                        t,
                        hard: j,
                        y: onehot.clone(),
                        pi: None,
                    })
                    .collect();
                Ok((x, traces))
            }
            ScaleMode::Adaptive => {
                let sp = self.bound.sampler.expect("adaptive model binds sampler weights");
                let num_scales = spec.num_scales;
                let (tau, hard_forward) = (spec.tau, spec.hard_forward);
                let bases = self.scaled_bases(t)?;
                let x_raw = self.graph.constant(self.raw_input(t));
                let z = sampler::logits(&mut self.graph, h_prev, x_raw, &sp)?;
                let pi = softmax_columns(self.graph.value(z));
                let (weights, soft) = if let Some(j) = self.opts.force_scale {
                    let w = sampler::one_hot(num_scales, &vec![j; b]);
                    (self.graph.constant(w.clone()), w)
                } else if self.opts.sample_scales {
                    let noise = sampler::gumbel_noise(num_scales, b, rng);
                    let y = sampler::gm_sample(&mut self.graph, z, &noise, tau)?;
                    let soft = self.graph.value(y).clone();
                    if hard_forward {
                        let hard = sampler::one_hot(num_scales, &sampler::hard_scales(&soft));
                        let mut shift = hard;
                        shift
                            .data_mut()
                            .iter_mut()
                            .zip(soft.data())
                            .for_each(|(s, y)| *s -= y);
                        (self.graph.add_constant(y, &shift)?, soft)
                    } else {
                        (y, soft)
                    }
                } else {
                    let w = sampler::one_hot(num_scales, &sampler::hard_scales(&pi));
                    (self.graph.constant(w.clone()), w)
                };
                let x = self.graph.mix(weights, bases)?;
                let traces = (0..b)
                    .map(|col| {
                        let y = soft.column_values(col);
                        StepTrace {
                            t,
                            hard: sampler::hard_scale(&y),
                            y,
                            pi: Some(pi.column_values(col)),
                        }
                    })
                    .collect();
                Ok((x, traces))
            }
        }
    }

    fn gate(&mut self, k: usize, h: NodeId, x: NodeId) -> Result<NodeId> {
        let [w, u, b] = self.bound.cell[k];
        let wh = self.graph.matmul(w, h)?;
        let ux = self.graph.matmul(u, x)?;
        let s = self.graph.add(wh, ux)?;
        self.graph.add_bias(s, b)
    }

    fn lstm(&mut self, state: CellState, x: NodeId) -> Result<CellState> {
        let h = state.h;
        let c = state.c.ok_or_else(|| Error::Usage("LSTM state without cell memory".into()))?;
        let f = self.gate(0, h, x)?;
        let f = self.graph.sigmoid(f);
        let i = self.gate(1, h, x)?;
        let i = self.graph.sigmoid(i);
        let o = self.gate(2, h, x)?;
        let o = self.graph.sigmoid(o);
        let g = self.gate(3, h, x)?;
        let g = self.graph.tanh(g);
        let fc = self.graph.mul(f, c)?;
        let ig = self.graph.mul(i, g)?;
        let c_new = self.graph.add(fc, ig)?;
        let tc = self.graph.tanh(c_new);
        let h_new = self.graph.mul(o, tc)?;
        Ok(CellState {
            h: h_new,
            c: Some(c_new),
        })
    }

    fn gru(&mut self, state: CellState, x: NodeId) -> Result<CellState> {
        let h = state.h;
        let z = self.gate(0, h, x)?;
        let z = self.graph.sigmoid(z);
        let r = self.gate(1, h, x)?;
        let r = self.graph.sigmoid(r);
        let rh = self.graph.mul(r, h)?;
        let g = self.gate(2, rh, x)?;
        let g = self.graph.tanh(g);
        let zh = self.graph.mul(z, h)?;
        let one_minus_z = self.graph.one_minus(z);
        let zg = self.graph.mul(one_minus_z, g)?;
        let h_new = self.graph.add(zh, zg)?;
        Ok(CellState { h: h_new, c: None })
    }

    /// Advances every sequence of the batch by one step.
    pub fn step(&mut self, t: usize, state: CellState, rng: &mut RngStream) -> Result<(CellState, Vec<StepTrace>)> {
        if t >= self.steps {
            return Err(Error::Usage(format!("time index {t} beyond {} steps", self.steps)));
        }
        let (x, traces) = self.cell_input(t, state.h, rng)?;
        let next = match self.model.spec.cell {
            CellKind::Lstm => self.lstm(state, x)?,
            CellKind::Gru => self.gru(state, x)?,
        };
        Ok((next, traces))
    }

    /// Linear head on a hidden state: `[C×B]` logits.
    pub fn head(&mut self, h: NodeId) -> Result<NodeId> {
        let wh = self.graph.matmul(self.bound.head_w, h)?;
        self.graph.add_bias(wh, self.bound.head_b)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        self.graph.value(id)
    }
}

/// Result of unrolling a batch: loss node, per-step traces and head outputs.
pub struct SequenceRun {
    pub graph: Graph,
    /// Mean over the batch of each example's loss.
    pub loss: NodeId,
    /// `traces[b][t]`
    pub traces: Vec<Vec<StepTrace>>,
    /// Head logits `[C×B]`: one entry for sequence labels, one per step otherwise.
    pub outputs: Vec<Tensor>,
    /// Loss of each example (cross-entropy, or masked per-step mean).
    pub example_losses: Vec<f64>,
    param_nodes: Vec<NodeId>,
    trainable: bool,
}

impl SequenceRun {
    pub fn loss_value(&self) -> f64 {
        self.graph.value(self.loss).scalar_value()
    }

    /// Back-propagates the loss and returns one gradient per parameter, in
    /// declared order.
    pub fn gradients(&mut self) -> Result<Vec<Tensor>> {
        if !self.trainable {
            return Err(Error::Usage("run was recorded without gradient tracking".into()));
        }
        self.graph.backward(self.loss)?;
        Ok(self
            .param_nodes
            .iter()
            .map(|&p| self.graph.grad(p).cloned().expect("trainable parameter has a gradient"))
            .collect())
    }
}

fn log_softmax_at(logits: &Tensor, col: usize, target: usize) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for r in 0..logits.rows() {
        max = max.max(logits.get(r, col));
    }
    let sum: f64 = (0..logits.rows()).map(|r| (logits.get(r, col) - max).exp()).sum();
    logits.get(target, col) - max - sum.ln()
}

/// Unrolls the model over a batch and attaches the loss.
///
/// Sequence-label examples apply the head to the last hidden state;
/// per-step examples apply it at every step and average the cross-entropy
/// over the masked steps of each example (zero when the mask is empty).
pub fn run_sequence(model: &Model, batch: &[&TaskExample], rng: &mut RngStream, opts: RunOptions) -> Result<SequenceRun> {
    let mut un = Unroller::new(model, batch, opts)?;
    let b = un.batch();
    let steps = un.steps();
    let classes = model.spec.classes;
    let per_step = match &batch[0].target {
        Target::Label(_) => false,
        Target::Symbols { .. } => true,
    };
    let mut labels = Vec::with_capacity(b);
    let mut symbols: Vec<(&[u16], &[bool])> = Vec::with_capacity(b);
    for ex in batch {
        match (&ex.target, per_step) {
            (Target::Label(l), false) => labels.push(*l as usize),
            (Target::Symbols { symbols: s, mask }, true) => {
                if s.len() != steps || mask.len() != steps {
                    return Err(Error::Usage("per-step targets must match the sequence length".into()));
                }
                symbols.push((s, mask));
            }
            _ => return Err(Error::Usage("batch mixes sequence-label and per-step targets".into())),
        }
    }
    for &l in &labels {
        if l >= classes {
            return Err(Error::Index { index: l, len: classes });
        }
    }
    let counts: Vec<usize> = symbols.iter().map(|(_, m)| m.iter().filter(|&&v| v).count()).collect();

    let mut state = un.initial_state();
    let mut traces: Vec<Vec<StepTrace>> = (0..b).map(|_| Vec::with_capacity(steps)).collect();
    let mut outputs = Vec::new();
    let mut example_losses = vec![0.0; b];
    let mut loss: Option<NodeId> = None;
    for t in 0..steps {
        let (next, step_traces) = un.step(t, state, rng)?;
        state = next;
        for (col, tr) in step_traces.into_iter().enumerate() {
            traces[col].push(tr);
        }
        if per_step {
            let logits = un.head(state.h)?;
            let mut targets = Vec::with_capacity(b);
            let mut weights = Vec::with_capacity(b);
            for (col, (s, mask)) in symbols.iter().enumerate() {
                let target = s[t] as usize;
                if target >= classes {
                    return Err(Error::Index { index: target, len: classes });
                }
                targets.push(target);
                let w = if mask[t] { 1.0 / (counts[col] as f64 * b as f64) } else { 0.0 };
                weights.push(w);
                if mask[t] {
                    example_losses[col] -= log_softmax_at(un.value(logits), col, target) / counts[col] as f64;
                }
            }
            let ce = un.graph.cross_entropy_weighted(logits, &targets, &weights)?;
            loss = Some(match loss {
                Some(acc) => un.graph.add(acc, ce)?,
                None => ce,
            });
            outputs.push(un.value(logits).clone());
        }
    }
    if !per_step {
        let logits = un.head(state.h)?;
        let weights = vec![1.0 / b as f64; b];
        for (col, &l) in labels.iter().enumerate() {
            example_losses[col] = -log_softmax_at(un.value(logits), col, l);
        }
        loss = Some(un.graph.cross_entropy_weighted(logits, &labels, &weights)?);
        outputs.push(un.value(logits).clone());
    }
    let loss = loss.expect("at least one step");
    let Unroller { graph, bound, .. } = un;
    Ok(SequenceRun {
        graph,
        loss,
        traces,
        outputs,
        example_losses,
        param_nodes: bound.all,
        trainable: opts.track_grad,
    })
}
