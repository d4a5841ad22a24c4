//! RMSProp training loop, evaluation and scale statistics.

use std::fmt;
use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::cells::{run_sequence, Model, RunOptions, StepTrace};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tasks::{Target, TaskExample};
use crate::tensor::Tensor;
use crate::cells::ParamSet;

pub const METRICS_HEADER: &str = "step,split,loss,accuracy,scale_min,scale_max,scale_mean,seconds";

/// RMSProp with a per-parameter running mean of squared gradients:
///
/// ```text
/// v ← ρ·v + (1 − ρ)·g²
/// θ ← θ − η·g / (sqrt(v) + ε)
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct RmsProp {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    accum: Vec<Tensor>,
}

impl RmsProp {
    pub fn new(params: &ParamSet, lr: f64, decay: f64, eps: f64) -> Self {
        Self {
            lr,
            decay,
            eps,
            accum: params
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(t.rows(), t.cols()))
                .collect(),
        }
    }

    pub fn accumulators(&self) -> &[Tensor] {
        &self.accum
    }

    /// Applies one update. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() || grads.len() != self.accum.len() {
            return Err(Error::Usage("gradient count does not match parameters".into()));
        }
        for ((name, p), g) in params.names().iter().zip(params.tensors()).zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::Dimension {
                    op: "rmsprop",
                    left: p.shape(),
                    right: g.shape(),
                });
            }
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient { param: name.clone() });
            }
        }
        let (lr, rho, eps) = (self.lr, self.decay, self.eps);
        for ((p, g), v) in params.tensors_mut().iter_mut().zip(grads).zip(&mut self.accum) {
            for ((pi, gi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *vi = rho * *vi + (1.0 - rho) * gi * gi;
                *pi -= lr * gi / (vi.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Optimizer steps.
    pub iterations: usize,
    /// Sequences per step; gradients are averaged over the batch.
    pub batch_size: usize,
    /// Emit metrics every this many steps (and after the last one).
    pub eval_every: usize,
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    /// Evaluate with the argmax of `π` instead of sampled scales.
    pub eval_argmax_scale: bool,
    /// Evaluate on at most this many test sequences.
    pub eval_limit: Option<usize>,
    pub eval_batch: usize,
    /// Fill the `seconds` column with measured wall-clock time. Off by
    /// default so that metric files are reproducible byte for byte.
    pub wall_clock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            batch_size: 1,
            eval_every: 100,
            lr: 0.001,
            decay: 0.9,
            eps: 1e-8,
            eval_argmax_scale: false,
            eval_limit: None,
            eval_batch: 50,
            wall_clock: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Aggregate of hard scale indices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ScaleStats {
    pub min: usize,
    pub max: usize,
    pub sum: u64,
    pub count: u64,
}

impl ScaleStats {
    pub fn add(&mut self, hard: usize) {
        if self.count == 0 {
            self.min = hard;
            self.max = hard;
        } else {
            self.min = self.min.min(hard);
            self.max = self.max.max(hard);
        }
        self.sum += hard as u64;
        self.count += 1;
    }

    pub fn add_traces(&mut self, traces: &[StepTrace]) {
        traces.iter().for_each(|t| self.add(t.hard));
    }

    pub fn merge(&mut self, other: &ScaleStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
        self.sum += other.sum;
        self.count += other.count;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum as f64 / self.count as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub step: usize,
    pub split: Split,
    pub loss: f64,
    pub accuracy: f64,
    pub scale: ScaleStats,
    pub seconds: f64,
}

impl RunMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.step,
            self.split,
            self.loss,
            self.accuracy,
            self.scale.min,
            self.scale.max,
            self.scale.mean(),
            self.seconds
        )
    }
}

/// Running totals for loss, accuracy and scales over a stream of batches.
#[derive(Clone, Debug, Default)]
struct Tally {
    loss_sum: f64,
    loss_count: f64,
    correct: u64,
    judged: u64,
    scale: ScaleStats,
}

impl Tally {
    /// Folds in one batch; per-step tasks pool cross-entropy over masked steps.
    fn add(&mut self, batch: &[&TaskExample], outputs: &[Tensor], example_losses: &[f64], traces: &[Vec<StepTrace>]) {
        for (col, ex) in batch.iter().enumerate() {
            match &ex.target {
                Target::Label(l) => {
                    let logits = &outputs[0];
                    self.loss_sum += example_losses[col];
                    self.loss_count += 1.0;
                    self.correct += u64::from(argmax_column(logits, col) == *l as usize);
                    self.judged += 1;
                }
                Target::Symbols { symbols, mask } => {
                    let n = mask.iter().filter(|&&m| m).count();
                    self.loss_sum += example_losses[col] * n as f64;
                    self.loss_count += n as f64;
                    for (t, (&s, &m)) in symbols.iter().zip(mask).enumerate() {
                        if m {
                            self.correct += u64::from(argmax_column(&outputs[t], col) == s as usize);
                            self.judged += 1;
                        }
                    }
                }
            }
            self.scale.add_traces(&traces[col]);
        }
    }

    fn loss(&self) -> f64 {
        if self.loss_count == 0.0 {
            0.0
        } else {
            self.loss_sum / self.loss_count
        }
    }

    fn accuracy(&self) -> f64 {
        if self.judged == 0 {
            0.0
        } else {
            self.correct as f64 / self.judged as f64
        }
    }
}

fn argmax_column(t: &Tensor, col: usize) -> usize {
    let mut best = 0;
    for r in 1..t.rows() {
        if t.get(r, col) > t.get(best, col) {
            best = r;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    pub batch_size: usize,
    pub argmax_scale: bool,
    pub keep_traces: bool,
    pub limit: Option<usize>,
    /// Adaptive models only: force every step onto this scale.
    pub force_scale: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            batch_size: 50,
            argmax_scale: false,
            keep_traces: false,
            limit: None,
            force_scale: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    /// Mean cross-entropy: per sequence for label tasks, per masked step otherwise.
    pub loss: f64,
    /// Fraction of correct argmax predictions (sequences or masked steps).
    pub accuracy: f64,
    pub scale: ScaleStats,
    pub sequences: usize,
    /// `traces[i][t]` for dataset example `i`, when requested.
    pub traces: Option<Vec<Vec<StepTrace>>>,
}

/// Scores a model on a dataset in dataset order.
pub fn evaluate(model: &Model, dataset: &Dataset, opts: &EvalOptions, rng: &mut RngStream) -> Result<EvalSummary> {
    let n = opts.limit.map_or(dataset.len(), |l| l.min(dataset.len()));
    if n == 0 {
        return Err(Error::Usage("cannot evaluate on an empty dataset".into()));
    }
    let run_opts = RunOptions {
        sample_scales: !opts.argmax_scale,
        track_grad: false,
        force_scale: opts.force_scale,
    };
    let mut tally = Tally::default();
    let mut kept = opts.keep_traces.then(Vec::new);
    let examples: Vec<&TaskExample> = dataset.examples[..n].iter().collect();
    for batch in examples.chunks(opts.batch_size.max(1)) {
        let run = run_sequence(model, batch, rng, run_opts)?;
        tally.add(batch, &run.outputs, &run.example_losses, &run.traces);
        if let Some(k) = kept.as_mut() {
            k.extend(run.traces);
        }
    }
    Ok(EvalSummary {
        loss: tally.loss(),
        accuracy: tally.accuracy(),
        scale: tally.scale,
        sequences: n,
        traces: kept,
    })
}

fn check_compatible(model: &Model, dataset: &Dataset, what: &str) -> Result<()> {
    let spec = model.spec();
    for (i, ex) in dataset.examples.iter().enumerate() {
        if ex.dim != spec.input {
            return Err(Error::Config(format!(
                "{what} example {i} has {}-dimensional frames, model expects {}",
                ex.dim, spec.input
            )));
        }
        let bad = match &ex.target {
            Target::Label(l) => (*l as usize) >= spec.classes,
            Target::Symbols { symbols, .. } => symbols.iter().any(|&s| s as usize >= spec.classes),
        };
        if bad {
            return Err(Error::Config(format!(
                "{what} example {i} has a target outside the model's {} classes",
                spec.classes
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub metrics: Vec<RunMetrics>,
    /// Final positions of the shuffle and noise streams.
    pub shuffle_counter: u64,
    pub noise_counter: u64,
}

/// Trains `model` in place.
///
/// Streams derived from `rng`: tag 1 shuffles the training order each epoch,
/// tag 2 supplies Gumbel noise during training, tag 3 (further derived by
/// step) supplies noise for each evaluation. No gradient clipping or
/// normalisation is applied.
pub fn train(
    model: &mut Model,
    cfg: &TrainConfig,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    rng: &RngStream,
    mut on_metrics: impl FnMut(&RunMetrics) -> Result<()>,
) -> Result<TrainOutcome> {
    if cfg.batch_size == 0 || cfg.eval_every == 0 {
        return Err(Error::Config("batch size and eval cadence must be positive".into()));
    }
    if !(cfg.lr > 0.0) || !(0.0..1.0).contains(&cfg.decay) || !(cfg.eps >= 0.0) {
        return Err(Error::Config("need lr > 0, 0 <= decay < 1 and eps >= 0".into()));
    }
    check_compatible(model, train_set, "training")?;
    if let Some(t) = test_set {
        check_compatible(model, t, "test")?;
    }
    let mut shuffle = rng.derive(1);
    let mut noise = rng.derive(2);
    let eval_root = rng.derive(3);
    let mut metrics = Vec::new();
    if cfg.iterations == 0 {
        return Ok(TrainOutcome {
            metrics,
            shuffle_counter: shuffle.counter(),
            noise_counter: noise.counter(),
        });
    }
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }

    let mut opt = RmsProp::new(model.params(), cfg.lr, cfg.decay, cfg.eps);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    shuffle.shuffle(&mut order);
    let mut cursor = 0;
    let mut tally = Tally::default();
    let mut clock = Instant::now();
    let mut since = 0usize;

    for step in 1..=cfg.iterations {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size {
            if cursor == order.len() {
                shuffle.shuffle(&mut order);
                cursor = 0;
            }
            batch.push(&train_set.examples[order[cursor]]);
            cursor += 1;
        }
        let mut run = run_sequence(model, &batch, &mut noise, RunOptions::default())?;
        let loss = run.loss_value();
        if !loss.is_finite() {
            return Err(Error::Divergence { step, value: loss });
        }
        let grads = run.gradients()?;
        opt.step(model.params_mut(), &grads)?;
        tally.add(&batch, &run.outputs, &run.example_losses, &run.traces);
        since += 1;

        if step % cfg.eval_every == 0 || step == cfg.iterations {
            let seconds = if cfg.wall_clock {
                clock.elapsed().as_secs_f64() / since as f64
            } else {
                0.0
            };
            let row = RunMetrics {
                step,
                split: Split::Train,
                loss: tally.loss(),
                accuracy: tally.accuracy(),
                scale: tally.scale,
                seconds,
            };
            on_metrics(&row)?;
            metrics.push(row);
            if let Some(test) = test_set {
                let opts = EvalOptions {
                    batch_size: cfg.eval_batch,
                    argmax_scale: cfg.eval_argmax_scale,
                    keep_traces: false,
                    limit: cfg.eval_limit,
                    force_scale: None,
                };
                let summary = evaluate(model, test, &opts, &mut eval_root.derive(step as u64))?;
                if !summary.loss.is_finite() {
                    return Err(Error::Divergence {
                        step,
                        value: summary.loss,
                    });
                }
                let row = RunMetrics {
                    step,
                    split: Split::Test,
                    loss: summary.loss,
                    accuracy: summary.accuracy,
                    scale: summary.scale,
                    seconds: 0.0,
                };
                on_metrics(&row)?;
                metrics.push(row);
            }
            tally = Tally::default();
            since = 0;
            clock = Instant::now();
        }
    }
    Ok(TrainOutcome {
        metrics,
        shuffle_counter: shuffle.counter(),
        noise_counter: noise.counter(),
    })
}

#[derive(Serialize)]
struct TraceRecord<'a> {
    sequence_id: usize,
    t: usize,
    hard: usize,
    y: &'a [f64],
}

/// One JSON object per line: `{"sequence_id", "t", "hard", "y"}`.
pub fn write_traces_jsonl(out: &mut impl Write, traces: &[Vec<StepTrace>]) -> Result<()> {
    for (sequence_id, seq) in traces.iter().enumerate() {
        for tr in seq {
            let rec = TraceRecord {
                sequence_id,
                t: tr.t,
                hard: tr.hard,
                y: &tr.y,
            };
            serde_json::to_writer(&mut *out, &rec).map_err(|e| Error::Io(e.into()))?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Long-format CSV: `sequence_id,t,hard,y0,…,y{J-1}`.
pub fn write_traces_csv(out: &mut impl Write, traces: &[Vec<StepTrace>]) -> Result<()> {
    let width = traces.iter().flatten().map(|t| t.y.len()).max().unwrap_or(0);
    let cols: Vec<String> = (0..width).map(|j| format!("y{j}")).collect();
    writeln!(out, "sequence_id,t,hard{}{}", if width > 0 { "," } else { "" }, cols.join(","))?;
    for (sequence_id, seq) in traces.iter().enumerate() {
        for tr in seq {
            let ys: Vec<String> = tr.y.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{sequence_id},{},{},{}", tr.t, tr.hard, ys.join(","))?;
        }
    }
    Ok(())
}
