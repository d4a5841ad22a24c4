//! Experiment configuration as plain `key=value` text.
//!
//! Every key is always rendered, so an emitted config fully determines a run.
//! Sources are layered: defaults, then a config file, then `--set` pairs, then
//! dedicated command-line flags.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::cells::{CellKind, ModelSpec, ScaleMode};
use crate::error::{Error, Result};
use crate::tasks::{CopySpec, SignalIdSpec, TaskKind};
use crate::trainer::TrainConfig;

/// Scale mode without its index; the index of `fixed` lives in `scale_j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeKind {
    Vanilla,
    Fixed,
    Adaptive,
}

impl ModeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModeKind::Vanilla => "vanilla",
            ModeKind::Fixed => "fixed",
            ModeKind::Adaptive => "adaptive",
        }
    }
}

impl FromStr for ModeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(ModeKind::Vanilla),
            "fixed" => Ok(ModeKind::Fixed),
            "adaptive" => Ok(ModeKind::Adaptive),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub cell: CellKind,
    pub mode: ModeKind,
    /// Scale index used by `fixed` mode.
    pub scale_j: usize,
    pub num_scales: usize,
    pub kernel_size: usize,
    pub tau: f64,
    pub hidden: usize,
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    pub iters: usize,
    pub batch: usize,
    pub eval_every: usize,
    /// Test sequences scored per evaluation; 0 means all.
    pub eval_limit: usize,
    pub eval_batch: usize,
    pub seed: u64,
    pub hard_forward: bool,
    pub eval_argmax_scale: bool,
    pub wall_clock: bool,
    pub data: PathBuf,
    pub out: PathBuf,
    pub signal: SignalIdSpec,
    pub copy: CopySpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::SignalId,
            cell: CellKind::Lstm,
            mode: ModeKind::Adaptive,
            scale_j: 0,
            num_scales: 4,
            kernel_size: 8,
            tau: 0.1,
            hidden: 64,
            lr: 0.001,
            decay: 0.9,
            eps: 1e-8,
            iters: 1000,
            batch: 1,
            eval_every: 100,
            eval_limit: 0,
            eval_batch: 50,
            seed: 0,
            hard_forward: false,
            eval_argmax_scale: false,
            wall_clock: false,
            data: PathBuf::from("data"),
            out: PathBuf::from("out"),
            signal: SignalIdSpec::default(),
            copy: CopySpec::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("bad value `{value}` for `{key}`"))),
    }
}

impl ExperimentConfig {
    /// Sets one key; unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "task" => self.task = v.parse().map_err(|_| Error::Config(format!("unknown task `{v}`")))?,
            "cell" => self.cell = v.parse()?,
            "mode" => self.mode = v.parse()?,
            "scale_j" => self.scale_j = parse("scale_j", v)?,
            "J" => self.num_scales = parse("J", v)?,
            "K" => self.kernel_size = parse("K", v)?,
            "tau" => self.tau = parse("tau", v)?,
            "hidden" => self.hidden = parse("hidden", v)?,
            "lr" => self.lr = parse("lr", v)?,
            "decay" => self.decay = parse("decay", v)?,
            "eps" => self.eps = parse("eps", v)?,
            "iters" => self.iters = parse("iters", v)?,
            "batch" => self.batch = parse("batch", v)?,
            "eval_every" => self.eval_every = parse("eval_every", v)?,
            "eval_limit" => self.eval_limit = parse("eval_limit", v)?,
            "eval_batch" => self.eval_batch = parse("eval_batch", v)?,
            "seed" => self.seed = parse("seed", v)?,
            "hard_forward" => self.hard_forward = parse_bool("hard_forward", v)?,
            "eval_argmax_scale" => self.eval_argmax_scale = parse_bool("eval_argmax_scale", v)?,
            "wall_clock" => self.wall_clock = parse_bool("wall_clock", v)?,
            "data" => self.data = PathBuf::from(v),
            "out" => self.out = PathBuf::from(v),
            "signal.seq_len" => self.signal.seq_len = parse(key, v)?,
            "signal.min_subseqs" => self.signal.min_subseqs = parse(key, v)?,
            "signal.max_subseqs" => self.signal.max_subseqs = parse(key, v)?,
            "signal.min_sub_len" => self.signal.min_sub_len = parse(key, v)?,
            "signal.max_sub_len" => self.signal.max_sub_len = parse(key, v)?,
            "signal.amplitude" => self.signal.amplitude = parse(key, v)?,
            "signal.noise" => self.signal.noise = parse(key, v)?,
            "signal.min_period" => self.signal.min_period = parse(key, v)?,
            "signal.max_period" => self.signal.max_period = parse(key, v)?,
            "signal.train_per_class" => self.signal.train_per_class = parse(key, v)?,
            "signal.test_per_class" => self.signal.test_per_class = parse(key, v)?,
            "copy.delay" => self.copy.delay = parse(key, v)?,
            "copy.train_count" => self.copy.train_count = parse(key, v)?,
            "copy.test_count" => self.copy.test_count = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.resolve()?;
        Ok(c)
    }

    /// Materializes implied values and checks consistency.
    pub fn resolve(&mut self) -> Result<()> {
        if self.mode == ModeKind::Vanilla {
            self.num_scales = 1;
            self.kernel_size = 1;
        }
        if self.num_scales == 0 || self.num_scales > 32 || self.kernel_size == 0 {
            return Err(Error::Config("need 1 <= J <= 32 and K >= 1".into()));
        }
        if self.mode == ModeKind::Fixed && self.scale_j >= self.num_scales {
            return Err(Error::Config(format!(
                "fixed scale {} must lie in [0, {})",
                self.scale_j, self.num_scales
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config("tau must be positive".into()));
        }
        if self.hidden == 0 || self.batch == 0 || self.eval_every == 0 || self.eval_batch == 0 {
            return Err(Error::Config("hidden, batch, eval_every and eval_batch must be positive".into()));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.decay) || !(self.eps >= 0.0) {
            return Err(Error::Config("need lr > 0, 0 <= decay < 1 and eps >= 0".into()));
        }
        Ok(())
    }

    pub fn scale_mode(&self) -> ScaleMode {
        match self.mode {
            ModeKind::Vanilla => ScaleMode::Vanilla,
            ModeKind::Fixed => ScaleMode::Fixed(self.scale_j),
            ModeKind::Adaptive => ScaleMode::Adaptive,
        }
    }

    pub fn model_spec(&self, input: usize, classes: usize) -> ModelSpec {
        ModelSpec {
            cell: self.cell,
            mode: self.scale_mode(),
            hidden: self.hidden,
            input,
            classes,
            num_scales: self.num_scales,
            kernel_size: self.kernel_size,
            tau: self.tau,
            hard_forward: self.hard_forward,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            iterations: self.iters,
            batch_size: self.batch,
            eval_every: self.eval_every,
            lr: self.lr,
            decay: self.decay,
            eps: self.eps,
            eval_argmax_scale: self.eval_argmax_scale,
            eval_limit: (self.eval_limit > 0).then_some(self.eval_limit),
            eval_batch: self.eval_batch,
            wall_clock: self.wall_clock,
        }
    }

    /// All keys in a fixed order, one `key=value` per line.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        put("task", self.task.to_string());
        put("cell", self.cell.to_string());
        put("mode", self.mode.as_str().into());
        put("scale_j", self.scale_j.to_string());
        put("J", self.num_scales.to_string());
        put("K", self.kernel_size.to_string());
        put("tau", self.tau.to_string());
        put("hidden", self.hidden.to_string());
        put("lr", self.lr.to_string());
        put("decay", self.decay.to_string());
        put("eps", self.eps.to_string());
        put("iters", self.iters.to_string());
        put("batch", self.batch.to_string());
        put("eval_every", self.eval_every.to_string());
        put("eval_limit", self.eval_limit.to_string());
        put("eval_batch", self.eval_batch.to_string());
        put("seed", self.seed.to_string());
        put("hard_forward", self.hard_forward.to_string());
        put("eval_argmax_scale", self.eval_argmax_scale.to_string());
        put("wall_clock", self.wall_clock.to_string());
        put("data", self.data.display().to_string());
        put("out", self.out.display().to_string());
        for (k, v) in self.signal.describe() {
            put(&format!("signal.{k}"), v);
        }
        put("copy.delay", self.copy.delay.to_string());
        put("copy.train_count", self.copy.train_count.to_string());
        put("copy.test_count", self.copy.test_count.to_string());
        s
    }
}
