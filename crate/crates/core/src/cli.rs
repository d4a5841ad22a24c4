//! Command-line front end: `gen`, `train`, `eval` and `compare`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::cells::Model;
use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::compare::compare_files;
use crate::config::ExperimentConfig;
use crate::dataset::{load_dataset, save_dataset, Dataset};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tasks::{gen_copy, gen_signal_id, TaskKind};
use crate::trainer::{evaluate, train, write_traces_csv, write_traces_jsonl, EvalOptions, EvalSummary, METRICS_HEADER};

#[derive(Debug, Parser)]
#[command(name = "asrnn", version, about = "Adaptively scaled recurrent networks", args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train/test dataset files.
    Gen(GenArgs),
    /// Train a model; writes metrics.csv, checkpoint.bin and config.txt.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Align metrics files side by side.
    Compare(CompareArgs),
}

/// Settings shared by `gen` and `train`, layered over `--config` and `--set`.
#[derive(Debug, Default, Args)]
pub struct ConfigArgs {
    /// `key=value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub cell: Option<String>,
    /// vanilla, fixed or adaptive
    #[arg(long)]
    pub mode: Option<String>,
    /// Scale index for fixed mode.
    #[arg(long = "scale-j")]
    pub scale_j: Option<usize>,
    /// Number of scales.
    #[arg(long = "J")]
    pub num_scales: Option<usize>,
    /// Wavelet kernel size.
    #[arg(long = "K")]
    pub kernel_size: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub decay: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long = "eval-every")]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Straight-through scale selection: one-hot forward, relaxed backward.
    #[arg(long = "hard-forward")]
    pub hard_forward: bool,
    /// Evaluate with the most probable scale instead of a sample.
    #[arg(long = "eval-argmax-scale")]
    pub eval_argmax_scale: bool,
    /// Record measured seconds per step (breaks byte-identical metrics).
    #[arg(long = "wall-clock")]
    pub wall_clock: bool,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            c.apply_text(&text)?;
        }
        for pair in &self.set {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{pair}`")))?;
            c.set(k, v)?;
        }
        let mut put = |k: &str, v: Option<String>| v.map_or(Ok(()), |v| c.set(k, &v));
        put("task", self.task.clone())?;
        put("cell", self.cell.clone())?;
        put("mode", self.mode.clone())?;
        put("scale_j", self.scale_j.map(|v| v.to_string()))?;
        put("J", self.num_scales.map(|v| v.to_string()))?;
        put("K", self.kernel_size.map(|v| v.to_string()))?;
        put("tau", self.tau.map(|v| v.to_string()))?;
        put("hidden", self.hidden.map(|v| v.to_string()))?;
        put("lr", self.lr.map(|v| v.to_string()))?;
        put("decay", self.decay.map(|v| v.to_string()))?;
        put("iters", self.iters.map(|v| v.to_string()))?;
        put("eval_every", self.eval_every.map(|v| v.to_string()))?;
        put("batch", self.batch.map(|v| v.to_string()))?;
        put("seed", self.seed.map(|v| v.to_string()))?;
        put("data", self.data.as_ref().map(|p| p.display().to_string()))?;
        put("out", self.out.as_ref().map(|p| p.display().to_string()))?;
        if self.hard_forward {
            c.hard_forward = true;
        }
        if self.eval_argmax_scale {
            c.eval_argmax_scale = true;
        }
        if self.wall_clock {
            c.wall_clock = true;
        }
        c.resolve()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Overwrite existing files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Write per-step scale records of a final test evaluation here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset file, or a directory containing test.bin.
    #[arg(long)]
    pub data: PathBuf,
    /// Per-step records: JSON lines, or CSV when the path ends in `.csv`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long = "eval-argmax-scale")]
    pub eval_argmax_scale: bool,
    /// Score at most this many sequences.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Noise seed (defaults to the checkpoint's seed).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parameter(_) | Error::Usage(_) => 2,
        Error::Data(_) | Error::Parse { .. } | Error::Version { .. } | Error::Index { .. } | Error::Generation(_) => 3,
        Error::Divergence { .. } | Error::NonFiniteGradient { .. } | Error::Domain { .. } => 4,
        Error::OutputExists(_) => 5,
        Error::Dimension { .. } | Error::Io(_) => 1,
    }
}

fn refuse_existing(paths: &[&Path], force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    match paths.iter().find(|p| p.exists()) {
        Some(p) => Err(Error::OutputExists(p.display().to_string())),
        None => Ok(()),
    }
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => Ok(fs::create_dir_all(p)?),
        _ => Ok(()),
    }
}

pub fn run(cli: Cli, out: &mut impl Write) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a, out),
        Command::Train(a) => cmd_train(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Compare(a) => {
            out.write_all(compare_files(&a.files)?.render().as_bytes())?;
            Ok(())
        }
    }
}

/// Writes `train.bin` and `test.bin` into `--out`, or into the data
/// directory when `--out` is absent.
pub fn cmd_gen(a: &GenArgs, out: &mut impl Write) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let dir = a.cfg.out.clone().unwrap_or_else(|| cfg.data.clone());
    let (train_path, test_path) = (dir.join("train.bin"), dir.join("test.bin"));
    refuse_existing(&[&train_path, &test_path], a.force)?;
    let (train_set, test_set) = match cfg.task {
        TaskKind::SignalId => gen_signal_id(&cfg.signal, cfg.seed)?,
        TaskKind::Copy => gen_copy(&cfg.copy, cfg.seed)?,
    };
    fs::create_dir_all(&dir)?;
    save_dataset(&train_set, &train_path)?;
    save_dataset(&test_set, &test_path)?;
    writeln!(
        out,
        "wrote {} ({} sequences) and {} ({} sequences)",
        train_path.display(),
        train_set.len(),
        test_path.display(),
        test_set.len()
    )?;
    Ok(())
}

fn dataset_shape(ds: &Dataset) -> Result<(usize, usize)> {
    let classes = ds.classes()?;
    let input = ds
        .examples
        .first()
        .map(|e| e.dim)
        .ok_or_else(|| Error::Data("training set is empty".into()))?;
    Ok((input, classes))
}

pub fn cmd_train(a: &TrainArgs, out: &mut impl Write) -> Result<()> {
    let mut cfg = a.cfg.resolve()?;
    let train_set = load_dataset(&cfg.data.join("train.bin"))?;
    let test_path = cfg.data.join("test.bin");
    let test_set = if test_path.exists() {
        Some(load_dataset(&test_path)?)
    } else {
        None
    };
    let task = train_set.task()?;
    if a.cfg.task.is_some() && task != cfg.task {
        return Err(Error::Config(format!("--task {} but the dataset holds {task}", cfg.task)));
    }
    cfg.task = task;
    let (input, classes) = dataset_shape(&train_set)?;

    let metrics_path = cfg.out.join("metrics.csv");
    let ck_path = cfg.out.join("checkpoint.bin");
    let cfg_path = cfg.out.join("config.txt");
    let mut outputs = vec![metrics_path.as_path(), ck_path.as_path(), cfg_path.as_path()];
    if let Some(t) = &a.trace {
        outputs.push(t);
    }
    refuse_existing(&outputs, a.force)?;
    fs::create_dir_all(&cfg.out)?;

    let mut text = cfg.render();
    for (k, v) in &train_set.meta {
        text.push_str(&format!("# data.{k}={v}\n"));
    }
    fs::write(&cfg_path, text)?;

    let root = RngStream::new(cfg.seed);
    let mut model = Model::init(cfg.model_spec(input, classes), &root.derive_named("init"))?;
    let mut csv = BufWriter::new(File::create(&metrics_path)?);
    writeln!(csv, "{METRICS_HEADER}")?;
    let outcome = train(
        &mut model,
        &cfg.train_config(),
        &train_set,
        test_set.as_ref(),
        &root.derive_named("train"),
        |row| {
            writeln!(csv, "{}", row.csv_row())?;
            csv.flush()?;
            Ok(())
        },
    );
    csv.flush()?;
    let outcome = outcome?;
    let ck = Checkpoint::new(&cfg, &model, cfg.iters, outcome.shuffle_counter, outcome.noise_counter);
    save_checkpoint(&ck, &ck_path)?;
    if let Some(last) = outcome.metrics.last() {
        writeln!(
            out,
            "step {} {}: loss {:.6} accuracy {:.4} scale mean {:.4}",
            last.step,
            last.split,
            last.loss,
            last.accuracy,
            last.scale.mean()
        )?;
    }
    if let Some(trace_path) = &a.trace {
        let ds = test_set.as_ref().unwrap_or(&train_set);
        let opts = EvalOptions {
            batch_size: cfg.eval_batch,
            argmax_scale: cfg.eval_argmax_scale,
            keep_traces: true,
            limit: (cfg.eval_limit > 0).then_some(cfg.eval_limit),
            force_scale: None,
        };
        let summary = evaluate(&model, ds, &opts, &mut root.derive_named("trace"))?;
        write_trace_file(trace_path, &summary)?;
    }
    writeln!(out, "wrote {}", cfg.out.display())?;
    Ok(())
}

fn write_trace_file(path: &Path, summary: &EvalSummary) -> Result<()> {
    create_parent(path)?;
    let traces = summary.traces.as_deref().unwrap_or(&[]);
    let mut w = BufWriter::new(File::create(path)?);
    if path.extension().is_some_and(|e| e == "csv") {
        write_traces_csv(&mut w, traces)?;
    } else {
        write_traces_jsonl(&mut w, traces)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct EvalRecord<'a> {
    checkpoint: String,
    data: String,
    task: &'a str,
    sequences: usize,
    loss: f64,
    accuracy: f64,
    scale_min: usize,
    scale_max: usize,
    scale_mean: f64,
}

/// Prints a text table followed by one JSON record.
pub fn cmd_eval(a: &EvalArgs, out: &mut impl Write) -> Result<()> {
    if let Some(t) = &a.trace {
        refuse_existing(&[t], a.force)?;
    }
    let ck = load_checkpoint(&a.checkpoint)?;
    let model = ck.model()?;
    let path = if a.data.is_dir() { a.data.join("test.bin") } else { a.data.clone() };
    let ds = load_dataset(&path)?;
    let task = ds.task()?;
    let spec = model.spec();
    if ds.examples.iter().any(|e| e.dim != spec.input) || ds.classes()? != spec.classes {
        return Err(Error::Config(format!(
            "{} does not match the checkpoint (input {}, classes {})",
            path.display(),
            spec.input,
            spec.classes
        )));
    }
    let opts = EvalOptions {
        batch_size: a.batch.unwrap_or(ck.config.eval_batch),
        argmax_scale: a.eval_argmax_scale || ck.config.eval_argmax_scale,
        keep_traces: a.trace.is_some(),
        limit: a.limit,
        force_scale: None,
    };
    let seed = a.seed.unwrap_or(ck.config.seed);
    let summary = evaluate(&model, &ds, &opts, &mut RngStream::new(seed).derive_named("eval"))?;
    writeln!(out, "{:<10} {:>9} {:>10} {:>9} {:>9} {:>9} {:>10}", "task", "sequences", "loss", "accuracy", "scale_min", "scale_max", "scale_mean")?;
    writeln!(
        out,
        "{:<10} {:>9} {:>10.6} {:>9.4} {:>9} {:>9} {:>10.4}",
        task.as_str(),
        summary.sequences,
        summary.loss,
        summary.accuracy,
        summary.scale.min,
        summary.scale.max,
        summary.scale.mean()
    )?;
    let record = EvalRecord {
        checkpoint: a.checkpoint.display().to_string(),
        data: path.display().to_string(),
        task: task.as_str(),
        sequences: summary.sequences,
        loss: summary.loss,
        accuracy: summary.accuracy,
        scale_min: summary.scale.min,
        scale_max: summary.scale.max,
        scale_mean: summary.scale.mean(),
    };
    writeln!(out, "{}", serde_json::to_string(&record).map_err(|e| Error::Io(e.into()))?)?;
    if let Some(t) = &a.trace {
        write_trace_file(t, &summary)?;
    }
    Ok(())
}
