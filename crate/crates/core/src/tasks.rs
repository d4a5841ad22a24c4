//! Synthetic benchmark generators.
//!
//! Both generators are pure functions of their spec and a base seed: example
//! `i` draws from `RngStream::new(seed + i)`, so datasets are reproducible
//! byte for byte and examples can be produced independently.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const COPY_PAYLOAD: usize = 10;
pub const COPY_BLANK: u16 = 8;
pub const COPY_TRIGGER: u16 = 9;
pub const COPY_ALPHABET: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    SignalId,
    Copy,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::SignalId => "signal-id",
            TaskKind::Copy => "copy",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signal-id" => Ok(TaskKind::SignalId),
            "copy" => Ok(TaskKind::Copy),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    /// One class for the whole sequence.
    Label(u16),
    /// One symbol per step; `mask[t]` marks the steps that carry loss.
    Symbols { symbols: Vec<u16>, mask: Vec<bool> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskExample {
    /// `steps × dim` row-major frames.
    pub frames: Vec<f32>,
    pub dim: usize,
    pub target: Target,
}

impl TaskExample {
    pub fn steps(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.frames.len() / self.dim
        }
    }

    pub fn frames_f64(&self) -> Vec<f64> {
        self.frames.iter().map(|&v| f64::from(v)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WaveKind {
    Square,
    Sawtooth,
    Sine,
}

impl WaveKind {
    pub const ALL: [WaveKind; 3] = [WaveKind::Square, WaveKind::Sawtooth, WaveKind::Sine];

    /// Value at phase `u ∈ [0, 1)` of a period with amplitude `a`.
    pub fn at(self, u: f64, a: f64) -> f64 {
        match self {
            WaveKind::Square => {
                if u < 0.5 {
                    a
                } else {
                    -a
                }
            }
            WaveKind::Sawtooth => -a + 2.0 * a * u,
            WaveKind::Sine => a * (2.0 * PI * u).sin(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignalIdSpec {
    pub seq_len: usize,
    pub min_subseqs: usize,
    pub max_subseqs: usize,
    pub min_sub_len: usize,
    pub max_sub_len: usize,
    pub amplitude: f64,
    pub noise: f64,
    pub min_period: usize,
    pub max_period: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
}

impl Default for SignalIdSpec {
    fn default() -> Self {
        Self {
            seq_len: 1000,
            min_subseqs: 3,
            max_subseqs: 5,
            min_sub_len: 20,
            max_sub_len: 100,
            amplitude: 7.0,
            noise: 1.0,
            min_period: 10,
            max_period: 50,
            train_per_class: 1600,
            test_per_class: 400,
        }
    }
}

impl SignalIdSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("signal-id: {m}")));
        if self.min_subseqs == 0 || self.min_subseqs > self.max_subseqs {
            return bad("need 1 <= min_subseqs <= max_subseqs");
        }
        if self.min_sub_len == 0 || self.min_sub_len > self.max_sub_len {
            return bad("need 1 <= min_sub_len <= max_sub_len");
        }
        if self.max_sub_len > self.seq_len || self.min_subseqs * self.min_sub_len > self.seq_len {
            return bad("subsequences cannot fit in the sequence");
        }
        if self.min_period < 2 || self.min_period > self.max_period {
            return bad("need 2 <= min_period <= max_period");
        }
        if !(self.amplitude > 0.0 && self.noise > 0.0) {
            return bad("amplitude and noise must be positive");
        }
        Ok(())
    }

    pub fn describe(&self) -> Vec<(String, String)> {
        [
            ("seq_len", self.seq_len.to_string()),
            ("min_subseqs", self.min_subseqs.to_string()),
            ("max_subseqs", self.max_subseqs.to_string()),
            ("min_sub_len", self.min_sub_len.to_string()),
            ("max_sub_len", self.max_sub_len.to_string()),
            ("amplitude", self.amplitude.to_string()),
            ("noise", self.noise.to_string()),
            ("min_period", self.min_period.to_string()),
            ("max_period", self.max_period.to_string()),
            ("train_per_class", self.train_per_class.to_string()),
            ("test_per_class", self.test_per_class.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// A placed wave segment, `start..start + len`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
    pub amplitude: f64,
    pub period: usize,
    pub phase: f64,
}

/// One signal-ID sequence with its layout, before f32 conversion.
#[derive(Clone, Debug)]
pub struct SignalSequence {
    pub values: Vec<f32>,
    pub kind: WaveKind,
    pub segments: Vec<Segment>,
}

const PLACEMENT_ATTEMPTS: usize = 1000;
const SEGMENT_TRIES: usize = 200;

fn place_segments(spec: &SignalIdSpec, rng: &mut RngStream) -> Result<Vec<(usize, usize)>> {
    let count = rng.int_inclusive(spec.min_subseqs, spec.max_subseqs);
    'attempt: for _ in 0..PLACEMENT_ATTEMPTS {
        let mut placed: Vec<(usize, usize)> = Vec::with_capacity(count);
        for _ in 0..count {
            let mut ok = false;
            for _ in 0..SEGMENT_TRIES {
                let len = rng.int_inclusive(spec.min_sub_len, spec.max_sub_len);
                let start = rng.int_inclusive(0, spec.seq_len - len);
                if placed
                    .iter()
                    .all(|&(s, l)| start + len <= s || s + l <= start)
                {
                    placed.push((start, len));
                    ok = true;
                    break;
                }
            }
            if !ok {
                continue 'attempt;
            }
        }
        placed.sort_unstable();
        return Ok(placed);
    }
    Err(Error::Generation(format!(
        "could not place {count} disjoint subsequences in {} steps",
        spec.seq_len
    )))
}

/// Largest f32 strictly inside (−bound, bound) closest to `v`.
fn inside_open(v: f64, bound: f64) -> f32 {
    let mut x = v as f32;
    let b = bound as f32;
    while x.abs() >= b {
        x = f32::from_bits(x.to_bits() - 1);
    }
    x
}

pub fn signal_sequence(spec: &SignalIdSpec, kind: WaveKind, rng: &mut RngStream) -> Result<SignalSequence> {
    let layout = place_segments(spec, rng)?;
    let mut values = vec![0f32; spec.seq_len];
    let mut covered = vec![false; spec.seq_len];
    let mut segments = Vec::with_capacity(layout.len());
    for (start, len) in layout {
        let amplitude = rng.uniform(-spec.amplitude, spec.amplitude);
        let period = rng.int_inclusive(spec.min_period, spec.max_period);
        let phase = rng.uniform_open();
        for s in 0..len {
            let u = (s as f64 / period as f64 + phase).fract();
            values[start + s] = kind.at(u, amplitude) as f32;
            covered[start + s] = true;
        }
        segments.push(Segment {
            start,
            len,
            amplitude,
            period,
            phase,
        });
    }
    for (v, c) in values.iter_mut().zip(&covered) {
        if !c {
            *v = inside_open(rng.uniform(-spec.noise, spec.noise), spec.noise);
        }
    }
    Ok(SignalSequence {
        values,
        kind,
        segments,
    })
}

/// Balanced three-class dataset split into (train, test).
///
/// Global example `i` has class `i % 3`; within a class the first
/// `train_per_class` examples go to the training split.
pub fn gen_signal_id(spec: &SignalIdSpec, seed: u64) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let per_class = spec.train_per_class + spec.test_per_class;
    let mut train = Vec::with_capacity(spec.train_per_class * 3);
    let mut test = Vec::with_capacity(spec.test_per_class * 3);
    for i in 0..per_class * 3 {
        let class = i % 3;
        let mut rng = RngStream::new(seed.wrapping_add(i as u64));
        let seq = signal_sequence(spec, WaveKind::ALL[class], &mut rng)?;
        let example = TaskExample {
            frames: seq.values,
            dim: 1,
            target: Target::Label(class as u16),
        };
        if i / 3 < spec.train_per_class {
            train.push(example);
        } else {
            test.push(example);
        }
    }
    let meta = |split: &str, n: usize| {
        let mut m = vec![
            ("task".to_string(), TaskKind::SignalId.to_string()),
            ("split".to_string(), split.to_string()),
            ("seed".to_string(), seed.to_string()),
            ("classes".to_string(), "3".to_string()),
            ("count".to_string(), n.to_string()),
        ];
        m.extend(spec.describe());
        m
    };
    Ok((
        Dataset::new(meta("train", train.len()), train),
        Dataset::new(meta("test", test.len()), test),
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CopySpec {
    pub delay: usize,
    pub train_count: usize,
    pub test_count: usize,
}

impl Default for CopySpec {
    fn default() -> Self {
        Self {
            delay: 200,
            train_count: 10_000,
            test_count: 1000,
        }
    }
}

impl CopySpec {
    pub fn seq_len(&self) -> usize {
        self.delay + 2 * COPY_PAYLOAD
    }
}

/// Cross-entropy of the predictor that emits blanks with certainty and then
/// guesses the payload uniformly: `10·ln 8 / (T + 20)`.
pub fn copy_memoryless_baseline(delay: usize) -> f64 {
    COPY_PAYLOAD as f64 * 8f64.ln() / (delay + 2 * COPY_PAYLOAD) as f64
}

/// Symbols of one copy sequence: `(inputs, targets)`.
pub fn copy_symbols(delay: usize, rng: &mut RngStream) -> (Vec<u16>, Vec<u16>) {
    let len = delay + 2 * COPY_PAYLOAD;
    let mut input = vec![COPY_BLANK; len];
    let mut target = vec![COPY_BLANK; len];
    for k in 0..COPY_PAYLOAD {
        let s = rng.below(8) as u16;
        input[k] = s;
        target[len - COPY_PAYLOAD + k] = s;
    }
    input[delay + COPY_PAYLOAD - 1] = COPY_TRIGGER;
    (input, target)
}

pub fn copy_example(delay: usize, rng: &mut RngStream) -> TaskExample {
    let (input, target) = copy_symbols(delay, rng);
    let len = input.len();
    let mut frames = vec![0f32; len * COPY_ALPHABET];
    for (t, &s) in input.iter().enumerate() {
        frames[t * COPY_ALPHABET + s as usize] = 1.0;
    }
    TaskExample {
        frames,
        dim: COPY_ALPHABET,
        target: Target::Symbols {
            symbols: target,
            mask: vec![true; len],
        },
    }
}

/// Copy-memory dataset split into (train, test); test examples continue the
/// per-example seed sequence after the training ones.
pub fn gen_copy(spec: &CopySpec, seed: u64) -> Result<(Dataset, Dataset)> {
    if spec.delay < 1 {
        return Err(Error::Config("copy: delay must be at least 1".into()));
    }
    let make = |range: std::ops::Range<usize>| -> Vec<TaskExample> {
        range
            .map(|i| copy_example(spec.delay, &mut RngStream::new(seed.wrapping_add(i as u64))))
            .collect()
    };
    let train = make(0..spec.train_count);
    let test = make(spec.train_count..spec.train_count + spec.test_count);
    let meta = |split: &str, n: usize| {
        vec![
            ("task".to_string(), TaskKind::Copy.to_string()),
            ("split".to_string(), split.to_string()),
            ("seed".to_string(), seed.to_string()),
            ("classes".to_string(), COPY_ALPHABET.to_string()),
            ("count".to_string(), n.to_string()),
            ("delay".to_string(), spec.delay.to_string()),
            ("seq_len".to_string(), spec.seq_len().to_string()),
        ]
    };
    Ok((
        Dataset::new(meta("train", train.len()), train),
        Dataset::new(meta("test", test.len()), test),
    ))
}
