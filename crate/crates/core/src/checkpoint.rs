//! Versioned parameter checkpoints.
//!
//! ```text
//! magic        8 bytes   "ASRNNCK\0"
//! version      u32       1
//! text_len     u32
//! text         UTF-8     resolved config, then `model.*`, `rng.*` and `state.*` lines
//! count        u32       number of tensors
//! per tensor (declared order):
//!   name_len   u16, name UTF-8
//!   rows u32, cols u32
//!   data       rows·cols × f64, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::cells::{Model, ParamSet};
use crate::config::ExperimentConfig;
use crate::dataset::Reader;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ASRNNCK\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ExperimentConfig,
    pub input: usize,
    pub classes: usize,
    /// Optimizer steps taken.
    pub step: usize,
    pub shuffle_counter: u64,
    pub noise_counter: u64,
    pub params: ParamSet,
}

impl Checkpoint {
    pub fn new(config: &ExperimentConfig, model: &Model, step: usize, shuffle_counter: u64, noise_counter: u64) -> Self {
        Self {
            config: config.clone(),
            input: model.spec().input,
            classes: model.spec().classes,
            step,
            shuffle_counter,
            noise_counter,
            params: model.params().clone(),
        }
    }

    /// Rebuilds the model, checking names and shapes against the config.
    pub fn model(&self) -> Result<Model> {
        let spec = self.config.model_spec(self.input, self.classes);
        Model::from_params(spec, self.params.clone())
    }

    pub fn text(&self) -> String {
        let mut s = self.config.render();
        s.push_str(&format!(
            "model.input={}\nmodel.classes={}\nstate.step={}\nrng.shuffle_counter={}\nrng.noise_counter={}\n",
            self.input, self.classes, self.step, self.shuffle_counter, self.noise_counter
        ));
        s
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let text = self.text();
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in self.params.names().iter().zip(self.params.tensors()) {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(8, "magic")? != CHECKPOINT_MAGIC {
            return Err(Error::Parse {
                offset: 0,
                detail: "bad magic bytes, not a checkpoint".into(),
            });
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let text_len = r.u32("config length")? as usize;
        let text_at = r.offset();
        let text = std::str::from_utf8(r.take(text_len, "config")?).map_err(|_| Error::Parse {
            offset: text_at,
            detail: "config block is not UTF-8".into(),
        })?;
        let mut config_text = String::new();
        let (mut input, mut classes, mut step, mut shuffle, mut noise) = (None, None, None, None, None);
        for line in text.lines() {
            let num = |v: &str| -> Result<u64> {
                v.parse().map_err(|_| Error::Parse {
                    offset: text_at,
                    detail: format!("bad value in `{line}`"),
                })
            };
            match line.split_once('=') {
                Some(("model.input", v)) => input = Some(num(v)? as usize),
                Some(("model.classes", v)) => classes = Some(num(v)? as usize),
                Some(("state.step", v)) => step = Some(num(v)? as usize),
                Some(("rng.shuffle_counter", v)) => shuffle = Some(num(v)?),
                Some(("rng.noise_counter", v)) => noise = Some(num(v)?),
                _ => {
                    config_text.push_str(line);
                    config_text.push('\n');
                }
            }
        }
        let missing = |k: &str| Error::Parse {
            offset: text_at,
            detail: format!("config block lacks `{k}`"),
        };
        let config = ExperimentConfig::from_text(&config_text)?;
        let count = r.u32("tensor count")? as usize;
        let mut names = Vec::with_capacity(count.min(64));
        let mut tensors = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let len = r.u16("name length")? as usize;
            let name_at = r.offset();
            let name = std::str::from_utf8(r.take(len, "name")?).map_err(|_| Error::Parse {
                offset: name_at,
                detail: "tensor name is not UTF-8".into(),
            })?;
            let rows = r.u32("rows")? as usize;
            let cols = r.u32("cols")? as usize;
            let n = rows.checked_mul(cols).ok_or_else(|| r.error("tensor size overflows"))?;
            if n.checked_mul(8).map_or(true, |b| b > bytes.len()) {
                return Err(r.error("tensor larger than the file"));
            }
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(r.f64("tensor data")?);
            }
            names.push(name.to_string());
            tensors.push(Tensor::from_vec(rows, cols, data)?);
        }
        if r.offset() as usize != bytes.len() {
            return Err(r.error("trailing bytes after the last tensor"));
        }
        let ck = Self {
            config,
            input: input.ok_or_else(|| missing("model.input"))?,
            classes: classes.ok_or_else(|| missing("model.classes"))?,
            step: step.ok_or_else(|| missing("state.step"))?,
            shuffle_counter: shuffle.ok_or_else(|| missing("rng.shuffle_counter"))?,
            noise_counter: noise.ok_or_else(|| missing("rng.noise_counter"))?,
            params: ParamSet::new(names, tensors)?,
        };
        ck.model().map_err(|e| Error::Data(format!("checkpoint does not match its config: {e}")))?;
        Ok(ck)
    }
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, ck.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn sample() -> Checkpoint {
        let mut config = ExperimentConfig::default();
        config.cell = crate::cells::CellKind::Gru;
        config.hidden = 5;
        let model = Model::init(config.model_spec(2, 3), &RngStream::new(4)).unwrap();
        Checkpoint::new(&config, &model, 17, 40, 900)
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.model().unwrap().params(), &ck.params);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes();
        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Parse { offset: 0, .. })));
        let mut bad = bytes.clone();
        bad[8] = 2;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Version { found: 2, .. })));
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn shape_mismatch_with_config_rejected() {
        let mut ck = sample();
        ck.config.hidden = 6;
        assert!(matches!(Checkpoint::from_bytes(&ck.to_bytes()), Err(Error::Data(_))));
    }
}
