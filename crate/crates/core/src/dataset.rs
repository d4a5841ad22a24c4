//! Binary dataset files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   "ASRNNDS\0"
//! version      u32       1
//! header_len   u32       length of the header text
//! header       UTF-8     "key=value\n" lines (task, seed, counts, generator spec)
//! count        u64       number of examples
//! per example:
//!   steps      u32
//!   dim        u32
//!   frames     steps·dim × f32
//!   kind       u8        0 = sequence label, 1 = per-step symbols
//!   label      u16                        (kind 0)
//!   symbols    steps × u16, mask steps × u8   (kind 1)
//! ```
//!
//! The whole file is read and validated before anything is returned.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tasks::{Target, TaskExample, TaskKind};

pub const DATASET_MAGIC: &[u8; 8] = b"ASRNNDS\0";
pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dataset {
    /// Ordered `key=value` header entries.
    pub meta: Vec<(String, String)>,
    pub examples: Vec<TaskExample>,
}

impl Dataset {
    pub fn new(meta: Vec<(String, String)>, examples: Vec<TaskExample>) -> Self {
        Self { meta, examples }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn task(&self) -> Result<TaskKind> {
        self.get("task")
            .ok_or_else(|| Error::Data("dataset header has no `task`".into()))?
            .parse()
            .map_err(|_| Error::Data("dataset header has an unknown task".into()))
    }

    pub fn classes(&self) -> Result<usize> {
        self.get("classes")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Data("dataset header has no valid `classes`".into()))
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        let header = render_header(&self.meta)?;
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&(self.examples.len() as u64).to_le_bytes());
        for ex in &self.examples {
            let steps = ex.steps();
            if ex.dim == 0 || ex.frames.len() != steps * ex.dim {
                return Err(Error::Data("example frames are not a whole number of frames".into()));
            }
            out.extend_from_slice(&(steps as u32).to_le_bytes());
            out.extend_from_slice(&(ex.dim as u32).to_le_bytes());
            for v in &ex.frames {
                out.extend_from_slice(&v.to_le_bytes());
            }
            match &ex.target {
                Target::Label(l) => {
                    out.push(0);
                    out.extend_from_slice(&l.to_le_bytes());
                }
                Target::Symbols { symbols, mask } => {
                    if symbols.len() != steps || mask.len() != steps {
                        return Err(Error::Data(
                            "per-step targets must match the sequence length".into(),
                        ));
                    }
                    out.push(1);
                    for s in symbols {
                        out.extend_from_slice(&s.to_le_bytes());
                    }
                    out.extend(mask.iter().map(|&m| u8::from(m)));
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let magic = r.take(8, "magic")?;
        if magic != DATASET_MAGIC {
            return Err(Error::Parse {
                offset: 0,
                detail: "bad magic bytes, not a dataset file".into(),
            });
        }
        let version = r.u32("version")?;
        if version != DATASET_VERSION {
            return Err(Error::Version {
                found: version,
                expected: DATASET_VERSION,
            });
        }
        let header_len = r.u32("header length")? as usize;
        let header_at = r.offset();
        let header = std::str::from_utf8(r.take(header_len, "header")?).map_err(|_| Error::Parse {
            offset: header_at,
            detail: "header is not UTF-8".into(),
        })?;
        let meta = parse_header(header).map_err(|detail| Error::Parse {
            offset: header_at,
            detail,
        })?;
        let count = r.u64("example count")?;
        let mut examples = Vec::new();
        for _ in 0..count {
            let steps = r.u32("steps")? as usize;
            let dim_at = r.offset();
            let dim = r.u32("dim")? as usize;
            if dim == 0 {
                return Err(Error::Parse {
                    offset: dim_at,
                    detail: "zero frame dimension".into(),
                });
            }
            let n = steps.checked_mul(dim).ok_or_else(|| r.error("frame count overflows"))?;
            let raw = r.take(n.checked_mul(4).ok_or_else(|| r.error("frame count overflows"))?, "frames")?;
            let frames = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let kind_at = r.offset();
            let target = match r.u8("target kind")? {
                0 => Target::Label(r.u16("label")?),
                1 => {
                    let raw = r.take(steps * 2, "symbols")?;
                    let symbols = raw
                        .chunks_exact(2)
                        .map(|c| u16::from_le_bytes([c[0], c[1]]))
                        .collect();
                    let mask_at = r.offset();
                    let mask = r
                        .take(steps, "mask")?
                        .iter()
                        .map(|&b| match b {
                            0 => Ok(false),
                            1 => Ok(true),
                            _ => Err(Error::Parse {
                                offset: mask_at,
                                detail: format!("mask byte {b} is not 0 or 1"),
                            }),
                        })
                        .collect::<Result<Vec<bool>>>()?;
                    Target::Symbols { symbols, mask }
                }
                other => {
                    return Err(Error::Parse {
                        offset: kind_at,
                        detail: format!("unknown target kind {other}"),
                    })
                }
            };
            examples.push(TaskExample { frames, dim, target });
        }
        if r.offset() as usize != bytes.len() {
            return Err(r.error("trailing bytes after the last example"));
        }
        Ok(Self { meta, examples })
    }
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, dataset.to_bytes()?)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::from_bytes(&fs::read(path)?)
}

pub(crate) fn render_header(meta: &[(String, String)]) -> Result<String> {
    let mut s = String::new();
    for (k, v) in meta {
        if k.is_empty() || k.contains(['=', '\n']) || v.contains('\n') {
            return Err(Error::Data(format!("header entry `{k}` cannot be encoded")));
        }
        s.push_str(k);
        s.push('=');
        s.push_str(v);
        s.push('\n');
    }
    Ok(s)
}

pub(crate) fn parse_header(text: &str) -> std::result::Result<Vec<(String, String)>, String> {
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| format!("header line `{l}` has no `=`"))
        })
        .collect()
}

/// Bounds-checked little-endian cursor that reports byte offsets.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn error(&self, detail: &str) -> Error {
        Error::Parse {
            offset: self.offset(),
            detail: detail.to_string(),
        }
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.error(&format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub(crate) fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{gen_copy, gen_signal_id, CopySpec, SignalIdSpec};

    #[test]
    fn empty_round_trip() {
        let d = Dataset::default();
        assert_eq!(Dataset::from_bytes(&d.to_bytes().unwrap()).unwrap(), d);
    }

    #[test]
    fn generated_round_trip() {
        let spec = SignalIdSpec {
            train_per_class: 30,
            test_per_class: 4,
            ..SignalIdSpec::default()
        };
        let (train, _) = gen_signal_id(&spec, 17).unwrap();
        assert_eq!(Dataset::from_bytes(&train.to_bytes().unwrap()).unwrap(), train);
        let (copy, _) = gen_copy(
            &CopySpec {
                delay: 12,
                train_count: 20,
                test_count: 0,
            },
            2,
        )
        .unwrap();
        assert_eq!(Dataset::from_bytes(&copy.to_bytes().unwrap()).unwrap(), copy);
    }

    #[test]
    fn corrupted_magic_rejected() {
        let mut bytes = Dataset::default().to_bytes().unwrap();
        bytes[0] ^= 0xff;
        assert!(matches!(
            Dataset::from_bytes(&bytes),
            Err(Error::Parse { offset: 0, .. })
        ));
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let mut bytes = Dataset::default().to_bytes().unwrap();
        bytes[8] = 9;
        assert!(matches!(
            Dataset::from_bytes(&bytes),
            Err(Error::Version { found: 9, expected: 1 })
        ));
    }

    #[test]
    fn truncation_reports_offset() {
        let (train, _) = gen_copy(
            &CopySpec {
                delay: 3,
                train_count: 2,
                test_count: 0,
            },
            0,
        )
        .unwrap();
        let bytes = train.to_bytes().unwrap();
        let cut = bytes.len() - 5;
        match Dataset::from_bytes(&bytes[..cut]) {
            Err(Error::Parse { offset, .. }) => assert!(offset as usize <= cut),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn trailing_garbage_rejected() {
        let mut bytes = Dataset::default().to_bytes().unwrap();
        bytes.push(0);
        assert!(matches!(Dataset::from_bytes(&bytes), Err(Error::Parse { .. })));
    }
}
