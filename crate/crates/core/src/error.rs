use std::io;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: [usize; 2],
        right: [usize; 2],
    },
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("index {index} out of range for {len} classes")]
    Index { index: usize, len: usize },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("parse error at byte {offset}: {detail}")]
    Parse { offset: u64, detail: String },
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("non-finite loss {value} at step {step}")]
    Divergence { step: usize, value: f64 },
    #[error("non-finite gradient for parameter `{param}`")]
    NonFiniteGradient { param: String },
    #[error("refusing to overwrite {0} (pass --force)")]
    OutputExists(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}
