use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("no documents")]
    NoDocuments,

    #[error("term index {index} out of range for vocabulary of size {vocab}")]
    TermOutOfRange { index: usize, vocab: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid responses: {0}")]
    Response(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("cholesky factorization failed with jitter up to {0:e}")]
    Cholesky(f64),

    #[error("count underflow at {what} (corrupted topic state)")]
    CountUnderflow { what: &'static str },

    #[error("snapshot: bad magic bytes")]
    BadMagic,

    #[error("snapshot: unsupported format version {found} (this reader understands version {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("snapshot: file truncated")]
    Truncated,

    #[error("snapshot: checksum mismatch (stored {stored:#018x}, computed {computed:#018x})")]
    Checksum { stored: u64, computed: u64 },

    #[error("snapshot: {0}")]
    Snapshot(String),
}

pub type Result<T> = std::result::Result<T, Error>;
