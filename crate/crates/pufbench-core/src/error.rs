use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty topology: x + y + z must be at least 1")]
    EmptyTopology,

    #[error("undefined correlation: input vector is constant")]
    UndefinedCorrelation,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed dataset header: {0}")]
    MalformedHeader(String),

    #[error("unsupported dataset version {0:?} (expected \"CRPB1\")")]
    UnsupportedVersion(String),

    #[error("truncated dataset: header declares {declared} records, found {found}")]
    Truncated { declared: usize, found: usize },

    #[error("dataset checksum mismatch: header {header:#018x}, body {body:#018x}")]
    ChecksumMismatch { header: u64, body: u64 },

    #[error("malformed record at line {line}: {msg}")]
    MalformedRecord { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
