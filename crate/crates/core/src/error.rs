use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {dim} expected {expected}, got {actual}")]
    ShapeMismatch { op: &'static str, dim: &'static str, expected: usize, actual: usize },

    #[error("invalid shape {shape:?} for {op}: {reason}")]
    InvalidShape { op: &'static str, shape: Vec<usize>, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed {format} data at byte {offset}: {reason}")]
    Format { format: &'static str, offset: u64, reason: String },

    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("dataset manifest: {0}")]
    Manifest(String),

    #[error("missing weights: {name} not found in archive {archive}")]
    MissingTensor { archive: String, name: String },

    #[error("missing weights archive {0}")]
    MissingArchive(PathBuf),

    #[error("config: {0}")]
    Config(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(format: &'static str, offset: u64, reason: impl Into<String>) -> Self {
        Error::Format { format, offset, reason: reason.into() }
    }
}
