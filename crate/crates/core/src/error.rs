use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value in layer {layer} during {phase}")]
    NonFinite { layer: usize, phase: &'static str },

    #[error("non-finite gradient entry at index {index}; parameters left untouched")]
    NonFiniteGradient { index: usize },

    #[error("non-finite loss for critic {critic}")]
    NonFiniteLoss { critic: usize },

    #[error("episode finished; call reset before stepping again")]
    EpisodeFinished,

    #[error("unknown environment '{0}' (expected 'pendulum' or 'pointmass')")]
    UnknownEnv(String),

    #[error("unknown dataset tier '{0}'")]
    UnknownTier(String),

    #[error("offline buffer overflow: {requested} transitions exceed remaining capacity {available}")]
    BufferOverflow { requested: usize, available: usize },

    #[error("offline buffer holds {available} transitions, fewer than batch size {batch_size}")]
    InsufficientData { available: usize, batch_size: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("degenerate score scale: expert reference {expert} <= random reference {random}")]
    DegenerateScale { random: f64, expert: f64 },

    #[error("{path}: line {line}: {kind}")]
    Parse {
        path: PathBuf,
        line: usize,
        kind: ParseErrorKind,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Distinct dataset and config parse failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("file truncated: header declares {declared} records, found {found}")]
    Truncated { declared: usize, found: usize },
    #[error("trailing data beyond the {declared} declared records")]
    TrailingRecords { declared: usize },
    #[error("dimension mismatch in field '{field}': expected {expected}, got {actual}")]
    Dimension {
        field: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("done flag must be 0 or 1, got {0}")]
    BadDoneFlag(String),
    #[error("malformed line: {0}")]
    Malformed(String),
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("invalid value for '{key}': {value}")]
    BadValue { key: String, value: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
