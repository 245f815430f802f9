use std::fmt;

/// Where in an input a format error was detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Byte(u64),
    Line(usize),
    Unknown,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Byte(offset) => write!(f, "byte offset {offset}"),
            Location::Line(line) => write!(f, "line {line}"),
            Location::Unknown => f.write_str("unknown position"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("format error at {location}: {message}")]
    Format { location: Location, message: String },

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: u64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("problem of dimension {dimension} exceeds the enumeration limit of {limit}")]
    Capacity { dimension: usize, limit: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(location: Location, msg: impl Into<String>) -> Self {
        Error::Format {
            location,
            message: msg.into(),
        }
    }

    /// Short stable tag for the error kind, used in machine-readable output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Domain(_) => "domain",
            Error::Format { .. } => "format",
            Error::TrainingDiverged { .. } => "training-diverged",
            Error::NotPositiveDefinite { .. } => "not-positive-definite",
            Error::Capacity { .. } => "capacity",
            Error::InvalidState(_) => "invalid-state",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
