use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid gene model: {0}")]
    InvalidGene(String),

    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("read is not compatible with isoform {isoform}")]
    IncompatibleIsoform { isoform: usize },

    #[error("read type has an all-zero sampling rate vector")]
    ZeroRateColumn,

    #[error("{} observed read type(s) have zero sampling rate on every isoform (possible unannotated isoform): {}", .0.len(), .0.join("; "))]
    UnsupportedReads(Vec<String>),

    #[error("read type {0} is not present in the rate matrix")]
    UnknownReadType(String),

    #[error("infeasible parameter: category {category} has {count} reads but zero expected rate")]
    Infeasible { category: usize, count: u64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    pub(crate) fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), message: message.into() }
    }
}
