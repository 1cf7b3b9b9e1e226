use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("at least two tables are required, got {0}")]
    TooFewTables(usize),

    #[error("table {table} has no rows")]
    EmptyTable { table: usize },

    #[error("table {table} schema {found:?} does not match {expected:?}")]
    SchemaMismatch {
        table: usize,
        expected: Vec<String>,
        found: Vec<String>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("remote embedder unavailable: {0}")]
    RemoteUnavailable(String),

    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),

    #[error("tuple has {0} members; classification needs at least 2")]
    TupleTooSmall(usize),

    #[error("invalid entity reference {0:?}")]
    InvalidEntityRef(String),

    #[error("truth tuples overlap on {0}")]
    OverlappingTruth(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::TooFewTables(_) => "TooFewTables",
            Error::EmptyTable { .. } => "EmptyTable",
            Error::SchemaMismatch { .. } => "SchemaMismatch",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::InvalidParams(_) => "InvalidParams",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::RemoteUnavailable(_) => "RemoteUnavailable",
            Error::InvalidEmbedding(_) => "InvalidEmbedding",
            Error::TupleTooSmall(_) => "TupleTooSmall",
            Error::InvalidEntityRef(_) => "InvalidEntityRef",
            Error::OverlappingTruth(_) => "OverlappingTruth",
            Error::Precondition(_) => "Precondition",
            Error::Io { .. } => "Io",
            Error::Csv { .. } => "Csv",
            Error::Json { .. } => "Json",
            Error::Config { .. } => "Config",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
