use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised while loading data, fitting transforms or running jobs.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Csv {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("column `{column}` not found{}", context.as_deref().map(|c| format!(" ({c})")).unwrap_or_default())]
    MissingColumn {
        column: String,
        context: Option<String>,
    },
    #[error("row {row}, column `{column}`: {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("invalid parameter `{name}`: {message}")]
    Param { name: String, message: String },
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("dimension mismatch: expected {expected} features, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("empty (group={group}, label={label}) cell")]
    EmptyCell { group: u8, label: u8 },
    #[error("optimisation failed: {0}")]
    Optimization(String),
    #[error("cache entry is corrupt: {0}")]
    CacheFormat(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

/// A metric that cannot be evaluated on the given data.
///
/// Metric bundles carry these per field so that a single undefined value does
/// not void the rest of the bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricError {
    #[error("group {group} is empty")]
    EmptyGroup { group: u8 },
    #[error("undefined ratio: privileged rate is zero")]
    UndefinedRatio,
    #[error("undefined rate {rate} for {scope}: zero denominator")]
    UndefinedRate { scope: String, rate: String },
    #[error("need more than {k} records for {k}-nearest-neighbour consistency, got {n}")]
    TooFewRecords { n: usize, k: usize },
    #[error("input vectors have different lengths")]
    LengthMismatch,
    #[error("no records")]
    EmptyInput,
    #[error("no thresholds with defined metrics")]
    NoDefinedThreshold,
}
