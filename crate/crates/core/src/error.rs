use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("subset `{0}` has no rows")]
    EmptySubset(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("k-means needs at least {k} points, got {n}")]
    TooFewPoints { n: usize, k: usize },

    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),

    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("archive is empty")]
    EmptyArchive,

    #[error("descriptor {0:?} lies outside the archive grid")]
    OutOfGrid((usize, usize, usize)),

    #[error("{path}: no valid rows")]
    NoValidRows { path: PathBuf },

    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    #[error("log10 of non-positive value {value} in column {column}, row {row}")]
    NonPositiveLog { column: usize, row: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed record at line {line}: {msg}")]
    Record { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
