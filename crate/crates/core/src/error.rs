use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("column `{0}` is missing from the CSV header")]
    MissingColumn(String),

    #[error("row {row}: token `{token}` is not a category of feature `{feature}`")]
    UnknownCategory {
        feature: String,
        token: String,
        row: usize,
    },

    #[error("row {row}: label `{value}` is not 0 or 1")]
    NonBinaryLabel { row: usize, value: String },

    #[error("row {row}: cannot parse `{token}` as a number for feature `{feature}`")]
    InvalidNumber {
        feature: String,
        token: String,
        row: usize,
    },

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("matrix has no rows")]
    EmptyMatrix,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("split leaves one side empty ({train} train / {test} test)")]
    DegenerateSplit { train: usize, test: usize },

    #[error("input contains a non-finite value")]
    NonFiniteInput,

    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("fold {fold} has only {size} samples")]
    FoldTooSmall { fold: usize, size: usize },

    #[error("column {column} has negative variance {variance}")]
    InvalidVariance { column: usize, variance: f64 },

    #[error("distance {0} is negative or not finite")]
    NegativeDistance(f64),

    #[error("stability needs at least 2 runs, got {0}")]
    TooFewRuns(usize),

    #[error("neighborhood size {n} exceeds the sample pool m = {m}")]
    GridExceedsPool { n: usize, m: usize },

    #[error("method `{0}` needs a trained autoencoder")]
    MissingAutoencoder(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
