use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot open {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}, column '{column}': cannot parse '{value}' as a finite number")]
    Unparsable {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column '{column}': missing value")]
    MissingValue { row: usize, column: String },
    #[error("target not binary: row {row} has value '{value}'")]
    TargetNotBinary { row: usize, value: String },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("column '{0}' not found")]
    MissingColumn(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("non-finite objective at iteration {0}")]
    NonFiniteObjective(usize),
    #[error("degenerate target: {0}")]
    DegenerateTarget(String),
    #[error("non-finite value for variable '{0}'")]
    NonFiniteInput(String),
    #[error("malformed model or grid file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
