use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed csv: {0}")]
    Csv(String),

    #[error("malformed config: {0}")]
    Config(String),

    #[error("partition mismatch: {0}")]
    Partition(String),

    #[error("non-numeric or missing value at row {row}, column `{column}`")]
    NonNumeric { row: usize, column: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("modality index {index} out of range (dataset has {count} modalities)")]
    ModalityOutOfRange { index: usize, count: usize },

    #[error("dataset is already centered")]
    AlreadyCentered,

    #[error("input is not centered (largest column mean {max_mean:e})")]
    NotCentered { max_mean: f64 },

    #[error("requested {requested} factors but at most {max} are available")]
    TooManyFactors { requested: usize, max: usize },

    #[error("modality {modality} has no detected factor structure; the score test is undefined (use the Wald test on its coordinates)")]
    NoFactors { modality: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("response has zero variance")]
    ZeroVariance,

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for failures caused by the numbers rather than by the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular(_)
                | Error::NotPositiveDefinite(_)
                | Error::Numerical(_)
                | Error::ZeroVariance
                | Error::NoFactors { .. }
        )
    }
}
