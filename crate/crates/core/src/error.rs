use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad classes of failure, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    /// A value outside the domain of the operation (negative income, missing field, ...).
    #[error("domain error in `{field}`: {reason}")]
    Domain { field: String, reason: String },

    #[error("duplicate observation key ({unit_id}, {period})")]
    DuplicateKey { unit_id: String, period: i32 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("rank deficient design: column `{column}` is linearly dependent on earlier columns")]
    RankDeficient { column: String },

    #[error("too few observations: n = {n} but the design has {k} columns")]
    TooFewObservations { n: usize, k: usize },

    #[error("moment cell ({row}, {col}) is estimated from n = {n} < 2 observations")]
    SparseCell { row: String, col: String, n: usize },

    #[error("degenerate computation: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Domain {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::Domain { .. } | Error::DuplicateKey { .. } | Error::Data(_) | Error::Csv(_) => {
                ErrorClass::Data
            }
            Error::RankDeficient { .. }
            | Error::TooFewObservations { .. }
            | Error::SparseCell { .. }
            | Error::Degenerate(_) => ErrorClass::Numerical,
            Error::Io(_) => ErrorClass::Io,
        }
    }
}
