use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value outside the domain of the operation (bad ordinal level,
    /// inverted interval, shape mismatch, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("column {column}: marginal has no observations")]
    NotFitted { column: usize },

    /// Operation invoked on the wrong kind of object.
    #[error("misuse: {0}")]
    Misuse(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("matrix not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("oracle infeasible: acceptance rate {rate:e} below 1e-6")]
    OracleInfeasible { rate: f64 },

    #[error("row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("replicate {replicate}: {source}")]
    Replicate {
        replicate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("snapshot: {0}")]
    Snapshot(String),
}

impl Error {
    pub(crate) fn at_row(self, row: usize) -> Self {
        Error::Row {
            row,
            source: Box::new(self),
        }
    }

    /// Strips row/replicate wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Row { source, .. } | Error::Replicate { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::Numerical(_) | Error::NotPositiveDefinite { .. } | Error::OracleInfeasible { .. }
        )
    }
}
