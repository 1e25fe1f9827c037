use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// `n·P_total > m·N`: the discrete problem would be a least-squares
    /// problem rather than a minimum-norm one.
    #[error(
        "overdetermined shape: n·P_total = {rows} exceeds m·N = {cols}; \
         increase the number of time steps or coarsen the parameter grid"
    )]
    OverdeterminedShape { rows: usize, cols: usize },

    #[error("integration failed at t = {t:e} for parameter {beta:?}: {reason}")]
    IntegrationFailure {
        beta: Vec<f64>,
        t: f64,
        reason: String,
    },

    /// One or more ensemble members could not be simulated. Indices are
    /// parameter-grid indices in ascending order.
    #[error("{} ensemble member(s) failed; first (index {}): {}", failures.len(), failures[0].0, failures[0].1)]
    EnsembleFailure { failures: Vec<(usize, Box<Error>)> },

    #[error("singular value decomposition failed: {0}")]
    Decomposition(String),

    #[error("malformed data file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn mismatch(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    /// True for integration failures, including ensemble failures made of them.
    pub fn is_integration_failure(&self) -> bool {
        match self {
            Error::IntegrationFailure { .. } => true,
            Error::EnsembleFailure { failures } => {
                failures.iter().all(|(_, e)| e.is_integration_failure())
            }
            _ => false,
        }
    }
}
