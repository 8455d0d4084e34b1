use thiserror::Error;

/// Errors produced by the rankspec library.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates an operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Strict pass-to-ranks found two equal upper-triangular entries.
    #[error("tied value {value} at entries ({}, {}) and ({}, {})", first.0, first.1, second.0, second.1)]
    Tie {
        value: f64,
        first: (usize, usize),
        second: (usize, usize),
    },

    /// Adaptive quadrature exhausted its subdivision budget.
    #[error("quadrature did not converge: achieved error {achieved:e}, requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    /// A numerical routine (eigensolver, SVD) failed.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The generative model violates a structural requirement (e.g. rank deficiency).
    #[error("model error: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
