use thiserror::Error;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller violated a precondition (dimension mismatch, bad index, out of
    /// range parameter, inconsistent fidelity data).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Input data is structurally valid but unusable (all-zero snapshots,
    /// too few snapshots, empty candidate set).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A factorization or rank-one update lost positive definiteness.
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    /// A text input could not be parsed; `line` is 1-based.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// A binary or JSON artifact has the wrong shape, magic, version or
    /// fingerprint.
    #[error("bad data: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateInput(msg.into())
    }

    pub(crate) fn breakdown(msg: impl Into<String>) -> Self {
        Error::NumericalBreakdown(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
