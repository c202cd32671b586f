use std::path::PathBuf;

/// Errors produced anywhere in the solver pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unsupported wavelet order {0} (supported: 1..=10)")]
    UnsupportedOrder(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("basis of order {order} cannot represent derivative of order {derivative}")]
    Regularity { order: usize, derivative: usize },

    #[error("coefficient function has a pole on the domain near {location}")]
    SingularCoefficient { location: String },

    #[error("inconsistent closure: {0}")]
    InconsistentClosure(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("solver did not converge: {reason}")]
    NoConvergence {
        reason: String,
        condition_estimate: Option<f64>,
        residual_history: Vec<f64>,
    },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("internal numerical error: {0}")]
    Internal(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category, used in error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnsupportedOrder(_) => "unsupported_order",
            Error::Shape(_) => "shape",
            Error::Capacity(_) => "capacity",
            Error::Regularity { .. } => "regularity",
            Error::SingularCoefficient { .. } => "singular_coefficient",
            Error::InconsistentClosure(_) => "inconsistent_closure",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Unsupported(_) => "unsupported",
            Error::Internal(_) => "internal",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
