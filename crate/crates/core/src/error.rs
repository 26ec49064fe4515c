use thiserror::Error;

#[derive(Debug, Error)]
pub enum HkError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("propagation failed at t = {t}: {reason}")]
    Propagation { t: f64, reason: String },

    #[error("prefactor branch ambiguity: determinant argument moved by {jump:.3} rad in one step")]
    BranchAmbiguity { jump: f64 },

    #[error("sum of importance weights is zero or not finite")]
    DegenerateWeights,

    #[error("sampler failure: {0}")]
    Sampler(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("trajectory blow-up in {count} sample(s); first offending sample indices {samples:?}")]
    BlowUp { count: usize, samples: Vec<usize> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HkError>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(HkError::DimensionMismatch { expected, got })
    }
}

pub(crate) fn config_err(key: impl Into<String>, message: impl Into<String>) -> HkError {
    HkError::Config {
        key: key.into(),
        message: message.into(),
    }
}
