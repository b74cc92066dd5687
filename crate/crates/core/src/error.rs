use thiserror::Error;

/// Per-restart outcome kept when every optimizer restart fails.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartFailure {
    pub restart: usize,
    pub init: Vec<f64>,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("covariance matrix not positive definite after jitter {max_jitter:e}")]
    Conditioning { max_jitter: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("training failed: all {} restarts failed (first: {})", .0.len(), first_reason(.0))]
    Training(Vec<RestartFailure>),

    #[error("model format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn first_reason(failures: &[RestartFailure]) -> &str {
    failures.first().map(|f| f.reason.as_str()).unwrap_or("none")
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}
