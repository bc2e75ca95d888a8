use thiserror::Error;

/// Errors raised across the pricing engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ill-conditioned collocation system (condition estimate {condition:.3e})")]
    Conditioning { condition: f64 },

    #[error("degenerate grid on axis {axis}: {detail}")]
    GridDegenerate { axis: &'static str, detail: String },

    #[error("model configuration: {0}")]
    ModelConfig(String),

    #[error("assembly failed: {0}")]
    Assembly(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("point outside the truncated domain on axis {axis}: {value} not in [{lower}, {upper}]")]
    OutOfDomain {
        axis: &'static str,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("time integration unstable at tau={tau:.6}: norm grew by {growth:.3e} (check the lambda_max diagnostic)")]
    Unstable { tau: f64, growth: f64 },

    #[error("Krylov approximation not converged: error estimate {estimate:.3e} above tolerance {tol:.3e}")]
    KrylovNotConverged { estimate: f64, tol: f64 },

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
