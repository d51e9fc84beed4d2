use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("degenerate correlation |rho| = 1; the conditional variance 1 - rho^2 vanishes")]
    DegenerateCorrelation,

    #[error("infinite degrees of freedom are not supported by {0}")]
    InfiniteDofUnsupported(&'static str),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("quadratic subproblem failed: {0}")]
    Subproblem(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
