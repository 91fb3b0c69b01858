use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The exponent function is not defined at the requested point.
    #[error("domain error: {0}")]
    Domain(String),

    /// The request hits a distributional limit (e.g. the delta density at `c*t = 0`).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("quadrature did not converge: value {value:e}, error estimate {error:e} after {intervals} subintervals")]
    Quadrature { value: f64, error: f64, intervals: usize },

    #[error("quadrature failed at grid node {node}: {source}")]
    QuadratureNode {
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("floating overflow in {context}; try a lower order")]
    Overflow { context: String },

    #[error("non-finite result in {0}")]
    NonFinite(String),

    /// An extrapolation or iterative scheme did not reach its tolerance.
    #[error("no convergence: best estimate {best:e}, error estimate {error:e}, sequence {sequence:?}")]
    NonConvergence { best: f64, error: f64, sequence: Vec<f64> },

    #[error("grid: {0}")]
    Grid(String),

    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
