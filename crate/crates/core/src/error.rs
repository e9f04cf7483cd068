use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates an operation's precondition.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// The microstructure cannot be handled by the requested cell problem.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Interface-matching denominator or matrix is (numerically) singular.
    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    /// The inclusion problem is driven at (or within tolerance of) a Dirichlet eigenvalue.
    #[error("resonance singularity: {0}")]
    Resonance(String),

    #[error("solver error: {0}")]
    Solver(String),

    /// A returned solution failed its residual check.
    #[error("accuracy error: relative residual {residual:.3e} exceeds {tolerance:.1e}")]
    Accuracy { residual: f64, tolerance: f64 },

    #[error("resource error: {0}")]
    Resource(String),

    /// Two pipeline stages were computed with incompatible parameters.
    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
