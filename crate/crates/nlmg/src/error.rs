//! Crate-wide error type.

/// Errors produced by mesh construction, assembly, and the solvers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid coarse mesh size H={0}: 1/H must be an integer >= 2 and H < 1")]
    InvalidMeshSize(f64),

    #[error("unsupported refinement factor beta={0}: only beta=2 is implemented")]
    UnsupportedBeta(u32),

    #[error("mesh levels do not match: {0}")]
    LevelMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric positive definite ({0})")]
    NotSpd(String),

    #[error("linearized operator is not coercive")]
    NonCoercive,

    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence {
        what: String,
        iterations: usize,
        /// Eigenvalue iterates observed before giving up (empty for linear solves).
        lambda_trace: Vec<f64>,
    },

    #[error("cannot normalize the zero vector")]
    ZeroVector,

    #[error("singular system")]
    SingularSystem,

    #[error("augmented space is degenerate: smallest Gram eigenvalue {0:e}")]
    DegenerateSpace(f64),

    #[error("nonlinearity has no multiplicative splitting f = w(x,u)*u")]
    NotSplittable,

    #[error("eigenpair is not b-normalized: u'Mu = {0}")]
    NotNormalized(f64),

    #[error("errors must be positive and finite to compute rates")]
    NonPositiveError,

    #[error("no reference available for error computation")]
    MissingReference,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) | Error::Csv(_) | Error::NonPositiveError => 2,
            _ => 3,
        }
    }
}
