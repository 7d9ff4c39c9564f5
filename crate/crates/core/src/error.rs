use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("eigenvalue iteration did not converge after {sweeps} sweeps")]
    NonConvergence { sweeps: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("singular linear system")]
    Singular,

    #[error("integer enumeration exceeded its node budget of {budget}")]
    EnumerationBudgetExceeded { budget: u64 },

    #[error("brute-force box holds {points} points, above the oracle budget of {budget}")]
    OracleBudgetExceeded { points: u128, budget: u128 },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("trace has no cycle or fixed point")]
    NoCycle,

    #[error("no equilibrium found in the finite game")]
    NoEquilibriumFound,

    #[error("equilibrium tolerance not reached (best regret {best_eps:e})")]
    ToleranceNotReached { best_eps: f64 },

    #[error("generator rejected {rejections} candidate instances without success")]
    RejectionBudgetExceeded { rejections: usize },

    #[error("counterexample parameter M must be an even integer >= 2, got {0}")]
    InvalidM(i64),

    #[error("unknown builtin instance `{0}`")]
    UnknownBuiltin(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
