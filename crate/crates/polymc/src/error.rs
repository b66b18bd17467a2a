use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("graph validation error: {0}")]
    Validation(String),

    #[error("graph has no bipartition")]
    MissingBipartition,

    #[error("enumeration budget exceeded: more than {0} sets")]
    BudgetExceeded(u64),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("state space too large: {found} states exceeds limit {limit}")]
    StateSpaceTooLarge { found: usize, limit: usize },

    #[error("generator gave up after {0} attempts; retry with a different seed")]
    GeneratorRejection(u32),

    #[error("step budget {budget:.3e} exceeds ceiling {ceiling:.3e}; pass an explicit override")]
    StepBudgetOverflow { budget: f64, ceiling: f64 },

    #[error("sample mean degenerated to zero")]
    DegenerateMean,

    #[error("epsilon {epsilon} below brute-force fallback range for n = {n}")]
    EpsilonOutOfRange { epsilon: f64, n: usize },

    #[error("distributions have mismatched supports")]
    MismatchedSupports,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
