use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid input index {index} (model has {count} inputs)")]
    InvalidInput { index: usize, count: usize },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("enumeration budget exceeded: {required} sequences > budget {budget}")]
    EnumerationBudget { required: u128, budget: u128 },

    #[error("node budget of {budget} exhausted with relative gap {gap:.3e}")]
    NodeBudget { budget: usize, gap: f64 },

    #[error("simulation failed at step {step}: {source}")]
    Simulation { step: usize, source: Box<Error> },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("artifact parse error at line {line}: {message}")]
    Artifact { line: usize, message: String },
}

impl Error {
    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }
}
