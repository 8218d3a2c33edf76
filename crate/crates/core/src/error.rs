use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("division by zero")]
    DivisionByZero,
    #[error("hypothesis violation: {0}")]
    HypothesisViolation(String),
    #[error("prime {p} is not covered by the counting formula: {reason}")]
    IneligiblePrime { p: u64, reason: String },
    #[error("relation search incomplete after {0} candidates; enlarge relation_budget")]
    RelationSearchIncomplete(usize),
    #[error("search budget of {0} candidates exceeded")]
    SearchBudgetExceeded(usize),
    #[error("verification failed: {0}")]
    VerificationFailed(String),
    #[error("ideal not coprime: {0}")]
    NonCoprimeIdeal(String),
    #[error("order not closed under multiplication: {0}")]
    ClosureFailure(String),
    #[error("non-integral result {0}")]
    NonIntegerResult(String),
    #[error("moduli are not coprime")]
    IncompatibleModuli,
    #[error("value out of supported range: {0}")]
    Overflow(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
