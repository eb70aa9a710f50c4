use thiserror::Error;

use crate::field::FieldSpec;

/// Every failure the library can report.
///
/// `Refused`-style outcomes (a necessary condition fails) are carried by
/// [`Error::ConditionViolated`]; backend limits are [`Error::SearchFailed`]
/// and [`Error::CapExceeded`]. The pipeline keeps these apart.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum Error {
    #[error("field mismatch: {0} vs {1}")]
    FieldMismatch(FieldSpec, FieldSpec),
    #[error("zero polynomial")]
    ZeroPolynomial,
    #[error("constant polynomial has no trace")]
    ConstantPolynomial,
    #[error("expected a polynomial of degree {expected}, got degree {found}")]
    WrongDegree { expected: usize, found: usize },
    #[error("polynomial does not split over {0}")]
    NotSplit(FieldSpec),
    #[error("condition violated: {0}")]
    ConditionViolated(String),
    #[error("property violated: {0}")]
    PropertyViolated(String),
    #[error("precondition cannot be verified: {0}")]
    PreconditionUnverifiable(String),
    #[error("budget exceeded: {0}")]
    CapExceeded(String),
    #[error("search failed: {0}")]
    SearchFailed(String),
    #[error("not free on prefix: {0}")]
    NotFreeOnPrefix(String),
    #[error("span gap on prefix: basis vector e_{0} not reached")]
    SpanGapOnPrefix(usize),
    #[error("wrong characteristic: {0}")]
    WrongCharacteristic(String),
    #[error("quadratic annihilator missing: {0}")]
    NotQuadratic(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("division by zero")]
    DivisionByZero,
}

pub type Result<T> = std::result::Result<T, Error>;
