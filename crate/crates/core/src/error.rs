use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid pmf: {0}")]
    InvalidPmf(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("channel puts mass {mass:e} on y={y} > x={x}")]
    SupportViolation { x: usize, y: usize, mass: f64 },

    #[error("invalid grid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("value {value} outside domain [0, 1] for {name}")]
    Domain { name: &'static str, value: f64 },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("infeasible action: draw {draw} exceeds available energy {available} or peak {peak}")]
    Infeasible { draw: i64, available: u64, peak: u64 },

    #[error("battery accumulator overflow")]
    Overflow,

    #[error("observed symbol has zero probability under the chain kernel at step {step}")]
    ZeroProbability { step: usize },

    #[error("enumeration budget exceeded: {needed} entries > {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("root finding failed: {0}")]
    RootFinding(String),
}

pub type Result<T> = std::result::Result<T, Error>;
