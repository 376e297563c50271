use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("need at least 2 TOAs, got {0}")]
    TooFewToas(usize),
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("non-finite TOA at position {0}")]
    NonFinite(usize),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error("probability {0} outside the open interval (0, 1)")]
    InvalidProbability(f64),
    #[error("degrees of freedom must be positive")]
    InvalidDegreesOfFreedom,
    #[error("degenerate fit: need at least 2 points with distinct indices")]
    DegenerateFit,
    #[error("TOA {new} arrives before the last accepted TOA {last}")]
    OutOfOrder { new: f64, last: f64 },
    #[error("enumeration refused: {0}")]
    GuardRail(String),
    #[error("no feasible assignment")]
    Infeasible,
}
