use thiserror::Error;

use crate::market::Bundle;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("allocation is infeasible: buyers {0} and {1} share a good")]
    InfeasibleAllocation(usize, usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("markets are not compatible ({0})")]
    IncompatibleMarkets(String),

    #[error("index set is empty")]
    EmptyIndexSet,

    #[error("invalid index: buyer {buyer}, bundle {bundle:?}")]
    InvalidIndex { buyer: usize, bundle: Bundle },

    #[error("enumeration over {goods} goods exceeds the cap of {cap}")]
    EnumerationTooLarge { goods: usize, cap: usize },

    #[error("{goods} goods exceeds the cap of {cap}")]
    TooManyGoods { goods: usize, cap: usize },

    #[error("preferred-good-distinct needs buyers <= goods (got {buyers} buyers, {goods} goods)")]
    InvalidDistinct { buyers: usize, goods: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("schema violation: {0}")]
    SchemaViolation(String),

    #[error("allocation is not welfare-maximizing: welfare {found}, optimum {optimal}")]
    NotWelfareMaximizing { found: f64, optimal: f64 },

    #[error("LP solver failure: {0}")]
    LpNumericalFailure(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 1 config/input error, 2 cap violation, 3 solver failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::EnumerationTooLarge { .. } | Error::TooManyGoods { .. } => 2,
            Error::LpNumericalFailure(_) | Error::NotWelfareMaximizing { .. } => 3,
            _ => 1,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
