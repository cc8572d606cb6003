use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::model::Violation;

/// Errors raised by the solvers and simulators.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("time {t} outside the curve domain [0, {horizon}]")]
    Domain { t: f64, horizon: f64 },

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("invalid model: {}", ViolationList(.0))]
    InvalidModel(Vec<Violation>),

    #[error("degenerate parameter: {0}")]
    DegenerateParameter(String),

    #[error("sigma is singular at t = {t}")]
    SingularSigma { t: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("wealth must be positive, got x = {x}")]
    NonPositiveWealth { x: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("simulation budget exceeded: {requested} path-steps requested, budget {budget}")]
    BudgetExceeded { requested: u128, budget: u64 },
}

pub type Result<T> = core::result::Result<T, Error>;

struct ViolationList<'a>(&'a [Violation]);

impl fmt::Display for ViolationList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}
