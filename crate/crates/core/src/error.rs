use thiserror::Error;

/// Every failure the library reports. The CLI maps these onto exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("argument error: {0}")]
    Argument(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("capacity exceeded: {what} needs {needed}, cap is {cap}")]
    Capacity { what: String, needed: u128, cap: u128 },
    #[error("search budget of {budget} nodes exhausted; best value found so far {best_so_far:e}")]
    Budget { budget: u64, best_so_far: f64 },
    #[error("empty restriction: interval carries no mass")]
    EmptyRestriction,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
