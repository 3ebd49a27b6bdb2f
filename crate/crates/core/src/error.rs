use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {what} has length {got}, expected {expected}")]
    Shape {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("grid budget exceeded: {points} points at step {step} (limit {limit})")]
    BudgetExceeded { points: f64, step: f64, limit: f64 },

    #[error("instance is infeasible: {0}")]
    Infeasible(String),

    #[error("oracle supports at most 3 slots, got {0}")]
    HorizonTooLong(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::Shape {
            what,
            got: v.len(),
            expected,
        });
    }
    Ok(())
}
