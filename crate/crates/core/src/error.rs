use thiserror::Error;

/// Failures shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("arithmetic overflow in 128-bit mode at value {value}")]
    Overflow { value: String },

    #[error("the Collatz map is only defined on positive integers")]
    NonPositive,

    #[error("{0}")]
    Domain(String),

    #[error("{what} at level {level} exceeds the supported maximum level {max}")]
    Capacity { what: &'static str, level: u32, max: u32 },

    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),

    #[error("trajectory starting at {start} exceeded the cap of {cap} steps")]
    StepCapExceeded { start: String, cap: u64 },

    #[error("trajectory starting at {start}: {source}")]
    Trajectory { start: String, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;
