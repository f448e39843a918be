use alloc::string::String;

/// Errors raised by the core constructions.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoreError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("search exhausted: {0}")]
    SearchExhausted(String),
    #[error("degenerate parameter table at level {level}: {what}")]
    Degenerate { level: usize, what: &'static str },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("geometry infeasible: {0}")]
    Geometry(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = core::result::Result<T, CoreError>;
