use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its documented constraints.
    #[error("invalid configuration: `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// A function argument is outside the domain of the operation.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A brute-force routine refused to run because the problem is too large.
    #[error("{what} has size {size}, exceeding the limit of {limit}")]
    TooLarge {
        what: &'static str,
        size: u128,
        limit: u128,
    },

    /// A closed-form bound is undefined for the supplied parameters.
    #[error("degenerate bound: {0}")]
    Degenerate(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
