use thiserror::Error;

/// Errors raised by the bandit library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation (unknown action,
    /// reward outside `[0, 1]`, mismatched lengths, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A constructor parameter produced an invalid object.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A worst-case environment parameter tuple broke one of its defining conditions.
    #[error("condition ({condition}) violated: {detail}")]
    Condition {
        condition: &'static str,
        detail: String,
    },

    /// Run or experiment configuration is inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// The graph contains a cycle through the named edge.
    #[error("graph is cyclic: edge {from} -> {to} closes a cycle")]
    Cycle { from: String, to: String },

    /// Malformed graph structure or text.
    #[error("graph error: {0}")]
    Graph(String),

    /// The requested feature was compiled out.
    #[error("not available: {0}")]
    NotAvailable(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
