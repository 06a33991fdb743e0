use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside the domain of the formula it feeds.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("fixed-point solver failed: {0}")]
    Convergence(String),

    /// Queue-aware throughput whose denominator collapsed to zero.
    #[error("degenerate throughput denominator")]
    DegenerateDenominator,

    #[error("solver failed at retry limit m = {m}: {source}")]
    RetryLimit {
        m: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("simulation and model configurations differ: {0}")]
    ConfigMismatch(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unknown key `{key}` in section [{section}]")]
    UnknownKey { section: String, key: String },

    #[error("unit violation: {0}")]
    UnitViolation(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for errors caused by the user's input rather than numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::UnknownKey { .. } | Error::UnitViolation(_) | Error::Io(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
