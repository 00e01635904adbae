use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("edge list is empty")]
    EmptyInput,
    #[error("node count overflows the addressable range")]
    SizeOverflow,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("graph is not a rooted tree")]
    NotRootedTree,
    #[error("instance exceeds the configured cap ({what} = {actual} > {cap})")]
    CapExceeded {
        what: &'static str,
        actual: usize,
        cap: usize,
    },
    #[error("profile too shallow: no cardinality above {start}")]
    ProfileTooShallow { start: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
