use thiserror::Error;

/// Failure classes. Each maps to a process exit code in the CLI.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed input, bad parameters or unreadable files.
    #[error("input error: {0}")]
    Input(String),
    /// The numerics failed: overflow, singular matrices, non-convergence.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// The data violate the assumptions of the requested case.
    #[error("case assumption violated: {0}")]
    CaseViolation(String),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn case(msg: impl Into<String>) -> Self {
        Error::CaseViolation(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) => 2,
            Error::Numerical(_) => 3,
            Error::CaseViolation(_) => 4,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Input(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
