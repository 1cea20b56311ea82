use std::fmt;

/// A command failure, classified by the exit code it maps to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Failure {
    /// Bad flags, unreadable inputs, unknown names.
    Usage(String),
    /// Well-formed input that does not pass validation.
    Validation(String),
    /// The chain or an index failed an integrity check.
    Tamper(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Tamper(_) => 3,
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Failure::Usage(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Validation(m) => write!(f, "invalid input: {m}"),
            Failure::Tamper(m) => write!(f, "tamper detected: {m}"),
        }
    }
}

impl std::error::Error for Failure {}

impl From<iotledger::Error> for Failure {
    fn from(e: iotledger::Error) -> Self {
        match e {
            iotledger::Error::Tampered { .. } => Failure::Tamper(e.to_string()),
            other => Failure::Validation(other.to_string()),
        }
    }
}
