use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid point: {0}")]
    InvalidPoint(&'static str),

    #[error("invalid rectangle: lo > hi in dimension {0}")]
    InvertedRect(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown value {value:?} for categorical attribute {attribute:?}")]
    UnknownCategory { attribute: String, value: String },

    #[error("leaf references log #{0} which does not exist")]
    DanglingLogRef(u64),

    #[error("no leaf with id {0:032x}")]
    UnknownLeaf(u128),

    #[error("difficulty {0} exceeds the configured cap")]
    DifficultyTooHigh(u8),

    #[error("timestamp {got} precedes last inserted timestamp {last}")]
    OutOfOrder { last: u64, got: u64 },

    #[error("decode error: {0}")]
    Decode(String),

    #[error("cryptographic failure: {0}")]
    Crypto(&'static str),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("nothing to flush")]
    EmptyBuffer,

    #[error("cloud refused to countersign the upload")]
    ReceiptDenied,

    #[error("block {block} failed verification: {reason}")]
    Tampered { block: usize, reason: String },
}

impl Error {
    pub(crate) fn decode(msg: impl Into<String>) -> Self {
        Error::Decode(msg.into())
    }
}
