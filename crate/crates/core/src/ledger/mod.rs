//! The ledger: block layout, proof-of-work, validation, majority approval and
//! the first-layer time index.

mod block;
mod chain;
mod pow;
mod time_index;
mod validate;

pub use block::{
    index_id_seed, log_collection_digest, receipt_message, Block, BlockBody, BlockHeader,
    HEADER_LEN,
};
pub use chain::{approve_and_append, BlockValidator, Chain, FixedVerdict};
pub use pow::{mine, mine_parallel, pow_ok, MiningOutcome, MAX_DIFFICULTY};
pub use time_index::{Located, TimeIndex, TimeRange};
pub use validate::{validate_block, validate_linked, validate_suffix, Rejection, ValidationContext};
