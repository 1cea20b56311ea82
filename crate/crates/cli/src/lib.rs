//! Command implementations behind the `iotledger` binary.

pub mod bench;
mod failure;
pub mod keys;
pub mod query;
pub mod simulate;

pub use failure::Failure;
