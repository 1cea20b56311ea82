//! Blockchain-backed storage and encrypted range search for IoT communication logs.
//!
//! Devices digitize their communication files into points in an `l`-dimensional
//! attribute space, push the file ciphertexts to an (untrusted) cloud store and
//! publish signed log digests together with an encrypted, hash-authenticated
//! kd-tree index inside proof-of-work blocks. A querier holding the device keys
//! runs range queries over the ledger without the index revealing plaintext
//! regions, and can verify every returned record against the chain.
//!
//! Layout:
//!
//! * [`geometry`]: plaintext points, rectangles and the anchor-point predicates.
//! * [`aspe`]: scalar-product-preserving encryption of points and query trapdoors.
//! * [`kdtree`]: digitization and median-split kd-tree construction and encryption.
//! * [`imt`]: the hash-authenticated index tree and its membership proofs.
//! * [`crypto`]: digests, signatures and the authenticated file cipher.
//! * [`ledger`]: blocks, mining, validation, majority approval, the time index.
//! * [`sim`]: the device network simulation and the fault-injectable cloud.
//! * [`search`]: two-layer verifiable query evaluation.

pub mod aspe;
pub mod crypto;
pub mod error;
pub mod geometry;
pub mod imt;
pub mod kdtree;
pub mod ledger;
pub mod log;
pub mod search;
pub mod sim;
pub mod wire;

pub use error::{Error, Result};
pub use geometry::{AnchorQuery, HyperRect, Point};
pub use crypto::{Digest, NodeId};
