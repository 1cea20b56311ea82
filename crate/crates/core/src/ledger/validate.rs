use std::fmt;

use crate::crypto::{Digest, KeyRegistry, NodeId};
use crate::kdtree::IdGen;
use crate::log::CommLog;

use super::block::{index_id_seed, log_collection_digest, receipt_message, Block};
use super::pow::{lower_nonce_exists, pow_ok};

/// What a validator needs besides the blocks themselves.
#[derive(Debug, Clone, Copy)]
pub struct ValidationContext<'a> {
    pub keys: &'a KeyRegistry,
    pub cloud: NodeId,
    /// Difficulty every non-genesis block must declare.
    pub difficulty: u8,
}

/// First failed check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rejection {
    Genesis,
    PrevHash,
    Difficulty { expected: u8, found: u8 },
    Timestamp { prev: u64, found: u64 },
    Pow,
    NonceNotMinimal,
    EmptyBody,
    HeaderBodyMismatch,
    UnknownSigner(NodeId),
    CloudReceipt,
    LogSignature,
    PeerSignature { log: usize },
    LogAfterUpload { log: usize },
    Index(String),
    ImtRootSignature,
    Decode(String),
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::Genesis => f.write_str("genesis block differs from the canonical one"),
            Rejection::PrevHash => f.write_str("prev-hash link broken"),
            Rejection::Difficulty { expected, found } => {
                write!(f, "difficulty {found}, expected {expected}")
            }
            Rejection::Timestamp { prev, found } => {
                write!(f, "timestamp {found} precedes parent timestamp {prev}")
            }
            Rejection::Pow => f.write_str("pow target not met"),
            Rejection::NonceNotMinimal => f.write_str("pow nonce is not the lowest solution"),
            Rejection::EmptyBody => f.write_str("block carries no logs"),
            Rejection::HeaderBodyMismatch => f.write_str("header does not match body"),
            Rejection::UnknownSigner(id) => write!(f, "unknown signer {id}"),
            Rejection::CloudReceipt => f.write_str("cloud receipt signature invalid"),
            Rejection::LogSignature => f.write_str("device log signature invalid"),
            Rejection::PeerSignature { log } => write!(f, "peer signature of log {log} invalid"),
            Rejection::LogAfterUpload { log } => write!(f, "log {log} is newer than the upload"),
            Rejection::Index(why) => write!(f, "index: {why}"),
            Rejection::ImtRootSignature => f.write_str("imt-root signature mismatch"),
            Rejection::Decode(why) => write!(f, "undecodable block: {why}"),
        }
    }
}

impl std::error::Error for Rejection {}

/// Check `b` against its parent.
pub fn validate_block(b: &Block, prev: &Block, ctx: &ValidationContext<'_>) -> Result<(), Rejection> {
    validate_linked(b, &prev.hash(), prev.header.timestamp, ctx)
}

/// Check `b` given only its parent's header hash and timestamp, so a holder
/// of a chain suffix can validate without older blocks.
pub fn validate_linked(
    b: &Block,
    prev_hash: &Digest,
    prev_ts: u64,
    ctx: &ValidationContext<'_>,
) -> Result<(), Rejection> {
    let h = &b.header;
    if h.prev_hash != *prev_hash {
        return Err(Rejection::PrevHash);
    }
    if h.difficulty != ctx.difficulty {
        return Err(Rejection::Difficulty { expected: ctx.difficulty, found: h.difficulty });
    }
    if h.timestamp < prev_ts {
        return Err(Rejection::Timestamp { prev: prev_ts, found: h.timestamp });
    }
    if !pow_ok(h) {
        return Err(Rejection::Pow);
    }
    if lower_nonce_exists(h) {
        return Err(Rejection::NonceNotMinimal);
    }
    validate_body(b, ctx)
}

fn validate_body(b: &Block, ctx: &ValidationContext<'_>) -> Result<(), Rejection> {
    let (h, body) = (&b.header, &b.body);
    if body.logs.is_empty() {
        return Err(Rejection::EmptyBody);
    }
    if h.timestamp != body.upload_ts || h.imt_root_sig.signer != body.device_id {
        return Err(Rejection::HeaderBodyMismatch);
    }
    let device_key = ctx.keys.get(&body.device_id).ok_or(Rejection::UnknownSigner(body.device_id))?;

    let receipt = &body.cloud_receipt;
    if receipt.signer != ctx.cloud {
        return Err(Rejection::UnknownSigner(receipt.signer));
    }
    let msg = receipt_message(body.cipher_refs(), body.device_id, body.upload_ts);
    if !ctx.keys.verify(&msg, receipt) {
        return Err(Rejection::CloudReceipt);
    }

    let digest = log_collection_digest(&body.logs, receipt);
    if body.log_sig.signer != body.device_id || !device_key.verify(&digest.0, &body.log_sig) {
        return Err(Rejection::LogSignature);
    }

    for (i, log) in body.logs.iter().enumerate() {
        check_peer(i, log, body.device_id, ctx)?;
        if log.ts > body.upload_ts {
            return Err(Rejection::LogAfterUpload { log: i });
        }
    }

    check_index(b)?;

    let root = body.imt.root_hash().ok_or_else(|| Rejection::Index("empty index".into()))?;
    if !device_key.verify(&root.0, &h.imt_root_sig) {
        return Err(Rejection::ImtRootSignature);
    }
    Ok(())
}

fn check_peer(i: usize, log: &CommLog, owner: NodeId, ctx: &ValidationContext<'_>) -> Result<(), Rejection> {
    let peer = log.peer_sig.signer;
    if peer == owner || peer == ctx.cloud {
        return Err(Rejection::PeerSignature { log: i });
    }
    if ctx.keys.get(&peer).is_none() {
        return Err(Rejection::UnknownSigner(peer));
    }
    if !ctx.keys.verify(&CommLog::peer_message(&log.enc_file_hash, log.ts), &log.peer_sig) {
        return Err(Rejection::PeerSignature { log: i });
    }
    Ok(())
}

/// Structural checks on the index: it must have one leaf per log, reference
/// each log exactly once with a matching content address, carry the node ids
/// derived from the publisher and upload time, and hash consistently.
fn check_index(b: &Block) -> Result<(), Rejection> {
    let body = &b.body;
    let t = body.imt.tree();
    let bad = |why: String| Rejection::Index(why);
    t.check_sizes().map_err(|e| bad(e.to_string()))?;
    if t.leaf_count() != body.logs.len() {
        return Err(bad(format!("{} leaves for {} logs", t.leaf_count(), body.logs.len())));
    }
    let mut seen = vec![false; body.logs.len()];
    for i in t.leaves() {
        let p = t.node(i).payload().expect("leaf");
        let k = usize::try_from(p.log_ref)
            .ok()
            .filter(|&k| k < seen.len())
            .ok_or_else(|| bad(format!("leaf references missing log {}", p.log_ref)))?;
        if std::mem::replace(&mut seen[k], true) {
            return Err(bad(format!("log {k} indexed twice")));
        }
        if body.logs[k].cipher_ref != p.cipher_ref {
            return Err(bad(format!("leaf for log {k} has a foreign content address")));
        }
    }
    let mut ids = IdGen::new(index_id_seed(body.device_id, body.upload_ts));
    if let Some(i) = t.nodes().iter().position(|n| n.id != ids.next_id()) {
        return Err(bad(format!("node {i} has an unexpected id")));
    }
    body.imt.check_hashes(&body.logs).map_err(|e| bad(e.to_string()))
}

/// Validate `blocks` as a contiguous run following a block with header hash
/// `prev_hash` and timestamp `prev_ts`. Returns the offending position.
pub fn validate_suffix(
    blocks: &[Block],
    prev_hash: Digest,
    prev_ts: u64,
    ctx: &ValidationContext<'_>,
) -> Result<(), (usize, Rejection)> {
    let (mut ph, mut pt) = (prev_hash, prev_ts);
    for (i, b) in blocks.iter().enumerate() {
        validate_linked(b, &ph, pt, ctx).map_err(|r| (i, r))?;
        ph = b.hash();
        pt = b.header.timestamp;
    }
    Ok(())
}
