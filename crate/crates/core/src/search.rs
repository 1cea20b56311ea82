//! Two-layer verifiable range search over the ledger.
//!
//! The first layer narrows the chain to candidate blocks through the time
//! index and a participant filter. The second layer walks each candidate's
//! encrypted index with a trapdoor, proves every hit against the signed
//! root and fetches the file from the cloud, falling back to the on-chain
//! evidence when the cloud cannot produce it.

use std::collections::{BTreeMap, BTreeSet};

use crate::aspe::{decrypt_point, enc_rects_inter, make_trapdoor, AspeKey, Trapdoor};
use crate::crypto::{hash, hash_concat, sym_decrypt, Digest, NodeId, Signature, SymKey};
use crate::error::{Error, Result};
use crate::geometry::{anchors_for_rect, HyperRect, Point};
use crate::imt::{leaf_hash, verify, Imt, MerkleProof};
use crate::ledger::{
    log_collection_digest, receipt_message, validate_block, Block, Chain, TimeRange,
    ValidationContext,
};
use crate::log::CommLog;
use crate::sim::{CloudResponse, CloudStore};

/// Anchor offset used when a query does not choose one.
pub const DEFAULT_DELTA: f64 = 0.5;

/// Outward widening of every query face before encryption. A point lying
/// exactly on a face has a zero distance gap, whose encrypted sign is
/// rounding noise; categorical attributes put points on faces routinely.
pub const BOUNDARY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub time_range: TimeRange,
    /// Restrict to communications involving one of these devices.
    pub participants: Option<BTreeSet<NodeId>>,
    /// Normalized attribute rectangle.
    pub rect: HyperRect,
}

impl Query {
    fn wants(&self, a: NodeId, b: NodeId) -> bool {
        self.participants.as_ref().is_none_or(|p| p.contains(&a) || p.contains(&b))
    }
}

/// The querier's copies of device secrets.
#[derive(Debug, Clone)]
pub struct DeviceSecret {
    pub aspe: AspeKey,
    pub sym: SymKey,
}

#[derive(Debug, Clone, Default)]
pub struct QuerierKeys {
    devices: BTreeMap<NodeId, DeviceSecret>,
}

impl QuerierKeys {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: NodeId, secret: DeviceSecret) {
        self.devices.insert(id, secret);
    }

    pub fn get(&self, id: &NodeId) -> Option<&DeviceSecret> {
        self.devices.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &DeviceSecret)> {
        self.devices.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryOptions {
    pub delta: f64,
    /// Seed for trapdoor blinding.
    pub seed: u64,
    /// Run full block validation on every located block. Callers holding a
    /// snapshot already checked with [`Chain::verify_all`] may turn this off;
    /// root signatures and proofs are checked either way.
    pub revalidate: bool,
}

impl Default for QueryOptions {
    fn default() -> Self {
        Self { delta: DEFAULT_DELTA, seed: 0, revalidate: true }
    }
}

/// Candidate blocks of the first layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidates {
    pub blocks: Vec<usize>,
    pub index_nodes_visited: usize,
}

fn block_involves(b: &Block, who: &BTreeSet<NodeId>) -> bool {
    who.contains(&b.body.device_id) || b.body.logs.iter().any(|l| who.contains(&l.peer_sig.signer))
}

/// Blocks whose time range meets the query window and, when participants
/// are given, that carry a signature by one of them.
pub fn locate_blocks(chain: &Chain, q: &Query) -> Candidates {
    let located = chain.time_index().locate(&q.time_range);
    let blocks = located
        .blocks
        .into_iter()
        .filter(|&i| match (&q.participants, chain.block(i)) {
            (Some(who), Some(b)) => block_involves(b, who),
            (None, Some(_)) => true,
            (_, None) => false,
        })
        .collect();
    Candidates { blocks, index_nodes_visited: located.nodes_visited }
}

/// Leaves matched in one block's index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockMatches {
    /// Arena positions of matching leaves, in pre-order.
    pub leaves: Vec<usize>,
    pub nodes_visited: usize,
}

/// Depth-first walk that prunes every subtree whose encrypted rectangle
/// misses the query and keeps the leaves whose (degenerate) rectangle meets it.
pub fn search_block(tr: &Trapdoor, imt: &Imt) -> Result<BlockMatches> {
    let t = imt.tree();
    if let Some(d) = imt.dim() {
        if d != tr.dim() {
            return Err(Error::DimensionMismatch { expected: tr.dim(), found: d });
        }
    }
    let mut out = BlockMatches { leaves: Vec::new(), nodes_visited: 0 };
    let mut stack: Vec<usize> = t.root().into_iter().collect();
    while let Some(i) = stack.pop() {
        out.nodes_visited += 1;
        let n = t.node(i);
        if !enc_rects_inter(tr, &n.rect)? {
            continue;
        }
        match n.children() {
            Some((l, r)) => {
                stack.push(r);
                stack.push(l);
            }
            None => out.leaves.push(i),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossReason {
    NotFound,
    DecryptionFailed,
    DigestMismatch,
}

/// On-chain proof of what the cloud failed to return: the signatures of all
/// three parties, each checked, plus what the index itself reveals.
#[derive(Debug, Clone, PartialEq)]
pub struct Evidence {
    pub reason: LossReason,
    /// `h(F)` recovered from the log.
    pub file_digest: Digest,
    pub cloud_receipt: Signature,
    pub log_sig: Signature,
    pub peer_sig: Signature,
    /// The device's mirror receipt kept by the cloud, when the cloud still
    /// reports it.
    pub mirror_receipt: Option<Signature>,
    /// Attribute point decrypted from the leaf.
    pub point: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FileStatus {
    Recovered(Vec<u8>),
    CloudLost(Box<Evidence>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub block: usize,
    pub leaf_id: u128,
    pub owner: NodeId,
    pub log: CommLog,
    pub proof: MerkleProof,
    pub status: FileStatus,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryStats {
    pub blocks_located: usize,
    pub blocks_skipped: usize,
    pub index_nodes_visited: usize,
    pub tree_nodes_visited: usize,
    pub proof_bytes: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryResult {
    pub hits: Vec<Hit>,
    pub stats: QueryStats,
}

fn tampered(block: usize, reason: impl Into<String>) -> Error {
    Error::Tampered { block, reason: reason.into() }
}

/// Prove, fetch and decrypt each `(block, leaf)` match, leaves given as arena
/// positions. Proof or signature failures are hard errors; cloud failures
/// become [`FileStatus::CloudLost`].
pub fn verify_and_fetch(
    matches: &[(usize, usize)],
    chain: &Chain,
    cloud: &CloudStore,
    keys: &QuerierKeys,
    ctx: &ValidationContext<'_>,
) -> Result<Vec<Hit>> {
    let mut hits = Vec::with_capacity(matches.len());
    let mut i = 0;
    while i < matches.len() {
        let bi = matches[i].0;
        let run = matches[i..].iter().take_while(|m| m.0 == bi).count();
        let block = chain.block(bi).ok_or_else(|| tampered(bi, "no such block"))?;
        let root = signed_root(bi, block, ctx)?;
        let leaves: Vec<usize> = matches[i..i + run].iter().map(|m| m.1).collect();
        let proofs = block.body.imt.prove_leaves(&leaves).map_err(|e| tampered(bi, e.to_string()))?;
        for (leaf, proof) in leaves.into_iter().zip(proofs) {
            hits.push(fetch_one(bi, block, &root, leaf, proof, cloud, keys, ctx)?);
        }
        i += run;
    }
    Ok(hits)
}

fn signed_root(bi: usize, block: &Block, ctx: &ValidationContext<'_>) -> Result<Digest> {
    let root = block.body.imt.root_hash().ok_or_else(|| tampered(bi, "empty index"))?;
    let owner = block.body.device_id;
    let device_key = ctx.keys.get(&owner).ok_or_else(|| tampered(bi, "unknown publisher"))?;
    if block.header.imt_root_sig.signer != owner
        || !device_key.verify(&root.0, &block.header.imt_root_sig)
    {
        return Err(tampered(bi, "index root signature"));
    }
    Ok(root)
}

#[allow(clippy::too_many_arguments)]
fn fetch_one(
    bi: usize,
    block: &Block,
    root: &Digest,
    leaf: usize,
    proof: MerkleProof,
    cloud: &CloudStore,
    keys: &QuerierKeys,
    ctx: &ValidationContext<'_>,
) -> Result<Hit> {
    let body = &block.body;
    let owner = body.device_id;
    let secret = keys
        .get(&owner)
        .ok_or_else(|| Error::InvalidArgument(format!("no keys for {owner}")))?;
    let imt = &body.imt;
    let node = imt.tree().node(leaf);
    let payload = node.payload().ok_or_else(|| tampered(bi, "match is not a leaf"))?;
    let log = usize::try_from(payload.log_ref)
        .ok()
        .and_then(|k| body.logs.get(k))
        .ok_or_else(|| tampered(bi, "leaf points past the log list"))?;

    if proof.leaf_hash != leaf_hash(&node.rect, log) || !verify(root, &proof) {
        return Err(tampered(bi, "merkle proof"));
    }

    let file_digest = sym_decrypt(&secret.sym, &log.enc_file_hash)
        .ok()
        .and_then(|d| <[u8; 32]>::try_from(d).ok())
        .map(Digest)
        .ok_or_else(|| tampered(bi, "log digest does not decrypt"))?;

    let fetched = match cloud.get(&log.cipher_ref) {
        CloudResponse::NotFound => Err(LossReason::NotFound),
        CloudResponse::Found(ct) => match sym_decrypt(&secret.sym, &ct) {
            Err(_) => Err(LossReason::DecryptionFailed),
            Ok(pt) if hash(&pt) != file_digest => Err(LossReason::DigestMismatch),
            Ok(pt) => Ok(pt),
        },
    };
    let status = match fetched {
        Ok(pt) => FileStatus::Recovered(pt),
        Err(reason) => FileStatus::CloudLost(Box::new(evidence(
            bi, block, log, secret, cloud, ctx, reason, file_digest, &node.rect,
        )?)),
    };
    Ok(Hit { block: bi, leaf_id: node.id, owner, log: log.clone(), proof, status })
}

#[allow(clippy::too_many_arguments)]
fn evidence(
    bi: usize,
    block: &Block,
    log: &CommLog,
    secret: &DeviceSecret,
    cloud: &CloudStore,
    ctx: &ValidationContext<'_>,
    reason: LossReason,
    file_digest: Digest,
    rect: &crate::aspe::EncRect,
) -> Result<Evidence> {
    let body = &block.body;
    let refs: Vec<Digest> = body.cipher_refs().copied().collect();
    if body.cloud_receipt.signer != ctx.cloud
        || !ctx.keys.verify(&receipt_message(&refs, body.device_id, body.upload_ts), &body.cloud_receipt)
    {
        return Err(tampered(bi, "cloud receipt"));
    }
    let collection = log_collection_digest(&body.logs, &body.cloud_receipt);
    if body.log_sig.signer != body.device_id || !ctx.keys.verify(&collection.0, &body.log_sig) {
        return Err(tampered(bi, "device log signature"));
    }
    if !ctx.keys.verify(&CommLog::peer_message(&log.enc_file_hash, log.ts), &log.peer_sig) {
        return Err(tampered(bi, "peer signature"));
    }
    let mirror = receipt_message(&refs, NodeId::CLOUD, body.upload_ts);
    let mirror_receipt = cloud
        .receipts()
        .iter()
        .find(|r| r.device == body.device_id && r.ts == body.upload_ts && r.refs == refs)
        .map(|r| r.sig_d)
        .filter(|s| s.signer == body.device_id && ctx.keys.verify(&mirror, s));
    Ok(Evidence {
        reason,
        file_digest,
        cloud_receipt: body.cloud_receipt,
        log_sig: body.log_sig,
        peer_sig: log.peer_sig,
        mirror_receipt,
        point: decrypt_point(&secret.aspe, &rect.lo)?,
    })
}

fn trapdoor_seed(seed: u64, device: NodeId) -> u64 {
    let d = hash_concat([&b"trapdoor"[..], &seed.to_be_bytes(), &device.0]);
    u64::from_be_bytes(d.0[..8].try_into().unwrap())
}

/// Full pipeline: anchors, one trapdoor per device key, candidate blocks,
/// block validation, encrypted search, per-hit filtering and verification.
/// Hits come back ordered by (block, leaf id).
pub fn end_to_end_query(
    q: &Query,
    chain: &Chain,
    cloud: &CloudStore,
    keys: &QuerierKeys,
    ctx: &ValidationContext<'_>,
    opts: &QueryOptions,
) -> Result<QueryResult> {
    let anchors = anchors_for_rect(&q.rect.inflate(BOUNDARY_SLACK), opts.delta)?;
    let candidates = locate_blocks(chain, q);
    let mut stats = QueryStats {
        blocks_located: candidates.blocks.len(),
        index_nodes_visited: candidates.index_nodes_visited,
        ..QueryStats::default()
    };
    let mut trapdoors: BTreeMap<NodeId, Trapdoor> = BTreeMap::new();
    let mut matches = Vec::new();
    for &bi in &candidates.blocks {
        let block = chain.block(bi).expect("located block exists");
        if opts.revalidate {
            let prev = chain.block(bi - 1).expect("located block has a parent");
            validate_block(block, prev, ctx).map_err(|r| tampered(bi, r.to_string()))?;
        }
        let owner = block.body.device_id;
        let Some(secret) = keys.get(&owner) else {
            stats.blocks_skipped += 1;
            continue;
        };
        let tr = match trapdoors.entry(owner) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(make_trapdoor(&secret.aspe, &anchors, trapdoor_seed(opts.seed, owner))?)
            }
        };
        let found = search_block(tr, &block.body.imt)?;
        stats.tree_nodes_visited += found.nodes_visited;
        for leaf in found.leaves {
            let p = block.body.imt.tree().node(leaf).payload().expect("leaf");
            let Some(log) = usize::try_from(p.log_ref).ok().and_then(|k| block.body.logs.get(k)) else {
                return Err(tampered(bi, "leaf points past the log list"));
            };
            if q.time_range.contains(log.ts) && q.wants(owner, log.peer_sig.signer) {
                matches.push((bi, leaf));
            }
        }
    }
    let mut hits = verify_and_fetch(&matches, chain, cloud, keys, ctx)?;
    hits.sort_by_key(|h| (h.block, h.leaf_id));
    stats.proof_bytes = hits.iter().map(|h| h.proof.to_bytes().len()).sum();
    Ok(QueryResult { hits, stats })
}
