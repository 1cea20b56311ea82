//! `query`: run a range query against a stored chain.
//!
//! Query files are TOML:
//!
//! ```toml
//! time_range = [1700000000, 1700000600]   # optional, inclusive
//! participants = ["d0", "d3"]             # optional
//! rect = [[10.0, 25.0], ["n", "e"]]       # raw units, one pair per attribute
//! ```
//!
//! Categorical bounds take a category name or its index.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use iotledger::kdtree::{AttrKind, AttrValue, Schema};
use iotledger::ledger::{Chain, TimeRange, ValidationContext};
use iotledger::search::{end_to_end_query, FileStatus, Hit, LossReason, Query, QueryOptions, QueryStats};
use iotledger::sim::CloudStore;
use iotledger::{HyperRect, NodeId};
use serde::{Deserialize, Serialize};

use crate::keys::{parse_node_id, KeysFile};
use crate::simulate::CLOUD_FILE;
use crate::Failure;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySpec {
    pub time_range: Option<(u64, u64)>,
    pub participants: Option<Vec<String>>,
    pub rect: Vec<(AttrValue, AttrValue)>,
    pub delta: Option<f64>,
    pub seed: Option<u64>,
}

fn bound(schema: &Schema, j: usize, v: &AttrValue) -> Result<f64, Failure> {
    let a = &schema.attributes[j];
    let raw = match (&a.kind, v) {
        (_, AttrValue::Num(x)) => *x,
        (AttrKind::Categorical { values }, AttrValue::Cat(s)) => values
            .iter()
            .position(|c| c == s)
            .ok_or_else(|| Failure::Validation(format!("rect: unknown category {s:?} for {}", a.name)))?
            as f64,
        (AttrKind::Numeric { .. }, AttrValue::Cat(s)) => {
            return Err(Failure::Validation(format!("rect: {} is numeric, got {s:?}", a.name)))
        }
    };
    Ok(schema.normalize_bound(j, raw))
}

impl QuerySpec {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        toml::from_str(text).map_err(|e| Failure::Validation(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        Self::parse(&text).map_err(|f| match f {
            Failure::Validation(m) => Failure::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Normalize against `schema` into a core query.
    pub fn resolve(&self, schema: &Schema) -> Result<(Query, QueryOptions), Failure> {
        if self.rect.len() != schema.dim() {
            return Err(Failure::Validation(format!(
                "rect: {} bounds for {} attributes",
                self.rect.len(),
                schema.dim()
            )));
        }
        let bounds = self
            .rect
            .iter()
            .enumerate()
            .map(|(j, (lo, hi))| Ok((bound(schema, j, lo)?, bound(schema, j, hi)?)))
            .collect::<Result<Vec<_>, Failure>>()?;
        let rect = HyperRect::from_bounds(&bounds).map_err(|e| Failure::Validation(format!("rect: {e}")))?;
        let time_range = match self.time_range {
            Some((lo, hi)) => TimeRange::new(lo, hi).map_err(|e| Failure::Validation(format!("time_range: {e}")))?,
            None => TimeRange::all(),
        };
        let participants = self
            .participants
            .as_ref()
            .map(|ps| ps.iter().map(|p| parse_node_id(p)).collect::<Result<BTreeSet<NodeId>, _>>())
            .transpose()?;
        let mut opts = QueryOptions::default();
        if let Some(d) = self.delta {
            opts.delta = d;
        }
        if let Some(s) = self.seed {
            opts.seed = s;
        }
        Ok((Query { time_range, participants, rect }, opts))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidenceRecord {
    pub reason: &'static str,
    pub file_digest: String,
    pub cloud_receipt: String,
    pub log_sig: String,
    pub peer_sig: String,
    pub mirror_receipt: Option<String>,
    pub point: Vec<f64>,
}

/// One line of query output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HitRecord {
    pub block: usize,
    pub leaf_id: String,
    pub owner: String,
    pub peer: String,
    pub ts: u64,
    pub cipher_ref: String,
    pub proof_len: usize,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evidence: Option<EvidenceRecord>,
}

impl From<&Hit> for HitRecord {
    fn from(h: &Hit) -> Self {
        let sig = |s: &iotledger::crypto::Signature| hex::encode(s.to_bytes());
        let (status, body, evidence) = match &h.status {
            FileStatus::Recovered(b) => ("recovered", Some(hex::encode(b)), None),
            FileStatus::CloudLost(e) => (
                "cloud_lost",
                None,
                Some(EvidenceRecord {
                    reason: match e.reason {
                        LossReason::NotFound => "not_found",
                        LossReason::DecryptionFailed => "decryption_failed",
                        LossReason::DigestMismatch => "digest_mismatch",
                    },
                    file_digest: e.file_digest.to_hex(),
                    cloud_receipt: sig(&e.cloud_receipt),
                    log_sig: sig(&e.log_sig),
                    peer_sig: sig(&e.peer_sig),
                    mirror_receipt: e.mirror_receipt.as_ref().map(sig),
                    point: e.point.coords().to_vec(),
                }),
            ),
        };
        Self {
            block: h.block,
            leaf_id: format!("{:032x}", h.leaf_id),
            owner: h.owner.to_string(),
            peer: h.log.peer_sig.signer.to_string(),
            ts: h.log.ts,
            cipher_ref: h.log.cipher_ref.to_hex(),
            proof_len: h.proof.len(),
            status,
            body,
            evidence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuerySummary {
    pub hits: usize,
    pub recovered: usize,
    pub cloud_lost: usize,
    pub blocks_located: usize,
    pub blocks_skipped: usize,
    pub index_nodes_visited: usize,
    pub tree_nodes_visited: usize,
    pub proof_bytes: usize,
}

impl QuerySummary {
    fn new(records: &[HitRecord], s: &QueryStats) -> Self {
        let lost = records.iter().filter(|r| r.evidence.is_some()).count();
        Self {
            hits: records.len(),
            recovered: records.len() - lost,
            cloud_lost: lost,
            blocks_located: s.blocks_located,
            blocks_skipped: s.blocks_skipped,
            index_nodes_visited: s.index_nodes_visited,
            tree_nodes_visited: s.tree_nodes_visited,
            proof_bytes: s.proof_bytes,
        }
    }
}

pub struct QueryOutcome {
    pub records: Vec<HitRecord>,
    pub summary: QuerySummary,
}

/// Load and fully verify a chain file. Undecodable or invalid chains are tamper failures.
pub fn load_verified_chain(path: &Path, keys: &KeysFile) -> Result<Chain, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::io(path, e))?;
    let chain = Chain::from_bytes(&bytes).map_err(|e| Failure::Tamper(format!("{}: {e}", path.display())))?;
    let registry = keys.registry()?;
    let ctx = ValidationContext { keys: &registry, cloud: NodeId::CLOUD, difficulty: keys.difficulty };
    chain
        .verify_all(&ctx)
        .map_err(|(i, r)| Failure::Tamper(format!("block {i}: {r}")))?;
    Ok(chain)
}

/// Run `query` against the chain at `chain`. The cloud store defaults to the
/// chain's sibling `cloud.bin`. Records go to `out` as JSON lines when given.
pub fn cmd_query(chain: &Path, query: &Path, keys: &Path, cloud: Option<&Path>, out: Option<&Path>) -> Result<QueryOutcome, Failure> {
    let keys = KeysFile::load(keys)?;
    let spec = QuerySpec::load(query)?;
    let (q, mut opts) = spec.resolve(&keys.schema)?;
    let chain_data = load_verified_chain(chain, &keys)?;
    // verified in full just above
    opts.revalidate = false;

    let cloud_path: PathBuf = match cloud {
        Some(p) => p.to_path_buf(),
        None => chain.with_file_name(CLOUD_FILE),
    };
    let cloud_bytes = std::fs::read(&cloud_path).map_err(|e| Failure::io(&cloud_path, e))?;
    let store = CloudStore::from_bytes(&cloud_bytes)
        .map_err(|e| Failure::Validation(format!("{}: {e}", cloud_path.display())))?;

    let registry = keys.registry()?;
    let ctx = ValidationContext { keys: &registry, cloud: NodeId::CLOUD, difficulty: keys.difficulty };
    let result = end_to_end_query(&q, &chain_data, &store, &keys.querier()?, &ctx, &opts)?;
    let records: Vec<HitRecord> = result.hits.iter().map(HitRecord::from).collect();
    let summary = QuerySummary::new(&records, &result.stats);

    if let Some(path) = out {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Failure::io(path, e))?);
        for r in &records {
            serde_json::to_writer(&mut w, r).expect("records serialize");
            w.write_all(b"\n").map_err(|e| Failure::io(path, e))?;
        }
        w.flush().map_err(|e| Failure::io(path, e))?;
    }
    Ok(QueryOutcome { records, summary })
}
