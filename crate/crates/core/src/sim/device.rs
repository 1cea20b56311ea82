use rand::RngCore;

use crate::aspe::{keygen, AspeKey};
use crate::crypto::{hash, hash_concat, sym_encrypt, KeyPair, NodeId, Signature, SymKey, NONCE_LEN};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::imt::build_imt;
use crate::kdtree::{build, digitize, encrypt_tree, AttrValue, IdGen, LeafPayload, Schema};
use crate::ledger::{index_id_seed, log_collection_digest, receipt_message, BlockBody};
use crate::log::CommLog;

use super::cloud::CloudStore;

/// One communication between two devices. Both endpoints buffer a copy.
#[derive(Debug, Clone, PartialEq)]
pub struct CommFile {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub ts: u64,
    pub attrs: Vec<AttrValue>,
    pub body: Vec<u8>,
}

impl CommFile {
    /// The other endpoint as seen from `holder`.
    pub fn peer_of(&self, holder: NodeId) -> NodeId {
        if holder == self.sender {
            self.receiver
        } else {
            self.sender
        }
    }
}

/// Secrets of one device. The querier is assumed to hold copies of the
/// ASPE and symmetric keys.
#[derive(Debug, Clone)]
pub struct DeviceKeys {
    pub signing: KeyPair,
    pub aspe: AspeKey,
    pub sym: SymKey,
}

impl DeviceKeys {
    /// Keys of device `index` derived from the scenario seed.
    pub fn derive(seed: u64, index: u64, dim: usize) -> Result<Self> {
        let part = |tag: &[u8]| hash_concat([tag, &seed.to_be_bytes(), &index.to_be_bytes()]).0;
        let aspe_seed = u64::from_be_bytes(part(b"aspe")[..8].try_into().unwrap());
        Ok(Self {
            signing: KeyPair::from_seed(NodeId::device(index), part(b"sign")),
            aspe: keygen(dim, aspe_seed)?,
            sym: SymKey(part(b"sym")),
        })
    }

    pub fn id(&self) -> NodeId {
        self.signing.owner()
    }
}

/// Signing key of the cloud for a scenario seed.
pub fn cloud_keypair(seed: u64) -> KeyPair {
    KeyPair::from_seed(NodeId::CLOUD, hash_concat([&b"cloud"[..], &seed.to_be_bytes()]).0)
}

/// What a device broadcasts after a successful flush.
#[derive(Debug, Clone, PartialEq)]
pub struct BroadcastPayload {
    pub body: BlockBody,
    pub imt_root_sig: Signature,
}

#[derive(Debug, Clone)]
pub struct Device {
    pub keys: DeviceKeys,
    pub storage_cap: u64,
    /// Set while the device is flushing in the current round.
    pub busy: bool,
    buffer: Vec<CommFile>,
    used: u64,
    flush_attempts: u64,
    receipts: Vec<Signature>,
}

impl Device {
    pub fn new(keys: DeviceKeys, storage_cap: u64) -> Self {
        Self {
            keys,
            storage_cap,
            busy: false,
            buffer: Vec::new(),
            used: 0,
            flush_attempts: 0,
            receipts: Vec::new(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.keys.id()
    }

    pub fn buffer(&self) -> &[CommFile] {
        &self.buffer
    }

    /// Bytes currently buffered.
    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn fits(&self, f: &CommFile) -> bool {
        self.used + f.body.len() as u64 <= self.storage_cap
    }

    /// Buffer `f`. Fails if it would exceed the storage cap.
    pub fn push(&mut self, f: CommFile) -> Result<()> {
        if !self.fits(&f) {
            return Err(Error::InvalidArgument(format!("{} buffer full", self.id())));
        }
        self.used += f.body.len() as u64;
        self.buffer.push(f);
        Ok(())
    }

    /// Flush attempts made so far, denied ones included.
    pub fn flush_attempts(&self) -> u64 {
        self.flush_attempts
    }

    /// Cloud receipts `Sig_c` collected from successful flushes.
    pub fn receipts(&self) -> &[Signature] {
        &self.receipts
    }
}

fn nonce(rng: &mut impl RngCore) -> [u8; NONCE_LEN] {
    let mut n = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut n);
    n
}

/// Upload the buffer, exchange receipts, build the signed log collection and
/// the encrypted index. `signers` holds every device's key (peers co-sign
/// their logs synchronously). On a denied receipt nothing is kept in the
/// cloud and the buffer stays as it was.
pub fn flush(
    dev: &mut Device,
    cloud: &mut CloudStore,
    cloud_key: &KeyPair,
    signers: &[KeyPair],
    schema: &Schema,
    upload_ts: u64,
    rng: &mut impl RngCore,
) -> Result<BroadcastPayload> {
    if dev.buffer.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    dev.flush_attempts += 1;
    let me = dev.id();
    let keys = &dev.keys;

    let points = dev
        .buffer
        .iter()
        .map(|f| digitize(&f.attrs, schema))
        .collect::<Result<Vec<Point>>>()?;
    let refs: Vec<_> = dev
        .buffer
        .iter()
        .map(|f| cloud.put(sym_encrypt(&keys.sym, nonce(rng), &f.body)))
        .collect();
    let sig_d = keys.signing.sign(&receipt_message(&refs, NodeId::CLOUD, upload_ts));
    let sig_c = cloud.countersign(cloud_key, me, &refs, upload_ts, sig_d)?;

    let mut logs = Vec::with_capacity(dev.buffer.len());
    let mut leaves = Vec::with_capacity(dev.buffer.len());
    for (k, ((f, cipher_ref), p)) in dev.buffer.iter().zip(&refs).zip(points).enumerate() {
        let enc = sym_encrypt(&keys.sym, nonce(rng), &hash(&f.body).0);
        let enc_file_hash = enc.try_into().expect("fixed-size digest ciphertext");
        let peer = f.peer_of(me);
        let peer_key = peer
            .device_index()
            .and_then(|i| signers.get(i as usize))
            .ok_or_else(|| Error::InvalidArgument(format!("no signer for {peer}")))?;
        let peer_sig = peer_key.sign(&CommLog::peer_message(&enc_file_hash, f.ts));
        logs.push(CommLog { enc_file_hash, ts: f.ts, cipher_ref: *cipher_ref, peer_sig });
        leaves.push((p, LeafPayload { cipher_ref: *cipher_ref, log_ref: k as u64 }));
    }

    let tree = build(&leaves, &mut IdGen::new(index_id_seed(me, upload_ts)))?;
    let imt = build_imt(&encrypt_tree(&tree, &keys.aspe)?, &logs)?;
    let root = imt.root_hash().expect("non-empty buffer");
    let log_sig = keys.signing.sign(&log_collection_digest(&logs, &sig_c).0);
    let imt_root_sig = keys.signing.sign(&root.0);

    dev.receipts.push(sig_c);
    dev.buffer.clear();
    dev.used = 0;
    Ok(BroadcastPayload {
        body: BlockBody { device_id: me, upload_ts, logs, cloud_receipt: sig_c, log_sig, imt },
        imt_root_sig,
    })
}
