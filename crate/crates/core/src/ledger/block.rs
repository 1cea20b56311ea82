use crate::crypto::{hash, hash_concat, Digest, NodeId, Signature, SIGNATURE_WIRE_LEN};
use crate::error::{Error, Result};
use crate::imt::Imt;
use crate::log::{logs_to_bytes, read_logs, write_logs, CommLog};
use crate::wire::{Reader, Writer};

/// `prev_hash(32) ‖ imt_root_sig(80) ‖ difficulty(1) ‖ timestamp(8) ‖ nonce(8)`.
pub const HEADER_LEN: usize = 32 + SIGNATURE_WIRE_LEN + 1 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockHeader {
    pub prev_hash: Digest,
    /// The publishing device's signature over the index root.
    pub imt_root_sig: Signature,
    /// Required leading zero bits of the header digest.
    pub difficulty: u8,
    pub timestamp: u64,
    pub nonce: u64,
}

impl BlockHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[..32].copy_from_slice(&self.prev_hash.0);
        out[32..32 + SIGNATURE_WIRE_LEN].copy_from_slice(&self.imt_root_sig.to_bytes());
        let rest = &mut out[32 + SIGNATURE_WIRE_LEN..];
        rest[0] = self.difficulty;
        rest[1..9].copy_from_slice(&self.timestamp.to_be_bytes());
        rest[9..17].copy_from_slice(&self.nonce.to_be_bytes());
        out
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self> {
        Ok(Self {
            prev_hash: Digest(r.array()?),
            imt_root_sig: Signature::read(r)?,
            difficulty: r.u8()?,
            timestamp: r.u64()?,
            nonce: r.u64()?,
        })
    }

    pub fn hash(&self) -> Digest {
        hash(&self.to_bytes())
    }
}

/// Everything a device broadcasts after a flush.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockBody {
    pub device_id: NodeId,
    /// Upload timestamp covered by the cloud receipt.
    pub upload_ts: u64,
    pub logs: Vec<CommLog>,
    /// `Sig_c` over the ciphertext digests, the device id and `upload_ts`.
    pub cloud_receipt: Signature,
    /// `Sig_d(h(L ‖ Sig_c))`.
    pub log_sig: Signature,
    pub imt: Imt,
}

impl BlockBody {
    pub fn empty() -> Self {
        Self {
            device_id: NodeId::default(),
            upload_ts: 0,
            logs: Vec::new(),
            cloud_receipt: Signature::EMPTY,
            log_sig: Signature::EMPTY,
            imt: Imt::from_bytes(&[0; 8]).expect("empty tree encoding"),
        }
    }

    pub fn write(&self, w: &mut Writer) {
        w.bytes(&self.device_id.0).u64(self.upload_ts);
        write_logs(w, &self.logs);
        self.cloud_receipt.write(w);
        self.log_sig.write(w);
        self.imt.write(w);
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self> {
        Ok(Self {
            device_id: NodeId(r.array()?),
            upload_ts: r.u64()?,
            logs: read_logs(r)?,
            cloud_receipt: Signature::read(r)?,
            log_sig: Signature::read(r)?,
            imt: Imt::read(r)?,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write(&mut w);
        w.into_bytes()
    }

    pub fn cipher_refs(&self) -> impl Iterator<Item = &Digest> {
        self.logs.iter().map(|l| &l.cipher_ref)
    }

    /// Earliest communication timestamp recorded in the body.
    pub fn min_log_ts(&self) -> Option<u64> {
        self.logs.iter().map(|l| l.ts).min()
    }
}

/// `h_1 ‖ … ‖ h_m ‖ ID ‖ TS`: the upload receipt both sides sign, with `ID`
/// being the counterpart's identity.
pub fn receipt_message<'a>(
    cipher_refs: impl IntoIterator<Item = &'a Digest>,
    counterpart: NodeId,
    ts: u64,
) -> Vec<u8> {
    let mut w = Writer::new();
    for h in cipher_refs {
        w.bytes(&h.0);
    }
    w.bytes(&counterpart.0).u64(ts);
    w.into_bytes()
}

/// `h(L ‖ Sig_c)`, the message of the owner's log signature.
pub fn log_collection_digest(logs: &[CommLog], cloud_receipt: &Signature) -> Digest {
    hash_concat([&logs_to_bytes(logs)[..], &cloud_receipt.to_bytes()])
}

/// Seed of the node-id generator for the index published by `device` at
/// `upload_ts`, so validators can recompute every node id.
pub fn index_id_seed(device: NodeId, upload_ts: u64) -> [u8; 32] {
    hash_concat([&b"kd-node-id"[..], &device.0, &upload_ts.to_be_bytes()]).0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub header: BlockHeader,
    pub body: BlockBody,
}

impl Block {
    /// All-zero parent, empty body, difficulty 0.
    pub fn genesis() -> Self {
        Self {
            header: BlockHeader {
                prev_hash: Digest::ZERO,
                imt_root_sig: Signature::EMPTY,
                difficulty: 0,
                timestamp: 0,
                nonce: 0,
            },
            body: BlockBody::empty(),
        }
    }

    pub fn hash(&self) -> Digest {
        self.header.hash()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(&self.header.to_bytes());
        self.body.write(&mut w);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let header = BlockHeader::read(&mut r)?;
        let body = BlockBody::read(&mut r)?;
        r.finish()?;
        Ok(Self { header, body })
    }

    /// Byte offset where the body starts in [`Block::to_bytes`].
    pub const fn body_offset() -> usize {
        HEADER_LEN
    }
}

impl std::str::FromStr for BlockHeader {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bytes = hex::decode(s).map_err(|e| Error::decode(e.to_string()))?;
        let mut r = Reader::new(&bytes);
        let h = Self::read(&mut r)?;
        r.finish()?;
        Ok(h)
    }
}
