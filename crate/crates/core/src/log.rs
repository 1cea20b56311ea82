//! Communication logs: the per-file records that end up on chain.

use crate::crypto::{Digest, Signature, NONCE_LEN, SIGNATURE_WIRE_LEN, TAG_LEN};
use crate::error::{Error, Result};
use crate::wire::{Reader, Writer};

/// Length of `E(h(F))`: nonce, encrypted 32-byte digest, tag.
pub const ENC_DIGEST_LEN: usize = NONCE_LEN + 32 + TAG_LEN;
pub const LOG_WIRE_LEN: usize = ENC_DIGEST_LEN + 8 + 32 + SIGNATURE_WIRE_LEN;

/// One file's log entry `L_it`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommLog {
    /// Symmetric encryption of the file digest under the owner's key.
    pub enc_file_hash: [u8; ENC_DIGEST_LEN],
    /// Communication timestamp (seconds).
    pub ts: u64,
    /// Content address of the file ciphertext in the cloud.
    pub cipher_ref: Digest,
    /// The counterpart's signature over [`CommLog::peer_message`].
    pub peer_sig: Signature,
}

impl CommLog {
    /// `E(h(F)) ‖ TS`, the bytes the peer signs.
    pub fn peer_message(enc_file_hash: &[u8; ENC_DIGEST_LEN], ts: u64) -> Vec<u8> {
        let mut w = Writer::with_capacity(ENC_DIGEST_LEN + 8);
        w.bytes(enc_file_hash).u64(ts);
        w.into_bytes()
    }

    pub fn write(&self, w: &mut Writer) {
        w.bytes(&self.enc_file_hash).u64(self.ts).bytes(&self.cipher_ref.0);
        self.peer_sig.write(w);
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self> {
        Ok(Self {
            enc_file_hash: r.array()?,
            ts: r.u64()?,
            cipher_ref: Digest(r.array()?),
            peer_sig: Signature::read(r)?,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(LOG_WIRE_LEN);
        self.write(&mut w);
        w.into_bytes()
    }
}

/// Canonical encoding of a log collection `L_i`: u32 count then the entries.
pub fn write_logs(w: &mut Writer, logs: &[CommLog]) {
    w.u32(logs.len() as u32);
    for log in logs {
        log.write(w);
    }
}

pub fn read_logs(r: &mut Reader<'_>) -> Result<Vec<CommLog>> {
    let n = r.u32()? as usize;
    if n.saturating_mul(LOG_WIRE_LEN) > r.remaining() {
        return Err(Error::decode(format!("log count {n} exceeds input")));
    }
    (0..n).map(|_| CommLog::read(r)).collect()
}

pub fn logs_to_bytes(logs: &[CommLog]) -> Vec<u8> {
    let mut w = Writer::with_capacity(4 + logs.len() * LOG_WIRE_LEN);
    write_logs(&mut w, logs);
    w.into_bytes()
}
