//! Content-addressed cloud store with scriptable faults.

use std::collections::BTreeMap;

use crate::crypto::{hash, Digest, KeyPair, NodeId, Signature};
use crate::error::{Error, Result};
use crate::ledger::receipt_message;
use crate::wire::{Reader, Writer};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFault {
    Drop,
    Corrupt { byte: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CloudResponse {
    Found(Vec<u8>),
    NotFound,
}

/// Both halves of a completed upload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub device: NodeId,
    pub refs: Vec<Digest>,
    pub ts: u64,
    /// Cloud's signature, held by the device.
    pub sig_c: Signature,
    /// Device's mirror signature, held by the cloud.
    pub sig_d: Signature,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CloudStore {
    objects: BTreeMap<Digest, Vec<u8>>,
    faults: BTreeMap<Digest, CloudFault>,
    receipts: Vec<Receipt>,
    deny_next: bool,
}

impl CloudStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn put(&mut self, ciphertext: Vec<u8>) -> Digest {
        let d = hash(&ciphertext);
        self.objects.insert(d, ciphertext);
        d
    }

    pub fn get(&self, d: &Digest) -> CloudResponse {
        let Some(obj) = self.objects.get(d) else {
            return CloudResponse::NotFound;
        };
        match self.faults.get(d) {
            None => CloudResponse::Found(obj.clone()),
            Some(CloudFault::Drop) => CloudResponse::NotFound,
            Some(CloudFault::Corrupt { byte }) => {
                let mut bad = obj.clone();
                if !bad.is_empty() {
                    let k = byte % bad.len();
                    bad[k] ^= 0xff;
                }
                CloudResponse::Found(bad)
            }
        }
    }

    pub fn inject(&mut self, d: Digest, fault: CloudFault) {
        self.faults.insert(d, fault);
    }

    /// Make the next [`CloudStore::countersign`] fail.
    pub fn deny_next_receipt(&mut self) {
        self.deny_next = true;
    }

    pub fn receipts(&self) -> &[Receipt] {
        &self.receipts
    }

    /// Exchange receipts for an upload: store the device's mirror signature
    /// `sig_d` and return the cloud's `Sig_c(refs ‖ device ‖ ts)`. When the
    /// receipt is denied, the upload's objects are discarded as well.
    pub fn countersign(
        &mut self,
        signer: &KeyPair,
        device: NodeId,
        refs: &[Digest],
        ts: u64,
        sig_d: Signature,
    ) -> Result<Signature> {
        if std::mem::take(&mut self.deny_next) {
            for r in refs {
                self.objects.remove(r);
            }
            return Err(Error::ReceiptDenied);
        }
        let sig_c = signer.sign(&receipt_message(refs, device, ts));
        self.receipts.push(Receipt { device, refs: refs.to_vec(), ts, sig_c, sig_d });
        Ok(sig_c)
    }

    /// Stored objects (faults included) and receipts.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u32(self.objects.len() as u32);
        for (d, obj) in &self.objects {
            w.bytes(&d.0).var_bytes(obj);
            match self.faults.get(d) {
                None => w.u8(0),
                Some(CloudFault::Drop) => w.u8(1),
                Some(CloudFault::Corrupt { byte }) => w.u8(2).u64(*byte as u64),
            };
        }
        w.u32(self.receipts.len() as u32);
        for r in &self.receipts {
            w.bytes(&r.device.0).u64(r.ts).u32(r.refs.len() as u32);
            for d in &r.refs {
                w.bytes(&d.0);
            }
            r.sig_c.write(&mut w);
            r.sig_d.write(&mut w);
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let mut s = Self::new();
        for _ in 0..r.u32()? {
            let d = Digest(r.array()?);
            let obj = r.var_bytes()?.to_vec();
            if hash(&obj) != d {
                return Err(Error::decode(format!("object {d} does not match its address")));
            }
            match r.u8()? {
                0 => {}
                1 => s.inject(d, CloudFault::Drop),
                2 => s.inject(d, CloudFault::Corrupt { byte: r.u64()? as usize }),
                t => return Err(Error::decode(format!("unknown fault tag {t}"))),
            }
            s.objects.insert(d, obj);
        }
        for _ in 0..r.u32()? {
            let device = NodeId(r.array()?);
            let ts = r.u64()?;
            let n = r.u32()? as usize;
            if n > r.remaining() / 32 {
                return Err(Error::decode("receipt ref count exceeds input"));
            }
            let refs = (0..n).map(|_| Ok(Digest(r.array()?))).collect::<Result<Vec<_>>>()?;
            let sig_c = Signature::read(&mut r)?;
            let sig_d = Signature::read(&mut r)?;
            s.receipts.push(Receipt { device, refs, ts, sig_c, sig_d });
        }
        r.finish()?;
        Ok(s)
    }
}

/// Fetch `d`, with faults expressed in the outcome.
pub fn cloud_get(cloud: &CloudStore, d: &Digest) -> CloudResponse {
    cloud.get(d)
}
