//! Digests, identities, signatures and the authenticated file cipher.
//!
//! Pinned schemes: SHA-256 for every digest, Ed25519 for signatures and
//! ChaCha20-Poly1305 for symmetric encryption.

use std::collections::BTreeMap;
use std::fmt;

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Nonce};
use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::error::{Error, Result};
use crate::wire::{Reader, Writer};

pub const DIGEST_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;
/// Signer id plus signature bytes.
pub const SIGNATURE_WIRE_LEN: usize = 16 + SIGNATURE_LEN;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0; DIGEST_LEN]);

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    /// Number of leading zero bits.
    pub fn leading_zeros(&self) -> u32 {
        let mut n = 0;
        for b in self.0 {
            if b == 0 {
                n += 8;
            } else {
                return n + b.leading_zeros();
            }
        }
        n
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// SHA-256.
pub fn hash(msg: &[u8]) -> Digest {
    Digest(Sha256::digest(msg).into())
}

/// SHA-256 over the concatenation of `parts`.
pub fn hash_concat<'a>(parts: impl IntoIterator<Item = &'a [u8]>) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

/// 16-byte identity of a device or the cloud.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct NodeId(pub [u8; 16]);

impl NodeId {
    pub const CLOUD: NodeId = NodeId([0xff; 16]);

    /// Device number `index`, big-endian in the low eight bytes.
    pub fn device(index: u64) -> Self {
        let mut id = [0u8; 16];
        id[8..].copy_from_slice(&index.to_be_bytes());
        NodeId(id)
    }

    /// Inverse of [`NodeId::device`].
    pub fn device_index(&self) -> Option<u64> {
        if *self == Self::CLOUD || self.0[..8] != [0u8; 8] {
            return None;
        }
        Some(u64::from_be_bytes(self.0[8..].try_into().unwrap()))
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.device_index() {
            Some(i) => write!(f, "d{i}"),
            None if *self == Self::CLOUD => f.write_str("cloud"),
            None => f.write_str(&hex::encode(self.0)),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature {
    pub signer: NodeId,
    pub bytes: [u8; SIGNATURE_LEN],
}

impl Signature {
    /// Placeholder used by the genesis header.
    pub const EMPTY: Signature = Signature { signer: NodeId([0; 16]), bytes: [0; SIGNATURE_LEN] };

    pub fn write(&self, w: &mut Writer) {
        w.bytes(&self.signer.0).bytes(&self.bytes);
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self> {
        Ok(Self { signer: NodeId(r.array()?), bytes: r.array()? })
    }

    pub fn to_bytes(&self) -> [u8; SIGNATURE_WIRE_LEN] {
        let mut out = [0u8; SIGNATURE_WIRE_LEN];
        out[..16].copy_from_slice(&self.signer.0);
        out[16..].copy_from_slice(&self.bytes);
        out
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({} {})", self.signer, &hex::encode(self.bytes)[..16])
    }
}

#[derive(Clone)]
pub struct KeyPair {
    owner: NodeId,
    secret: SigningKey,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("owner", &self.owner).finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn from_seed(owner: NodeId, seed: [u8; 32]) -> Self {
        Self { owner, secret: SigningKey::from_bytes(&seed) }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn public(&self) -> PublicKey {
        PublicKey(self.secret.verifying_key())
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        Signature { signer: self.owner, bytes: self.secret.sign(msg).to_bytes() }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct PublicKey(VerifyingKey);

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", hex::encode(self.0.as_bytes()))
    }
}

impl PublicKey {
    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    pub fn from_bytes(bytes: &[u8; 32]) -> Result<Self> {
        VerifyingKey::from_bytes(bytes).map(PublicKey).map_err(|_| Error::Crypto("bad public key"))
    }

    /// Strict Ed25519 verification; never panics on garbage input.
    pub fn verify(&self, msg: &[u8], sig: &Signature) -> bool {
        let sig = ed25519_dalek::Signature::from_bytes(&sig.bytes);
        self.0.verify_strict(msg, &sig).is_ok()
    }
}

/// `verify(pub, msg, sig)`.
pub fn verify(public: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
    public.verify(msg, sig)
}

/// Public keys of every known participant.
#[derive(Debug, Clone, Default)]
pub struct KeyRegistry {
    keys: BTreeMap<NodeId, PublicKey>,
}

impl KeyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: NodeId, key: PublicKey) {
        self.keys.insert(id, key);
    }

    pub fn get(&self, id: &NodeId) -> Option<&PublicKey> {
        self.keys.get(id)
    }

    /// Looks up the claimed signer and checks the signature under its key.
    pub fn verify(&self, msg: &[u8], sig: &Signature) -> bool {
        self.keys.get(&sig.signer).is_some_and(|k| k.verify(msg, sig))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &PublicKey)> {
        self.keys.iter()
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct SymKey(pub [u8; 32]);

impl fmt::Debug for SymKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymKey(..)")
    }
}

/// Authenticated encryption; output is `nonce ‖ ciphertext ‖ tag`.
pub fn sym_encrypt(key: &SymKey, nonce: [u8; NONCE_LEN], plaintext: &[u8]) -> Vec<u8> {
    let cipher = ChaCha20Poly1305::new((&key.0).into());
    let body = cipher
        .encrypt(Nonce::from_slice(&nonce), plaintext)
        .expect("ChaCha20-Poly1305 encryption is infallible for in-memory buffers");
    let mut out = Vec::with_capacity(NONCE_LEN + body.len());
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&body);
    out
}

/// Fails on a wrong key or any modified byte.
pub fn sym_decrypt(key: &SymKey, ciphertext: &[u8]) -> Result<Vec<u8>> {
    if ciphertext.len() < NONCE_LEN + TAG_LEN {
        return Err(Error::Crypto("ciphertext too short"));
    }
    let (nonce, body) = ciphertext.split_at(NONCE_LEN);
    ChaCha20Poly1305::new((&key.0).into())
        .decrypt(Nonce::from_slice(nonce), body)
        .map_err(|_| Error::Crypto("authenticated decryption failed"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kp(i: u64) -> KeyPair {
        let mut seed = [0u8; 32];
        seed[..8].copy_from_slice(&i.to_le_bytes());
        KeyPair::from_seed(NodeId::device(i), seed)
    }

    #[test]
    fn hash_basics() {
        assert_eq!(hash(b"abc"), hash(b"abc"));
        assert_eq!(hash(b"").0.len(), 32);
        assert_eq!(
            hash(b"abc").to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(hash_concat([&b"ab"[..], b"c"]), hash(b"abc"));
    }

    #[test]
    fn single_bit_flips_change_digest() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let len = rng.gen_range(1..64);
            let msg: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            let mut flipped = msg.clone();
            let bit = rng.gen_range(0..len * 8);
            flipped[bit / 8] ^= 1 << (bit % 8);
            assert_ne!(hash(&msg), hash(&flipped));
        }
    }

    #[test]
    fn leading_zero_bits() {
        let mut d = Digest::ZERO;
        assert_eq!(d.leading_zeros(), 256);
        d.0[1] = 0x10;
        assert_eq!(d.leading_zeros(), 11);
    }

    #[test]
    fn node_ids() {
        assert_eq!(NodeId::device(7).device_index(), Some(7));
        assert_eq!(NodeId::CLOUD.device_index(), None);
        assert_eq!(NodeId::device(3).to_string(), "d3");
        assert_eq!(NodeId::CLOUD.to_string(), "cloud");
    }

    #[test]
    fn sign_verify_contracts() {
        let a = kp(1);
        let b = kp(2);
        let sig = a.sign(b"log");
        assert!(verify(&a.public(), b"log", &sig));
        assert!(!verify(&b.public(), b"log", &sig));
        assert!(!verify(&a.public(), b"loh", &sig));
        let mut bad = sig;
        bad.bytes[63] ^= 0x40;
        assert!(!verify(&a.public(), b"log", &bad));
        assert!(!verify(&a.public(), b"log", &Signature::EMPTY));

        let mut reg = KeyRegistry::new();
        reg.insert(a.owner(), a.public());
        assert!(reg.verify(b"log", &sig));
        assert!(!reg.verify(b"log", &b.sign(b"log")));
    }

    #[test]
    fn signature_mutation_corpus() {
        let a = kp(5);
        let msg = b"mutation corpus";
        let sig = a.sign(msg);
        for i in 0..SIGNATURE_LEN {
            for flip in [0x01u8, 0x80, 0xff] {
                let mut m = sig;
                m.bytes[i] ^= flip;
                assert!(!a.public().verify(msg, &m), "byte {i} flip {flip:#x}");
            }
        }
    }

    #[test]
    fn cipher_round_trip_and_failures() {
        let key = SymKey([9; 32]);
        let ct = sym_encrypt(&key, [1; NONCE_LEN], b"hello");
        assert_ne!(&ct[NONCE_LEN..NONCE_LEN + 5], b"hello");
        assert_eq!(sym_decrypt(&key, &ct).unwrap(), b"hello");
        assert_eq!(sym_decrypt(&key, &sym_encrypt(&key, [2; 12], b"")).unwrap(), b"");
        assert_ne!(ct, sym_encrypt(&key, [3; NONCE_LEN], b"hello"));
        assert!(sym_decrypt(&SymKey([8; 32]), &ct).is_err());
        assert!(sym_decrypt(&key, &ct[..10]).is_err());
    }

    #[test]
    fn nonce_corpus_gives_distinct_ciphertexts() {
        let key = SymKey([4; 32]);
        let mut seen = std::collections::HashSet::new();
        for n in 0u8..64 {
            let mut nonce = [0u8; NONCE_LEN];
            nonce[0] = n;
            assert!(seen.insert(sym_encrypt(&key, nonce, b"same plaintext")));
        }
    }
}
