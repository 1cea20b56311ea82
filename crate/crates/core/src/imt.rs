//! Indexed Merkle tree: authentication hashes over the encrypted kd-tree.
//!
//! ```text
//! leaf:     h = H([V⊥] ‖ [V⊤] ‖ H(L))          L = the log the leaf points to
//! internal: h = H(h_left ‖ h_right ‖ [V⊥] ‖ [V⊤])
//! ```
//!
//! Encrypted vertices enter the hash in their canonical encoding
//! ([`crate::aspe::EncPoint::write`]), so the root commits to every region
//! ciphertext as well as to every log.

use crate::aspe::EncRect;
use crate::crypto::{hash, hash_concat, Digest};
use crate::error::{Error, Result};
use crate::kdtree::{EncKdTree, NodeKind};
use crate::log::CommLog;
use crate::wire::{Reader, Writer};

pub fn leaf_hash(rect: &EncRect, log: &CommLog) -> Digest {
    let log_digest = hash(&log.to_bytes());
    hash_concat([&rect.to_bytes()[..], &log_digest.0])
}

pub fn internal_hash(left: &Digest, right: &Digest, rect: &EncRect) -> Digest {
    hash_concat([&left.0[..], &right.0, &rect.to_bytes()])
}

/// Encrypted kd-tree plus one hash per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Imt {
    tree: EncKdTree,
    hashes: Vec<Digest>,
}

fn compute_hashes(t: &EncKdTree, logs: &[CommLog]) -> Result<Vec<Digest>> {
    let mut hashes = vec![Digest::ZERO; t.len()];
    // pre-order arena: children always sit after their parent
    for i in (0..t.len()).rev() {
        let n = t.node(i);
        hashes[i] = match n.kind {
            NodeKind::Leaf(p) => {
                let log = usize::try_from(p.log_ref)
                    .ok()
                    .and_then(|k| logs.get(k))
                    .ok_or(Error::DanglingLogRef(p.log_ref))?;
                leaf_hash(&n.rect, log)
            }
            NodeKind::Internal { left, right } => {
                internal_hash(&hashes[left], &hashes[right], &n.rect)
            }
        };
    }
    Ok(hashes)
}

/// Hash the encrypted tree bottom-up against its log collection.
pub fn build_imt(t: &EncKdTree, logs: &[CommLog]) -> Result<Imt> {
    Ok(Imt { hashes: compute_hashes(t, logs)?, tree: t.clone() })
}

impl Imt {
    pub fn tree(&self) -> &EncKdTree {
        &self.tree
    }

    pub fn hash(&self, i: usize) -> Digest {
        self.hashes[i]
    }

    /// `None` for an empty index.
    pub fn root_hash(&self) -> Option<Digest> {
        self.hashes.first().copied()
    }

    pub fn dim(&self) -> Option<usize> {
        self.tree.nodes().first().map(|n| n.rect.dim())
    }

    /// Recompute every hash from the rectangles and `logs`; errors unless all
    /// stored hashes match.
    pub fn check_hashes(&self, logs: &[CommLog]) -> Result<()> {
        let fresh = compute_hashes(&self.tree, logs)?;
        match fresh.iter().zip(&self.hashes).position(|(a, b)| a != b) {
            Some(i) => Err(Error::decode(format!("stored hash of node {i} does not match"))),
            None => Ok(()),
        }
    }

    /// The kd-tree encoding with a 32-byte hash after every node.
    pub fn write(&self, w: &mut Writer) {
        self.tree.write_with(w, |i, w| {
            w.bytes(&self.hashes[i].0);
        });
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self> {
        let (tree, hashes) = EncKdTree::read_with(r, |r| Ok(Digest(r.array()?)))?;
        Ok(Self { tree, hashes })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write(&mut w);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let imt = Self::read(&mut r)?;
        r.finish()?;
        Ok(imt)
    }

    /// Authentication path from the leaf with `leaf_id` up to the root.
    pub fn prove(&self, leaf_id: u128) -> Result<MerkleProof> {
        let leaf = self
            .tree
            .find_id(leaf_id)
            .filter(|&i| self.tree.node(i).is_leaf())
            .ok_or(Error::UnknownLeaf(leaf_id))?;
        Ok(self.prove_index(leaf))
    }

    pub(crate) fn prove_index(&self, leaf: usize) -> MerkleProof {
        self.prove_with(leaf, &self.tree.parents())
    }

    /// Proofs for several leaves (arena positions), sharing one parent map.
    pub fn prove_leaves(&self, leaves: &[usize]) -> Result<Vec<MerkleProof>> {
        let parents = self.tree.parents();
        leaves
            .iter()
            .map(|&i| match self.tree.nodes().get(i) {
                Some(n) if n.is_leaf() => Ok(self.prove_with(i, &parents)),
                Some(n) => Err(Error::UnknownLeaf(n.id)),
                None => Err(Error::InvalidArgument(format!("no node at position {i}"))),
            })
            .collect()
    }

    fn prove_with(&self, leaf: usize, parents: &[Option<usize>]) -> MerkleProof {
        let mut steps = Vec::new();
        let mut cur = leaf;
        while let Some(p) = parents[cur] {
            let (l, r) = self.tree.node(p).children().expect("parent is internal");
            let (sibling, side) = if l == cur { (r, Side::Right) } else { (l, Side::Left) };
            steps.push(ProofStep {
                sibling: self.hashes[sibling],
                sibling_side: side,
                parent_rect: self.tree.node(p).rect.clone(),
            });
            cur = p;
        }
        MerkleProof { leaf_hash: self.hashes[leaf], steps }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProofStep {
    pub sibling: Digest,
    pub sibling_side: Side,
    pub parent_rect: EncRect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MerkleProof {
    pub leaf_hash: Digest,
    pub steps: Vec<ProofStep>,
}

impl MerkleProof {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Replay the path from the leaf hash.
    pub fn root(&self) -> Digest {
        self.steps.iter().fold(self.leaf_hash, |cur, s| match s.sibling_side {
            Side::Left => internal_hash(&s.sibling, &cur, &s.parent_rect),
            Side::Right => internal_hash(&cur, &s.sibling, &s.parent_rect),
        })
    }

    /// `leaf_hash ‖ u32 count ‖ (sibling ‖ side ‖ parent_rect)*`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(&self.leaf_hash.0).u32(self.steps.len() as u32);
        for s in &self.steps {
            w.bytes(&s.sibling.0).u8(s.sibling_side as u8);
            s.parent_rect.write(&mut w);
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let leaf_hash = Digest(r.array()?);
        let n = r.u32()? as usize;
        if n > r.remaining() / 33 {
            return Err(Error::decode("proof step count exceeds input"));
        }
        let steps = (0..n)
            .map(|_| {
                let sibling = Digest(r.array()?);
                let sibling_side = match r.u8()? {
                    0 => Side::Left,
                    1 => Side::Right,
                    s => return Err(Error::decode(format!("bad proof side {s}"))),
                };
                Ok(ProofStep { sibling, sibling_side, parent_rect: EncRect::read(&mut r)? })
            })
            .collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok(Self { leaf_hash, steps })
    }
}

/// True iff replaying `proof` reproduces `root`.
pub fn verify(root: &Digest, proof: &MerkleProof) -> bool {
    proof.root() == *root
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aspe::{self, encrypt_point};
    use crate::crypto::{NodeId, Signature};
    use crate::geometry::Point;
    use crate::kdtree::{build, encrypt_tree, IdGen, LeafPayload};
    use crate::log::ENC_DIGEST_LEN;

    fn log(i: usize) -> CommLog {
        CommLog {
            enc_file_hash: [i as u8; ENC_DIGEST_LEN],
            ts: 1000 + i as u64,
            cipher_ref: hash(&i.to_be_bytes()),
            peer_sig: Signature { signer: NodeId::device(i as u64 % 3), bytes: [i as u8; 64] },
        }
    }

    fn fixture(n: usize, seed: u64) -> (Imt, Vec<CommLog>) {
        let pts: Vec<_> = (0..n)
            .map(|i| {
                let x = ((i as u64 * 2654435761 + seed) % 1000) as f64 / 1000.0;
                let y = ((i as u64 * 40503 + 7 * seed) % 997) as f64 / 997.0;
                (
                    Point::new(vec![x, y]).unwrap(),
                    LeafPayload { cipher_ref: log(i).cipher_ref, log_ref: i as u64 },
                )
            })
            .collect();
        let t = build(&pts, &mut IdGen::from_u64(seed)).unwrap();
        let et = encrypt_tree(&t, &aspe::keygen(2, seed).unwrap()).unwrap();
        let logs: Vec<_> = (0..n).map(log).collect();
        (build_imt(&et, &logs).unwrap(), logs)
    }

    #[test]
    fn single_leaf_formula() {
        let (imt, logs) = fixture(1, 1);
        let rect = &imt.tree().node(0).rect;
        let expected = hash_concat([
            &rect.lo.to_bytes()[..],
            &rect.hi.to_bytes(),
            &hash(&logs[0].to_bytes()).0,
        ]);
        assert_eq!(imt.root_hash(), Some(expected));
        let proof = imt.prove(imt.tree().node(0).id).unwrap();
        assert!(proof.is_empty());
        assert_eq!(proof.leaf_hash, expected);
        assert!(verify(&expected, &proof));
    }

    #[test]
    fn two_leaf_formula() {
        let (imt, _) = fixture(2, 2);
        let rect = &imt.tree().node(0).rect;
        let expected = hash_concat([
            &imt.hash(1).0[..],
            &imt.hash(2).0,
            &rect.lo.to_bytes(),
            &rect.hi.to_bytes(),
        ]);
        assert_eq!(imt.root_hash(), Some(expected));
    }

    #[test]
    fn dangling_log_ref_rejected() {
        let (imt, logs) = fixture(4, 3);
        assert_eq!(build_imt(imt.tree(), &logs[..2]).unwrap_err(), Error::DanglingLogRef(2));
    }

    #[test]
    fn every_log_byte_affects_root() {
        let (imt, logs) = fixture(4, 4);
        let root = imt.root_hash().unwrap();
        for k in 0..logs.len() {
            let bytes = logs[k].to_bytes();
            for pos in 0..bytes.len() {
                let mut b = bytes.clone();
                b[pos] ^= 0x01;
                let mut mutated = logs.clone();
                mutated[k] = CommLog::read(&mut Reader::new(&b)).unwrap();
                assert_ne!(build_imt(imt.tree(), &mutated).unwrap().root_hash().unwrap(), root);
            }
        }
    }

    #[test]
    fn eight_leaf_paths_have_length_three() {
        let (imt, _) = fixture(8, 5);
        let root = imt.root_hash().unwrap();
        for leaf in imt.tree().leaves().collect::<Vec<_>>() {
            let proof = imt.prove(imt.tree().node(leaf).id).unwrap();
            assert_eq!(proof.len(), 3);
            assert!(verify(&root, &proof));
        }
    }

    #[test]
    fn unknown_or_internal_id_rejected() {
        let (imt, _) = fixture(3, 6);
        assert!(imt.prove(12345).is_err());
        assert!(matches!(imt.prove(imt.tree().node(0).id), Err(Error::UnknownLeaf(_))));
    }

    #[test]
    fn cross_tree_proofs_rejected() {
        let (a, _) = fixture(6, 7);
        let (b, _) = fixture(6, 8);
        let root_b = b.root_hash().unwrap();
        for leaf in a.tree().leaves() {
            assert!(!verify(&root_b, &a.prove_index(leaf)));
        }
    }

    #[test]
    fn mutated_proofs_rejected() {
        let (imt, _) = fixture(16, 9);
        let root = imt.root_hash().unwrap();
        let leaf = imt.tree().leaves().nth(5).unwrap();
        let proof = imt.prove_index(leaf);
        assert!(verify(&root, &proof));
        for s in 0..proof.len() {
            for bit in 0..256 {
                let mut p = proof.clone();
                p.steps[s].sibling.0[bit / 8] ^= 1 << (bit % 8);
                assert!(!verify(&root, &p));
            }
            let mut p = proof.clone();
            p.steps[s].sibling_side = match p.steps[s].sibling_side {
                Side::Left => Side::Right,
                Side::Right => Side::Left,
            };
            assert!(!verify(&root, &p));
        }
        let mut swapped = proof.clone();
        swapped.steps.swap(0, 1);
        assert!(!verify(&root, &swapped));
        let mut moved_rect = proof.clone();
        moved_rect.steps[1].parent_rect.lo = encrypt_point(&aspe::AspeKey::identity(2), &Point::origin(2)).unwrap();
        assert!(!verify(&root, &moved_rect));
    }

    #[test]
    fn bytes_round_trip() {
        let (imt, logs) = fixture(9, 10);
        let back = Imt::from_bytes(&imt.to_bytes()).unwrap();
        assert_eq!(back, imt);
        back.check_hashes(&logs).unwrap();
        let proof = imt.prove_index(imt.tree().leaves().next().unwrap());
        assert_eq!(MerkleProof::from_bytes(&proof.to_bytes()).unwrap(), proof);
        assert!(MerkleProof::from_bytes(&proof.to_bytes()[..40]).is_err());
    }
}
