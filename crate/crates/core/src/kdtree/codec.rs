//! Pre-order tree encoding.
//!
//! ```text
//! tree := node_count:u64 node*
//! node := id:16 kind:1 size:u64 rect [cipher_ref:32 log_ref:u64]   (leaf only)
//! ```
//!
//! `kind` is 0 for internal nodes and 1 for leaves. Callers may append a
//! fixed trailer after each node (the authenticated index appends its hash).

use crate::aspe::EncRect;
use crate::crypto::Digest;
use crate::error::{Error, Result};
use crate::geometry::{HyperRect, Point};
use crate::wire::{Reader, Writer};

use super::{LeafPayload, Node, NodeKind, Tree};

const KIND_INTERNAL: u8 = 0;
const KIND_LEAF: u8 = 1;
/// id + kind + size + the smallest possible rect.
const MIN_NODE_LEN: usize = 16 + 1 + 8 + 8;

pub trait RectCodec: Sized {
    fn write_rect(&self, w: &mut Writer);
    fn read_rect(r: &mut Reader<'_>) -> Result<Self>;
    fn rect_dim(&self) -> usize;
}

fn write_point(w: &mut Writer, p: &Point) {
    w.u32(p.dim() as u32);
    for &c in p.coords() {
        w.f64(c);
    }
}

fn read_point(r: &mut Reader<'_>) -> Result<Point> {
    let dim = r.u32()? as usize;
    if dim == 0 || r.remaining() < 8 * dim {
        return Err(Error::decode(format!("bad point dimension {dim}")));
    }
    let coords = (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    Point::new(coords)
}

impl RectCodec for HyperRect {
    fn write_rect(&self, w: &mut Writer) {
        write_point(w, self.lo());
        write_point(w, self.hi());
    }

    fn read_rect(r: &mut Reader<'_>) -> Result<Self> {
        let lo = read_point(r)?;
        let hi = read_point(r)?;
        HyperRect::new(lo, hi).map_err(|e| Error::decode(e.to_string()))
    }

    fn rect_dim(&self) -> usize {
        self.dim()
    }
}

impl RectCodec for EncRect {
    fn write_rect(&self, w: &mut Writer) {
        self.write(w);
    }

    fn read_rect(r: &mut Reader<'_>) -> Result<Self> {
        EncRect::read(r)
    }

    fn rect_dim(&self) -> usize {
        self.dim()
    }
}

enum Pending {
    Left(usize),
    Right(usize),
}

impl<R: RectCodec> Tree<R> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write_with(&mut w, |_, _| {});
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let (t, _) = Self::read_with(&mut r, |_| Ok(()))?;
        r.finish()?;
        Ok(t)
    }

    pub(crate) fn write_with(&self, w: &mut Writer, mut trailer: impl FnMut(usize, &mut Writer)) {
        w.u64(self.nodes.len() as u64);
        for (i, n) in self.nodes.iter().enumerate() {
            w.bytes(&n.id.to_be_bytes());
            match n.kind {
                NodeKind::Internal { .. } => w.u8(KIND_INTERNAL),
                NodeKind::Leaf(_) => w.u8(KIND_LEAF),
            };
            w.u64(n.size);
            n.rect.write_rect(w);
            if let NodeKind::Leaf(p) = n.kind {
                w.bytes(&p.cipher_ref.0).u64(p.log_ref);
            }
            trailer(i, w);
        }
    }

    /// Parse a tree, reading one trailer per node with `trailer`. The shape is
    /// rebuilt iteratively, so hostile inputs cannot exhaust the stack.
    pub(crate) fn read_with<T>(
        r: &mut Reader<'_>,
        mut trailer: impl FnMut(&mut Reader<'_>) -> Result<T>,
    ) -> Result<(Self, Vec<T>)> {
        let count = r.u64()?;
        if count > (r.remaining() / MIN_NODE_LEN) as u64 {
            return Err(Error::decode(format!("node count {count} exceeds input")));
        }
        let count = count as usize;
        let mut nodes: Vec<Node<R>> = Vec::with_capacity(count);
        let mut extras = Vec::with_capacity(count);
        let mut pending: Vec<Pending> = Vec::new();
        let mut dim = None;
        for i in 0..count {
            match pending.pop() {
                Some(Pending::Left(p)) => {
                    debug_assert_eq!(p + 1, i);
                    pending.push(Pending::Right(p));
                }
                Some(Pending::Right(p)) => match &mut nodes[p].kind {
                    NodeKind::Internal { right, .. } => *right = i,
                    NodeKind::Leaf(_) => unreachable!(),
                },
                None if i > 0 => return Err(Error::decode("nodes after a complete tree")),
                None => {}
            }
            let id = u128::from_be_bytes(r.array()?);
            let kind = r.u8()?;
            let size = r.u64()?;
            let rect = R::read_rect(r)?;
            if *dim.get_or_insert(rect.rect_dim()) != rect.rect_dim() {
                return Err(Error::decode(format!("node {i} changes dimension")));
            }
            let kind = match kind {
                KIND_INTERNAL => {
                    pending.push(Pending::Left(i));
                    NodeKind::Internal { left: i + 1, right: 0 }
                }
                KIND_LEAF => NodeKind::Leaf(LeafPayload {
                    cipher_ref: Digest(r.array()?),
                    log_ref: r.u64()?,
                }),
                other => return Err(Error::decode(format!("unknown node kind {other}"))),
            };
            nodes.push(Node { id, rect, size, kind });
            extras.push(trailer(r)?);
        }
        if !pending.is_empty() {
            return Err(Error::decode("truncated tree: internal node missing children"));
        }
        Ok((Tree { nodes }, extras))
    }
}

#[cfg(test)]
mod tests {
    use super::super::{build, encrypt_tree, IdGen};
    use super::*;
    use crate::aspe;

    fn tree(n: usize) -> Tree<HyperRect> {
        let pts: Vec<_> = (0..n)
            .map(|i| {
                let p = Point::new(vec![(i * 7 % 11) as f64, (i * 3 % 5) as f64]).unwrap();
                (p, LeafPayload { cipher_ref: Digest([i as u8; 32]), log_ref: i as u64 })
            })
            .collect();
        build(&pts, &mut IdGen::from_u64(5)).unwrap()
    }

    #[test]
    fn plain_and_encrypted_round_trip() {
        for n in [1, 2, 7, 20] {
            let t = tree(n);
            assert_eq!(Tree::<HyperRect>::from_bytes(&t.to_bytes()).unwrap(), t);
            let et = encrypt_tree(&t, &aspe::keygen(2, 1).unwrap()).unwrap();
            assert_eq!(Tree::<EncRect>::from_bytes(&et.to_bytes()).unwrap(), et);
        }
        let empty = Tree::<HyperRect>::empty();
        assert_eq!(empty.to_bytes(), vec![0; 8]);
        assert!(Tree::<HyperRect>::from_bytes(&empty.to_bytes()).unwrap().is_empty());
    }

    #[test]
    fn layout_of_single_leaf() {
        let t = tree(1);
        let bytes = t.to_bytes();
        // count + id + kind + size + 2 × (u32 + 2 doubles) + payload
        assert_eq!(bytes.len(), 8 + 16 + 1 + 8 + 2 * (4 + 16) + 32 + 8);
        assert_eq!(bytes[8 + 16], KIND_LEAF);
    }

    #[test]
    fn malformed_inputs_rejected() {
        let bytes = tree(5).to_bytes();
        for cut in [0, 7, 8, 30, bytes.len() - 1] {
            assert!(Tree::<HyperRect>::from_bytes(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut bad_kind = bytes.clone();
        bad_kind[8 + 16] = 9;
        assert!(Tree::<HyperRect>::from_bytes(&bad_kind).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Tree::<HyperRect>::from_bytes(&extra).is_err());
        let mut huge = bytes;
        huge[0] = 0x7f;
        assert!(Tree::<HyperRect>::from_bytes(&huge).is_err());
    }
}
