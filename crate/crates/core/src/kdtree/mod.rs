//! Median-split kd-tree over a device's file points, and its encrypted twin.
//!
//! Nodes live in a pre-order arena: the root is node 0 and an internal node's
//! left child immediately follows it. The split axis cycles with depth; the
//! left part takes the `⌈n/2⌉` smallest points along that axis (ties broken by
//! input order), so sibling sizes never differ by more than one. Internal
//! rectangles partition their parent at the median plane; leaves carry the
//! degenerate rectangle of their single point.

mod codec;
mod digitize;

pub use codec::RectCodec;
pub use digitize::{digitize, AttrKind, AttrValue, Attribute, Schema};

use std::cmp::Ordering;

use crate::aspe::{self, AspeKey, EncRect};
use crate::crypto::{hash_concat, Digest};
use crate::error::{Error, Result};
use crate::geometry::{HyperRect, Point};

/// Leaf pointers to the file ciphertext and its log entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LeafPayload {
    pub cipher_ref: Digest,
    pub log_ref: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Internal { left: usize, right: usize },
    Leaf(LeafPayload),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node<R> {
    pub id: u128,
    pub rect: R,
    pub size: u64,
    pub kind: NodeKind,
}

impl<R> Node<R> {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf(_))
    }

    pub fn children(&self) -> Option<(usize, usize)> {
        match self.kind {
            NodeKind::Internal { left, right } => Some((left, right)),
            NodeKind::Leaf(_) => None,
        }
    }

    pub fn payload(&self) -> Option<&LeafPayload> {
        match &self.kind {
            NodeKind::Leaf(p) => Some(p),
            NodeKind::Internal { .. } => None,
        }
    }
}

/// Arena tree; an empty arena is the empty-tree sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree<R> {
    nodes: Vec<Node<R>>,
}

pub type KdTree = Tree<HyperRect>;
pub type EncKdTree = Tree<EncRect>;

impl<R> Tree<R> {
    pub fn empty() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> Option<usize> {
        (!self.nodes.is_empty()).then_some(0)
    }

    pub fn node(&self, i: usize) -> &Node<R> {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[Node<R>] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Leaf arena indices in left-to-right order.
    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().enumerate().filter(|(_, n)| n.is_leaf()).map(|(i, _)| i)
    }

    pub fn find_id(&self, id: u128) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Parent index of every node (`None` for the root).
    pub fn parents(&self) -> Vec<Option<usize>> {
        let mut parents = vec![None; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            if let Some((l, r)) = n.children() {
                parents[l] = Some(i);
                parents[r] = Some(i);
            }
        }
        parents
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn height(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        let mut best = 0;
        for (i, n) in self.nodes.iter().enumerate() {
            best = best.max(depth[i]);
            if let Some((l, r)) = n.children() {
                depth[l] = depth[i] + 1;
                depth[r] = depth[i] + 1;
            }
        }
        best
    }

    /// Checks the size bookkeeping: leaves hold one point, internal sizes add
    /// up and sibling sizes differ by at most one.
    pub fn check_sizes(&self) -> Result<()> {
        for (i, n) in self.nodes.iter().enumerate() {
            match n.kind {
                NodeKind::Leaf(_) if n.size != 1 => {
                    return Err(Error::decode(format!("leaf {i} has size {}", n.size)));
                }
                NodeKind::Internal { left, right } => {
                    let (a, b) = (self.nodes[left].size, self.nodes[right].size);
                    if a.checked_add(b) != Some(n.size) || a.abs_diff(b) > 1 {
                        return Err(Error::decode(format!("unbalanced sizes at node {i}")));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Same shape, ids, sizes and payloads; rectangles mapped through `f`.
    pub fn try_map<S>(&self, mut f: impl FnMut(&R) -> Result<S>) -> Result<Tree<S>> {
        let nodes = self
            .nodes
            .iter()
            .map(|n| Ok(Node { id: n.id, rect: f(&n.rect)?, size: n.size, kind: n.kind }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Tree { nodes })
    }
}

/// Counter-based 128-bit node identifiers: the `k`-th id is the first 16
/// bytes of `SHA-256(seed ‖ k)`.
#[derive(Debug, Clone)]
pub struct IdGen {
    seed: [u8; 32],
    counter: u64,
}

impl IdGen {
    pub fn new(seed: [u8; 32]) -> Self {
        Self { seed, counter: 0 }
    }

    pub fn from_u64(seed: u64) -> Self {
        let mut s = [0u8; 32];
        s[..8].copy_from_slice(&seed.to_be_bytes());
        Self::new(s)
    }

    pub fn next_id(&mut self) -> u128 {
        let d = hash_concat([&self.seed[..], &self.counter.to_be_bytes()]);
        self.counter += 1;
        u128::from_be_bytes(d.0[..16].try_into().unwrap())
    }
}

struct Builder<'a> {
    points: &'a [(Point, LeafPayload)],
    dim: usize,
    ids: &'a mut IdGen,
    nodes: Vec<Node<HyperRect>>,
}

impl Builder<'_> {
    fn cmp(&self, axis: usize, a: usize, b: usize) -> Ordering {
        self.points[a].0[axis].total_cmp(&self.points[b].0[axis]).then(a.cmp(&b))
    }

    fn build(&mut self, items: &mut [usize], rect: HyperRect, depth: usize) -> usize {
        let idx = self.nodes.len();
        let id = self.ids.next_id();
        if let [only] = items {
            let (p, payload) = &self.points[*only];
            self.nodes.push(Node {
                id,
                rect: HyperRect::degenerate(p.clone()),
                size: 1,
                kind: NodeKind::Leaf(*payload),
            });
            return idx;
        }
        let axis = depth % self.dim;
        let k = items.len().div_ceil(2);
        items.select_nth_unstable_by(k - 1, |&a, &b| self.cmp(axis, a, b));
        let median = self.points[items[k - 1]].0[axis];
        let (left_rect, right_rect) = rect.split(axis, median);
        self.nodes.push(Node {
            id,
            rect,
            size: items.len() as u64,
            kind: NodeKind::Internal { left: 0, right: 0 },
        });
        let (lo, hi) = items.split_at_mut(k);
        let left = self.build(lo, left_rect, depth + 1);
        let right = self.build(hi, right_rect, depth + 1);
        self.nodes[idx].kind = NodeKind::Internal { left, right };
        idx
    }
}

/// Build the plaintext kd-tree. Empty input yields the empty tree.
pub fn build(points: &[(Point, LeafPayload)], ids: &mut IdGen) -> Result<KdTree> {
    let Some((first, _)) = points.first() else {
        return Ok(Tree::empty());
    };
    let dim = first.dim();
    if let Some((p, _)) = points.iter().find(|(p, _)| p.dim() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, found: p.dim() });
    }
    let root_rect = HyperRect::bounding(points.iter().map(|(p, _)| p))?;
    let mut items: Vec<usize> = (0..points.len()).collect();
    let mut b = Builder { points, dim, ids, nodes: Vec::with_capacity(2 * points.len()) };
    b.build(&mut items, root_rect, 0);
    Ok(Tree { nodes: b.nodes })
}

/// Replace every rectangle with its ASPE encryption.
pub fn encrypt_tree(t: &KdTree, key: &AspeKey) -> Result<EncKdTree> {
    t.try_map(|r| aspe::encrypt_rect(key, r))
}
