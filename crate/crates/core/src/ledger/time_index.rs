//! Unbalanced time index over blocks.
//!
//! Each insert creates a new root whose left child is the previous root and
//! whose right child is the new leaf, so block `cur` sits at depth 1 and
//! older blocks sink one level per insert.

use crate::error::{Error, Result};

/// Closed interval of unix seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeRange {
    pub lo: u64,
    pub hi: u64,
}

impl TimeRange {
    pub fn new(lo: u64, hi: u64) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidArgument(format!("time range [{lo}, {hi}] is inverted")));
        }
        Ok(Self { lo, hi })
    }

    pub fn all() -> Self {
        Self { lo: 0, hi: u64::MAX }
    }

    pub fn contains(&self, t: u64) -> bool {
        self.lo <= t && t <= self.hi
    }

    pub fn intersects(&self, o: &TimeRange) -> bool {
        self.lo <= o.hi && o.lo <= self.hi
    }

    fn union(&self, o: &TimeRange) -> TimeRange {
        TimeRange { lo: self.lo.min(o.lo), hi: self.hi.max(o.hi) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TiKind {
    Leaf { block: usize },
    Internal { left: usize, right: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct TiNode {
    range: TimeRange,
    kind: TiKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TimeIndex {
    nodes: Vec<TiNode>,
    root: Option<usize>,
    leaves: usize,
}

/// Result of [`TimeIndex::locate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Located {
    /// Block references in ascending order.
    pub blocks: Vec<usize>,
    /// Index nodes whose range was read, the root included.
    pub nodes_visited: usize,
}

impl TimeIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.leaves
    }

    pub fn is_empty(&self) -> bool {
        self.leaves == 0
    }

    pub fn root_range(&self) -> Option<TimeRange> {
        self.root.map(|r| self.nodes[r].range)
    }

    /// Add block `block` covering `range`. `range.hi` (the block time) must
    /// not precede the previous insert's.
    pub fn insert(&mut self, block: usize, range: TimeRange) -> Result<()> {
        if range.lo > range.hi {
            return Err(Error::InvalidArgument("inverted leaf range".into()));
        }
        let leaf = self.nodes.len();
        self.nodes.push(TiNode { range, kind: TiKind::Leaf { block } });
        self.root = Some(match self.root {
            None => leaf,
            Some(old) => {
                let last = self.last_hi(old);
                if range.hi < last {
                    return Err(Error::OutOfOrder { last, got: range.hi });
                }
                self.nodes.push(TiNode {
                    range: self.nodes[old].range.union(&range),
                    kind: TiKind::Internal { left: old, right: leaf },
                });
                leaf + 1
            }
        });
        self.leaves += 1;
        Ok(())
    }

    fn last_hi(&self, root: usize) -> u64 {
        match self.nodes[root].kind {
            TiKind::Leaf { .. } => self.nodes[root].range.hi,
            TiKind::Internal { right, .. } => self.nodes[right].range.hi,
        }
    }

    /// Blocks whose range intersects `q`. Only nodes whose range intersects
    /// are descended into; the root is always read.
    pub fn locate(&self, q: &TimeRange) -> Located {
        let mut blocks = Vec::new();
        let mut visited = 0;
        let mut stack: Vec<usize> = self.root.into_iter().collect();
        while let Some(i) = stack.pop() {
            visited += 1;
            let n = &self.nodes[i];
            if !n.range.intersects(q) {
                continue;
            }
            match n.kind {
                TiKind::Leaf { block } => blocks.push(block),
                TiKind::Internal { left, right } => {
                    for c in [left, right] {
                        if self.nodes[c].range.intersects(q) {
                            stack.push(c);
                        }
                    }
                }
            }
        }
        blocks.sort_unstable();
        Located { blocks, nodes_visited: visited }
    }

    /// Depth of the leaf holding `block` (root at depth 0).
    pub fn depth_of(&self, block: usize) -> Option<usize> {
        let mut depth = 0;
        let mut cur = self.root?;
        loop {
            match self.nodes[cur].kind {
                TiKind::Leaf { block: b } => return (b == block).then_some(depth),
                TiKind::Internal { left, right } => {
                    if matches!(self.nodes[right].kind, TiKind::Leaf { block: b } if b == block) {
                        return Some(depth + 1);
                    }
                    cur = left;
                    depth += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spine(n: u64) -> TimeIndex {
        let mut ti = TimeIndex::new();
        for b in 1..=n {
            ti.insert(b as usize, TimeRange::new(b * 10 - 5, b * 10).unwrap()).unwrap();
        }
        ti
    }

    #[test]
    fn spine_depths() {
        let ti = spine(7);
        assert_eq!(ti.depth_of(7), Some(1));
        assert_eq!(ti.depth_of(1), Some(6));
        assert_eq!(ti.depth_of(2), Some(6));
        assert_eq!(ti.depth_of(99), None);
    }

    #[test]
    fn full_and_disjoint_ranges() {
        let ti = spine(7);
        assert_eq!(ti.locate(&TimeRange::all()).blocks, (1..=7).collect::<Vec<_>>());
        let after = ti.locate(&TimeRange::new(71, 100).unwrap());
        assert!(after.blocks.is_empty());
        assert_eq!(after.nodes_visited, 1);
        assert_eq!(TimeIndex::new().locate(&TimeRange::all()).nodes_visited, 0);
    }

    #[test]
    fn newest_block_is_hot() {
        for n in [1, 2, 10, 1000, 10_000] {
            let ti = spine(n);
            let hit = ti.locate(&TimeRange::new(n * 10, n * 10).unwrap());
            assert_eq!(hit.blocks, vec![n as usize]);
            assert!(hit.nodes_visited <= 2, "n={n}: {}", hit.nodes_visited);
        }
    }

    #[test]
    fn locate_matches_linear_scan() {
        let ti = spine(40);
        for lo in (0..420).step_by(13) {
            for width in [0, 4, 9, 30, 200] {
                let q = TimeRange::new(lo, lo + width).unwrap();
                let want: Vec<usize> = (1..=40u64)
                    .filter(|b| TimeRange { lo: b * 10 - 5, hi: b * 10 }.intersects(&q))
                    .map(|b| b as usize)
                    .collect();
                assert_eq!(ti.locate(&q).blocks, want);
            }
        }
    }

    #[test]
    fn out_of_order_rejected() {
        let mut ti = spine(3);
        assert_eq!(
            ti.insert(4, TimeRange::new(0, 29).unwrap()),
            Err(Error::OutOfOrder { last: 30, got: 29 })
        );
        ti.insert(4, TimeRange::new(0, 30).unwrap()).unwrap();
        assert_eq!(ti.len(), 4);
    }
}
