use std::path::Path;

use crate::crypto::Digest;
use crate::error::{Error, Result};
use crate::wire::{Reader, Writer};

use super::block::Block;
use super::time_index::{TimeIndex, TimeRange};
use super::validate::{validate_block, validate_suffix, Rejection, ValidationContext};

/// Anything that can vote on a candidate block.
pub trait BlockValidator {
    fn validate(&self, block: &Block, prev: &Block) -> Result<(), Rejection>;
}

impl BlockValidator for ValidationContext<'_> {
    fn validate(&self, block: &Block, prev: &Block) -> Result<(), Rejection> {
        validate_block(block, prev, self)
    }
}

/// A validator with a predetermined vote, for exercising the approval rule.
#[derive(Debug, Clone, Copy)]
pub struct FixedVerdict(pub bool);

impl BlockValidator for FixedVerdict {
    fn validate(&self, _: &Block, _: &Block) -> Result<(), Rejection> {
        if self.0 {
            Ok(())
        } else {
            Err(Rejection::Index("forced rejection".into()))
        }
    }
}

/// Genesis followed by `B_1 … B_cur`, plus the time index over `B_1 …`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    blocks: Vec<Block>,
    time_index: TimeIndex,
}

impl Default for Chain {
    fn default() -> Self {
        Self::new()
    }
}

fn leaf_range(b: &Block) -> TimeRange {
    let hi = b.header.timestamp;
    let lo = b.body.min_log_ts().unwrap_or(hi).min(hi);
    TimeRange { lo, hi }
}

impl Chain {
    pub fn new() -> Self {
        Self { blocks: vec![Block::genesis()], time_index: TimeIndex::new() }
    }

    /// Rebuild from a block list whose first element must be the genesis block.
    /// Only structure is checked here; see [`Chain::verify_all`].
    pub fn from_blocks(blocks: Vec<Block>) -> Result<Self> {
        let mut it = blocks.into_iter();
        if it.next().as_ref() != Some(&Block::genesis()) {
            return Err(Error::decode("first block is not the genesis block"));
        }
        let mut chain = Self::new();
        for b in it {
            chain.push_unchecked(b)?;
        }
        Ok(chain)
    }

    /// Number of blocks after genesis.
    pub fn len(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Block `i`; 0 is genesis.
    pub fn block(&self, i: usize) -> Option<&Block> {
        self.blocks.get(i)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("genesis is always present")
    }

    pub fn tip_hash(&self) -> Digest {
        self.tip().hash()
    }

    pub fn time_index(&self) -> &TimeIndex {
        &self.time_index
    }

    /// Append without voting. Fails only if the block would break time order.
    pub fn push_unchecked(&mut self, b: Block) -> Result<()> {
        let idx = self.blocks.len();
        self.time_index.insert(idx, leaf_range(&b))?;
        self.blocks.push(b);
        Ok(())
    }

    /// Validate every block against its parent, genesis included.
    pub fn verify_all(&self, ctx: &ValidationContext<'_>) -> Result<(), (usize, Rejection)> {
        if self.blocks[0] != Block::genesis() {
            return Err((0, Rejection::Genesis));
        }
        validate_suffix(&self.blocks[1..], self.blocks[0].hash(), 0, ctx)
            .map_err(|(i, r)| (i + 1, r))
    }

    /// `u32 length ‖ block` for every block, genesis first.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        for b in &self.blocks {
            w.var_bytes(&b.to_bytes());
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let mut blocks = Vec::new();
        while r.remaining() > 0 {
            blocks.push(Block::from_bytes(r.var_bytes()?)?);
        }
        Self::from_blocks(blocks)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path.as_ref())
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_bytes(&bytes)
    }
}

/// Collect one vote per validator and append on a strict majority. An empty
/// roster never approves.
pub fn approve_and_append(
    chain: &mut Chain,
    block: Block,
    validators: &[&dyn BlockValidator],
) -> Result<bool> {
    let yes = validators.iter().filter(|v| v.validate(&block, chain.tip()).is_ok()).count();
    if 2 * yes <= validators.len() {
        return Ok(false);
    }
    chain.push_unchecked(block)?;
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::Signature;
    use crate::ledger::BlockHeader;

    fn dummy(prev: Digest, ts: u64) -> Block {
        let mut b = Block::genesis();
        b.header = BlockHeader {
            prev_hash: prev,
            imt_root_sig: Signature::EMPTY,
            difficulty: 0,
            timestamp: ts,
            nonce: 0,
        };
        b
    }

    fn votes(pattern: &[bool]) -> Vec<FixedVerdict> {
        pattern.iter().map(|&v| FixedVerdict(v)).collect()
    }

    fn run(pattern: &[bool]) -> bool {
        let mut c = Chain::new();
        let vs = votes(pattern);
        let refs: Vec<&dyn BlockValidator> = vs.iter().map(|v| v as _).collect();
        let b = dummy(c.tip_hash(), 5);
        let ok = approve_and_append(&mut c, b, &refs).unwrap();
        assert_eq!(c.len(), usize::from(ok));
        assert_eq!(c.time_index().len(), usize::from(ok));
        ok
    }

    #[test]
    fn strict_majority() {
        assert!(run(&[true; 10]));
        assert!(!run(&[true, true, true, true, true, false, false, false, false, false]));
        assert!(run(&[true, true, true, true, false, false, false]));
        assert!(!run(&[true, false]));
        assert!(!run(&[]));
    }

    #[test]
    fn persistence_round_trip() {
        let mut c = Chain::new();
        for ts in [3, 7, 7, 20] {
            let b = dummy(c.tip_hash(), ts);
            c.push_unchecked(b).unwrap();
        }
        let back = Chain::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        assert!(Chain::from_bytes(&[]).is_err());
        let mut bad = c.to_bytes();
        bad.truncate(bad.len() - 1);
        assert!(Chain::from_bytes(&bad).is_err());
    }
}
