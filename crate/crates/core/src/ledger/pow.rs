use std::sync::atomic::{AtomicU64, Ordering};

use sha2::{Digest as _, Sha256};

use crate::crypto::Digest;
use crate::error::{Error, Result};

use super::block::{BlockHeader, HEADER_LEN};

/// Highest difficulty accepted for mining.
pub const MAX_DIFFICULTY: u8 = 32;

const PREFIX_LEN: usize = HEADER_LEN - 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MiningOutcome {
    pub header: BlockHeader,
    /// Hashes computed, `nonce + 1` for a sequential scan.
    pub attempts: u64,
}

pub fn pow_ok(header: &BlockHeader) -> bool {
    header.hash().leading_zeros() >= u32::from(header.difficulty)
}

fn check(difficulty: u8) -> Result<()> {
    if difficulty > MAX_DIFFICULTY {
        return Err(Error::DifficultyTooHigh(difficulty));
    }
    Ok(())
}

fn prefix_state(template: &BlockHeader) -> Sha256 {
    let mut h = Sha256::new();
    h.update(&template.to_bytes()[..PREFIX_LEN]);
    h
}

fn hit(state: &Sha256, nonce: u64, difficulty: u32) -> bool {
    let mut h = state.clone();
    h.update(nonce.to_be_bytes());
    Digest(h.finalize().into()).leading_zeros() >= difficulty
}

/// Scan nonces 0, 1, 2, … and return the first header meeting
/// `template.difficulty`. Everything but the nonce comes from `template`.
pub fn mine(template: &BlockHeader) -> Result<MiningOutcome> {
    check(template.difficulty)?;
    let state = prefix_state(template);
    let d = u32::from(template.difficulty);
    let nonce = (0..=u64::MAX)
        .find(|&n| hit(&state, n, d))
        .ok_or_else(|| Error::InvalidArgument("nonce space exhausted".into()))?;
    Ok(MiningOutcome { header: BlockHeader { nonce, ..*template }, attempts: nonce + 1 })
}

/// Multi-threaded [`mine`]. Worker `k` tries nonces `k, k + w, k + 2w, …`;
/// the result is always the lowest satisfying nonce, so it matches [`mine`].
/// `attempts` reports the sequential-equivalent count.
pub fn mine_parallel(template: &BlockHeader, workers: usize) -> Result<MiningOutcome> {
    check(template.difficulty)?;
    let workers = workers.max(1) as u64;
    if workers == 1 {
        return mine(template);
    }
    let state = prefix_state(template);
    let d = u32::from(template.difficulty);
    let best = AtomicU64::new(u64::MAX);
    std::thread::scope(|s| {
        for k in 0..workers {
            let (state, best) = (&state, &best);
            s.spawn(move || {
                let mut n = k;
                while n < best.load(Ordering::Relaxed) {
                    if hit(state, n, d) {
                        best.fetch_min(n, Ordering::Relaxed);
                        return;
                    }
                    n = match n.checked_add(workers) {
                        Some(n) => n,
                        None => return,
                    };
                }
            });
        }
    });
    let nonce = best.into_inner();
    if nonce == u64::MAX && !hit(&state, nonce, d) {
        return Err(Error::InvalidArgument("nonce space exhausted".into()));
    }
    Ok(MiningOutcome { header: BlockHeader { nonce, ..*template }, attempts: nonce + 1 })
}

/// True if some nonce below `header.nonce` also meets the target, i.e. the
/// header was not produced by a scan from zero.
pub(crate) fn lower_nonce_exists(header: &BlockHeader) -> bool {
    let state = prefix_state(header);
    let d = u32::from(header.difficulty);
    (0..header.nonce).any(|n| hit(&state, n, d))
}
