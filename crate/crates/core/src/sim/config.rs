use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kdtree::Schema;
use crate::ledger::MAX_DIFFICULTY;

fn default_step_seconds() -> u64 {
    60
}

fn default_start_ts() -> u64 {
    1_700_000_000
}

fn default_file_size() -> (usize, usize) {
    (64, 256)
}

fn default_miners() -> usize {
    3
}

fn default_threads() -> usize {
    1
}

/// Cloud-side misbehaviour scheduled for one upload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultKind {
    /// The stored ciphertext disappears.
    Drop,
    /// One byte (position taken modulo the ciphertext length) is flipped.
    Corrupt { byte: usize },
    /// The cloud refuses the receipt and discards the whole upload.
    DenyReceipt,
}

/// Fault applied to file `file` of flush attempt `flush` by device `device`
/// (ordinals count from 0; `file` is ignored for `deny_receipt`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub device: usize,
    pub flush: u64,
    #[serde(default)]
    pub file: usize,
    #[serde(flatten)]
    pub kind: FaultKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub devices: usize,
    /// Buffer capacity per device, in plaintext file bytes.
    pub storage_cap: u64,
    pub steps: u64,
    #[serde(default = "default_step_seconds")]
    pub step_seconds: u64,
    #[serde(default = "default_start_ts")]
    pub start_ts: u64,
    pub difficulty: u8,
    /// Expected files per edge per step: `floor(rate)` always, one more with
    /// probability `fract(rate)`.
    pub rate: f64,
    /// Inclusive range of file body sizes.
    #[serde(default = "default_file_size")]
    pub file_size: (usize, usize),
    /// Size of the miner set drawn each round.
    #[serde(default = "default_miners")]
    pub miners: usize,
    /// Worker threads for proof-of-work.
    #[serde(default = "default_threads")]
    pub mining_threads: usize,
    /// Device pairs that communicate.
    pub topology: Vec<(usize, usize)>,
    pub schema: Schema,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
}

fn bad(key: &str, why: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key}: {why}"))
}

impl ScenarioConfig {
    /// Semantic checks. Error messages start with the offending key.
    pub fn validate(&self) -> Result<()> {
        if self.devices == 0 {
            return Err(bad("devices", "at least one device is required"));
        }
        if self.step_seconds == 0 {
            return Err(bad("step_seconds", "must be positive"));
        }
        if self.difficulty > MAX_DIFFICULTY {
            return Err(bad("difficulty", format!("at most {MAX_DIFFICULTY}")));
        }
        if !(self.rate.is_finite() && self.rate >= 0.0) {
            return Err(bad("rate", "must be a non-negative number"));
        }
        let (lo, hi) = self.file_size;
        if lo == 0 || lo > hi {
            return Err(bad("file_size", "need 1 <= min <= max"));
        }
        if (hi as u64) > self.storage_cap {
            return Err(bad("storage_cap", "smaller than the largest file"));
        }
        if self.miners == 0 {
            return Err(bad("miners", "must be positive"));
        }
        if self.mining_threads == 0 {
            return Err(bad("mining_threads", "must be positive"));
        }
        for &(a, b) in &self.topology {
            if a >= self.devices || b >= self.devices {
                return Err(bad("topology", format!("edge ({a}, {b}) names a missing device")));
            }
            if a == b {
                return Err(bad("topology", format!("self loop on device {a}")));
            }
        }
        self.schema.validate().map_err(|e| bad("schema", e))?;
        for f in &self.faults {
            if f.device >= self.devices {
                return Err(bad("faults", format!("device {} does not exist", f.device)));
            }
        }
        let end = self
            .steps
            .checked_add(1)
            .and_then(|s| s.checked_mul(self.step_seconds))
            .and_then(|d| d.checked_add(self.start_ts));
        if end.is_none() {
            return Err(bad("steps", "simulated clock overflows"));
        }
        Ok(())
    }
}
