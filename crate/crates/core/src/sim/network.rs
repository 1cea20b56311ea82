use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::crypto::{hash, hash_concat, Digest, KeyPair, KeyRegistry, NodeId};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::kdtree::{digitize, AttrKind, AttrValue, Schema};
use crate::ledger::{
    approve_and_append, mine_parallel, Block, BlockHeader, BlockValidator, Chain, ValidationContext,
};

use super::cloud::{CloudFault, CloudStore};
use super::config::{FaultKind, ScenarioConfig};
use super::device::{cloud_keypair, flush, BroadcastPayload, CommFile, Device, DeviceKeys};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    File,
    Overflow,
    Flush,
    FlushDenied,
    CloudDrop,
    CloudCorrupt,
    Deferred,
    Mined,
    Appended,
    Rejected,
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Event {
    pub event: EventKind,
    pub ts: u64,
    pub actor: String,
    pub digest: Option<String>,
}

impl Event {
    fn new(event: EventKind, ts: u64, actor: NodeId, digest: Option<Digest>) -> Self {
        Self { event, ts, actor: actor.to_string(), digest: digest.map(|d| d.to_hex()) }
    }
}

/// Plaintext record of a file that ended up on chain, for replay oracles.
#[derive(Debug, Clone, PartialEq)]
pub struct FileRecord {
    /// Chain position of the block holding the log.
    pub block: usize,
    /// Position of the log inside the block.
    pub log: usize,
    pub owner: NodeId,
    pub peer: NodeId,
    pub ts: u64,
    pub point: Point,
    pub body: Vec<u8>,
    pub cipher_ref: Digest,
}

struct Pending {
    payload: BroadcastPayload,
    files: Vec<FileRecord>,
}

pub struct Simulation {
    cfg: ScenarioConfig,
    devices: Vec<Device>,
    signers: Vec<KeyPair>,
    cloud_key: KeyPair,
    cloud: CloudStore,
    chain: Chain,
    registry: KeyRegistry,
    pending: VecDeque<Pending>,
    events: Vec<Event>,
    records: Vec<FileRecord>,
    comm_rng: ChaCha20Rng,
    nonce_rng: ChaCha20Rng,
    elect_rng: ChaCha20Rng,
    now: u64,
    flushed_files: usize,
}

fn sub_rng(seed: u64, tag: &[u8]) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(hash_concat([tag, &seed.to_be_bytes()]).0)
}

/// Uniform subset of the devices not busy this round, in seeded order, of at
/// most `count` members. Empty when every device is busy.
pub fn elect_miners(devices: &[Device], count: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut free: Vec<usize> = (0..devices.len()).filter(|&i| !devices[i].busy).collect();
    free.shuffle(rng);
    free.truncate(count);
    free
}

fn random_attrs(schema: &Schema, rng: &mut impl Rng) -> Vec<AttrValue> {
    schema
        .attributes
        .iter()
        .map(|a| match &a.kind {
            AttrKind::Numeric { min, max } if min == max => AttrValue::Num(*min),
            AttrKind::Numeric { min, max } => AttrValue::Num(rng.gen_range(*min..=*max)),
            AttrKind::Categorical { values } => {
                AttrValue::Cat(values[rng.gen_range(0..values.len())].clone())
            }
        })
        .collect()
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let dim = cfg.schema.dim();
        let keys = (0..cfg.devices as u64)
            .map(|i| DeviceKeys::derive(cfg.seed, i, dim))
            .collect::<Result<Vec<_>>>()?;
        let cloud_key = cloud_keypair(cfg.seed);
        let mut registry = KeyRegistry::new();
        registry.insert(NodeId::CLOUD, cloud_key.public());
        for k in &keys {
            registry.insert(k.id(), k.signing.public());
        }
        let signers = keys.iter().map(|k| k.signing.clone()).collect();
        let devices = keys.into_iter().map(|k| Device::new(k, cfg.storage_cap)).collect();
        Ok(Self {
            comm_rng: sub_rng(cfg.seed, b"comm"),
            nonce_rng: sub_rng(cfg.seed, b"nonce"),
            elect_rng: sub_rng(cfg.seed, b"elect"),
            now: cfg.start_ts,
            cfg,
            devices,
            signers,
            cloud_key,
            cloud: CloudStore::new(),
            chain: Chain::new(),
            registry,
            pending: VecDeque::new(),
            events: Vec::new(),
            records: Vec::new(),
            flushed_files: 0,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn devices(&self) -> &[Device] {
        &self.devices
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn cloud(&self) -> &CloudStore {
        &self.cloud
    }

    pub fn registry(&self) -> &KeyRegistry {
        &self.registry
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Every file whose log made it into an appended block.
    pub fn records(&self) -> &[FileRecord] {
        &self.records
    }

    /// Files carried by successful flushes so far.
    pub fn flushed_files(&self) -> usize {
        self.flushed_files
    }

    pub fn pending_blocks(&self) -> usize {
        self.pending.len()
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn querier_keys(&self) -> crate::search::QuerierKeys {
        crate::search::QuerierKeys::from_devices(self.devices.iter().map(|d| &d.keys))
    }

    pub fn validation_context(&self) -> ValidationContext<'_> {
        ValidationContext {
            keys: &self.registry,
            cloud: NodeId::CLOUD,
            difficulty: self.cfg.difficulty,
        }
    }

    /// Generate this step's files over every topology edge and hand each to
    /// both endpoints, flushing buffers that would overflow.
    pub fn step_communication(&mut self) -> Result<()> {
        let whole = self.cfg.rate.floor() as u64;
        let frac = self.cfg.rate - self.cfg.rate.floor();
        for e in 0..self.cfg.topology.len() {
            let (a, b) = self.cfg.topology[e];
            let extra = u64::from(frac > 0.0 && self.comm_rng.gen_bool(frac));
            for _ in 0..whole + extra {
                let (s, r) = if self.comm_rng.gen_bool(0.5) { (a, b) } else { (b, a) };
                let len = self.comm_rng.gen_range(self.cfg.file_size.0..=self.cfg.file_size.1);
                let mut body = vec![0u8; len];
                self.comm_rng.fill(&mut body[..]);
                let f = CommFile {
                    sender: NodeId::device(s as u64),
                    receiver: NodeId::device(r as u64),
                    ts: self.now,
                    attrs: random_attrs(&self.cfg.schema, &mut self.comm_rng),
                    body,
                };
                self.events.push(Event::new(EventKind::File, self.now, f.sender, Some(hash(&f.body))));
                self.deliver(s, f.clone())?;
                self.deliver(r, f)?;
            }
        }
        Ok(())
    }

    fn deliver(&mut self, i: usize, f: CommFile) -> Result<()> {
        if !self.devices[i].fits(&f) {
            self.flush_device(i)?;
        }
        if self.devices[i].fits(&f) {
            self.devices[i].push(f)
        } else {
            let id = self.devices[i].id();
            self.events.push(Event::new(EventKind::Overflow, self.now, id, Some(hash(&f.body))));
            Ok(())
        }
    }

    /// Flush device `i` at the current time and queue its block. A denied
    /// receipt is logged and leaves the buffer in place.
    pub fn flush_device(&mut self, i: usize) -> Result<()> {
        let dev = &mut self.devices[i];
        if dev.buffer().is_empty() {
            return Ok(());
        }
        dev.busy = true;
        let ordinal = dev.flush_attempts();
        let id = dev.id();
        let faults: Vec<_> = self
            .cfg
            .faults
            .iter()
            .filter(|f| f.device == i && f.flush == ordinal)
            .cloned()
            .collect();
        if faults.iter().any(|f| f.kind == FaultKind::DenyReceipt) {
            self.cloud.deny_next_receipt();
        }
        let files: Vec<CommFile> = dev.buffer().to_vec();
        let payload = match flush(
            dev,
            &mut self.cloud,
            &self.cloud_key,
            &self.signers,
            &self.cfg.schema,
            self.now,
            &mut self.nonce_rng,
        ) {
            Ok(p) => p,
            Err(Error::ReceiptDenied) => {
                self.events.push(Event::new(EventKind::FlushDenied, self.now, id, None));
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        for f in &faults {
            let Some(log) = payload.body.logs.get(f.file) else { continue };
            let (fault, kind) = match f.kind {
                FaultKind::Drop => (CloudFault::Drop, EventKind::CloudDrop),
                FaultKind::Corrupt { byte } => (CloudFault::Corrupt { byte }, EventKind::CloudCorrupt),
                FaultKind::DenyReceipt => continue,
            };
            self.cloud.inject(log.cipher_ref, fault);
            self.events.push(Event::new(kind, self.now, NodeId::CLOUD, Some(log.cipher_ref)));
        }
        let root = payload.body.imt.root_hash();
        self.events.push(Event::new(EventKind::Flush, self.now, id, root));
        self.flushed_files += files.len();
        let records = files
            .into_iter()
            .zip(&payload.body.logs)
            .enumerate()
            .map(|(k, (f, log))| {
                Ok(FileRecord {
                    block: 0,
                    log: k,
                    owner: id,
                    peer: f.peer_of(id),
                    ts: f.ts,
                    point: digitize(&f.attrs, &self.cfg.schema)?,
                    body: f.body,
                    cipher_ref: log.cipher_ref,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        self.pending.push_back(Pending { payload, files: records });
        Ok(())
    }

    /// Mine, vote on and append queued blocks in order. Stops with a deferral
    /// event when no device is free to mine.
    pub fn mine_pending(&mut self) -> Result<()> {
        while let Some(p) = self.pending.front() {
            let miners = elect_miners(&self.devices, self.cfg.miners, &mut self.elect_rng);
            let Some(&winner) = miners.first() else {
                let who = p.payload.body.device_id;
                self.events.push(Event::new(EventKind::Deferred, self.now, who, None));
                return Ok(());
            };
            let template = BlockHeader {
                prev_hash: self.chain.tip_hash(),
                imt_root_sig: p.payload.imt_root_sig,
                difficulty: self.cfg.difficulty,
                timestamp: p.payload.body.upload_ts,
                nonce: 0,
            };
            let header = mine_parallel(&template, self.cfg.mining_threads)?.header;
            let block = Block { header, body: p.payload.body.clone() };
            let hash = block.hash();
            let miner = self.devices[winner].id();
            self.events.push(Event::new(EventKind::Mined, self.now, miner, Some(hash)));

            let ctx = ValidationContext {
                keys: &self.registry,
                cloud: NodeId::CLOUD,
                difficulty: self.cfg.difficulty,
            };
            let validators: Vec<&dyn BlockValidator> =
                (0..self.devices.len()).map(|_| &ctx as &dyn BlockValidator).collect();
            let appended = approve_and_append(&mut self.chain, block, &validators)?;
            let p = self.pending.pop_front().expect("front exists");
            if appended {
                let idx = self.chain.len();
                self.records.extend(p.files.into_iter().map(|f| FileRecord { block: idx, ..f }));
                self.events.push(Event::new(EventKind::Appended, self.now, miner, Some(hash)));
            } else {
                self.events.push(Event::new(EventKind::Rejected, self.now, miner, Some(hash)));
            }
        }
        Ok(())
    }

    fn start_round(&mut self, step: u64) {
        self.now = self.cfg.start_ts + step * self.cfg.step_seconds;
        for d in &mut self.devices {
            d.busy = false;
        }
    }

    /// One round: communication, then mining.
    pub fn step(&mut self, step: u64) -> Result<()> {
        self.start_round(step);
        self.step_communication()?;
        self.mine_pending()
    }

    /// Run every configured step, flush all buffers and drain the block queue.
    pub fn run(&mut self) -> Result<()> {
        for s in 0..self.cfg.steps {
            self.step(s)?;
        }
        let mut round = self.cfg.steps;
        self.start_round(round);
        for i in 0..self.devices.len() {
            self.flush_device(i)?;
        }
        self.mine_pending()?;
        while !self.pending.is_empty() {
            round += 1;
            self.start_round(round);
            self.mine_pending()?;
        }
        Ok(())
    }
}

/// Build and run a scenario.
pub fn simulate(cfg: ScenarioConfig) -> Result<Simulation> {
    let mut sim = Simulation::new(cfg)?;
    sim.run()?;
    Ok(sim)
}
