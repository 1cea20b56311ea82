use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::crypto::{KeyPair, KeyRegistry, NodeId};
use crate::error::{Error, Result};
use crate::kdtree::Schema;
use crate::ledger::{approve_and_append, mine, Block, BlockHeader, BlockValidator, Chain, ValidationContext};
use crate::search::{DeviceSecret, QuerierKeys};

use super::cloud::CloudStore;
use super::device::{cloud_keypair, flush, CommFile, Device, DeviceKeys};

/// Publishes explicit file batches as blocks, skipping the communication
/// schedule. Useful for fixtures and benchmarks.
pub struct LedgerBuilder {
    schema: Schema,
    difficulty: u8,
    devices: Vec<Device>,
    signers: Vec<KeyPair>,
    cloud_key: KeyPair,
    cloud: CloudStore,
    registry: KeyRegistry,
    chain: Chain,
    rng: ChaCha20Rng,
}

impl LedgerBuilder {
    pub fn new(seed: u64, devices: usize, schema: Schema, difficulty: u8) -> Result<Self> {
        schema.validate()?;
        let keys = (0..devices as u64)
            .map(|i| DeviceKeys::derive(seed, i, schema.dim()))
            .collect::<Result<Vec<_>>>()?;
        let cloud_key = cloud_keypair(seed);
        let mut registry = KeyRegistry::new();
        registry.insert(NodeId::CLOUD, cloud_key.public());
        for k in &keys {
            registry.insert(k.id(), k.signing.public());
        }
        Ok(Self {
            signers: keys.iter().map(|k| k.signing.clone()).collect(),
            devices: keys.into_iter().map(|k| Device::new(k, u64::MAX)).collect(),
            schema,
            difficulty,
            cloud_key,
            cloud: CloudStore::new(),
            registry,
            chain: Chain::new(),
            rng: ChaCha20Rng::seed_from_u64(seed),
        })
    }

    /// Flush `files` as device `device` at `upload_ts`, mine the block and
    /// append it with every device voting. Returns the block's position.
    pub fn publish(&mut self, device: usize, files: Vec<CommFile>, upload_ts: u64) -> Result<usize> {
        let dev = self
            .devices
            .get_mut(device)
            .ok_or_else(|| Error::InvalidArgument(format!("no device {device}")))?;
        for f in files {
            dev.push(f)?;
        }
        let payload = flush(
            dev,
            &mut self.cloud,
            &self.cloud_key,
            &self.signers,
            &self.schema,
            upload_ts,
            &mut self.rng,
        )?;
        let header = mine(&BlockHeader {
            prev_hash: self.chain.tip_hash(),
            imt_root_sig: payload.imt_root_sig,
            difficulty: self.difficulty,
            timestamp: upload_ts,
            nonce: 0,
        })?
        .header;
        let ctx = ValidationContext {
            keys: &self.registry,
            cloud: NodeId::CLOUD,
            difficulty: self.difficulty,
        };
        let voters: Vec<&dyn BlockValidator> = self.devices.iter().map(|_| &ctx as _).collect();
        let block = Block { header, body: payload.body };
        if !approve_and_append(&mut self.chain, block, &voters)? {
            return Err(Error::InvalidArgument("block rejected by the validators".into()));
        }
        Ok(self.chain.len())
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn device_id(&self, i: usize) -> NodeId {
        self.devices[i].id()
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn cloud(&self) -> &CloudStore {
        &self.cloud
    }

    pub fn cloud_mut(&mut self) -> &mut CloudStore {
        &mut self.cloud
    }

    pub fn registry(&self) -> &KeyRegistry {
        &self.registry
    }

    pub fn validation_context(&self) -> ValidationContext<'_> {
        ValidationContext { keys: &self.registry, cloud: NodeId::CLOUD, difficulty: self.difficulty }
    }

    pub fn querier_keys(&self) -> QuerierKeys {
        QuerierKeys::from_devices(self.devices.iter().map(|d| &d.keys))
    }
}

impl QuerierKeys {
    /// Copies of the ASPE and symmetric keys of the given devices.
    pub fn from_devices<'a>(keys: impl IntoIterator<Item = &'a DeviceKeys>) -> Self {
        let mut q = Self::new();
        for k in keys {
            q.insert(k.id(), DeviceSecret { aspe: k.aspe.clone(), sym: k.sym.clone() });
        }
        q
    }
}
