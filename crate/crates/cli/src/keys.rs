//! `keys.json`: public keys for validation plus the querier's device secrets.

use std::path::Path;

use iotledger::aspe::AspeKey;
use iotledger::crypto::{KeyRegistry, PublicKey, SymKey};
use iotledger::kdtree::Schema;
use iotledger::search::{DeviceSecret, QuerierKeys};
use iotledger::sim::Simulation;
use iotledger::NodeId;
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceEntry {
    pub id: String,
    pub public: String,
    pub aspe: String,
    pub sym: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeysFile {
    pub difficulty: u8,
    pub cloud: String,
    pub schema: Schema,
    pub devices: Vec<DeviceEntry>,
}

/// Accepts `cloud`, `d<N>` or the 32-digit hex form.
pub fn parse_node_id(s: &str) -> Result<NodeId, Failure> {
    if s == "cloud" {
        return Ok(NodeId::CLOUD);
    }
    if let Some(n) = s.strip_prefix('d').and_then(|n| n.parse::<u64>().ok()) {
        return Ok(NodeId::device(n));
    }
    let mut id = [0u8; 16];
    hex::decode_to_slice(s, &mut id).map_err(|_| Failure::Validation(format!("bad node id {s:?}")))?;
    Ok(NodeId(id))
}

fn unhex<const N: usize>(what: &str, s: &str) -> Result<[u8; N], Failure> {
    let mut out = [0u8; N];
    hex::decode_to_slice(s, &mut out).map_err(|e| Failure::Validation(format!("{what}: {e}")))?;
    Ok(out)
}

impl KeysFile {
    pub fn from_simulation(sim: &Simulation) -> Self {
        let cloud = sim.registry().get(&NodeId::CLOUD).expect("cloud key is registered");
        Self {
            difficulty: sim.config().difficulty,
            cloud: hex::encode(cloud.to_bytes()),
            schema: sim.config().schema.clone(),
            devices: sim
                .devices()
                .iter()
                .map(|d| DeviceEntry {
                    id: d.id().to_string(),
                    public: hex::encode(d.keys.signing.public().to_bytes()),
                    aspe: hex::encode(d.keys.aspe.to_bytes()),
                    sym: hex::encode(d.keys.sym.0),
                })
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(self).expect("plain data serializes");
        std::fs::write(path, text + "\n").map_err(|e| Failure::io(path, e))
    }

    pub fn registry(&self) -> Result<KeyRegistry, Failure> {
        let mut reg = KeyRegistry::new();
        reg.insert(NodeId::CLOUD, PublicKey::from_bytes(&unhex("cloud", &self.cloud)?)?);
        for d in &self.devices {
            reg.insert(parse_node_id(&d.id)?, PublicKey::from_bytes(&unhex(&d.id, &d.public)?)?);
        }
        Ok(reg)
    }

    pub fn querier(&self) -> Result<QuerierKeys, Failure> {
        let mut q = QuerierKeys::new();
        for d in &self.devices {
            let aspe = hex::decode(&d.aspe).map_err(|e| Failure::Validation(format!("{}: {e}", d.id)))?;
            let secret = DeviceSecret { aspe: AspeKey::from_bytes(&aspe)?, sym: SymKey(unhex(&d.id, &d.sym)?) };
            q.insert(parse_node_id(&d.id)?, secret);
        }
        Ok(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_ids() {
        assert_eq!(parse_node_id("d7").unwrap(), NodeId::device(7));
        assert_eq!(parse_node_id("cloud").unwrap(), NodeId::CLOUD);
        let raw = NodeId([0xab; 16]);
        assert_eq!(parse_node_id(&raw.to_string()).unwrap(), raw);
        assert!(parse_node_id("d").is_err());
        assert!(parse_node_id("zz").is_err());
    }
}
