//! `simulate`: run a scenario and persist the chain, cloud, events and keys.

use std::io::Write;
use std::path::Path;

use iotledger::sim::{simulate, ScenarioConfig};
use serde::Serialize;

use crate::keys::KeysFile;
use crate::Failure;

pub const CHAIN_FILE: &str = "chain.bin";
pub const CLOUD_FILE: &str = "cloud.bin";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const KEYS_FILE: &str = "keys.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimulateSummary {
    pub blocks: usize,
    pub logs: usize,
    pub devices: usize,
    pub events: usize,
}

/// First line of `text` that assigns `key`, 1-based.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
            || l.trim_end() == format!("[[{key}]]")
            || l.trim_end() == format!("[{key}]")
    })
    .map(|i| i + 1)
}

/// Parse and validate a scenario. Errors name the key and, when it appears
/// in the text, its line.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, Failure> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Failure::Validation(e.to_string()))?;
    if let Err(e) = cfg.validate() {
        let msg = match e {
            iotledger::Error::Config(m) => m,
            other => other.to_string(),
        };
        let key = msg.split(':').next().unwrap_or_default();
        return Err(Failure::Validation(match line_of(text, key) {
            Some(n) => format!("line {n}: {msg}"),
            None => msg,
        }));
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    parse_config(&text).map_err(|f| match f {
        Failure::Validation(m) => Failure::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Run the scenario at `config` and write its artifacts into the `out` directory.
pub fn cmd_simulate(config: &Path, out: &Path) -> Result<SimulateSummary, Failure> {
    let cfg = load_config(config)?;
    let sim = simulate(cfg)?;
    std::fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;

    let chain = out.join(CHAIN_FILE);
    sim.chain().save(&chain).map_err(|e| Failure::io(&chain, e))?;
    let cloud = out.join(CLOUD_FILE);
    std::fs::write(&cloud, sim.cloud().to_bytes()).map_err(|e| Failure::io(&cloud, e))?;
    KeysFile::from_simulation(&sim).save(&out.join(KEYS_FILE))?;

    let events = out.join(EVENTS_FILE);
    let mut w = std::io::BufWriter::new(std::fs::File::create(&events).map_err(|e| Failure::io(&events, e))?);
    for ev in sim.events() {
        serde_json::to_writer(&mut w, ev).expect("events serialize");
        w.write_all(b"\n").map_err(|e| Failure::io(&events, e))?;
    }
    w.flush().map_err(|e| Failure::io(&events, e))?;

    Ok(SimulateSummary {
        blocks: sim.chain().len(),
        logs: sim.chain().blocks().iter().map(|b| b.body.logs.len()).sum(),
        devices: sim.devices().len(),
        events: sim.events().len(),
    })
}
