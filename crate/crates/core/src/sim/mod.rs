//! Discrete-event simulation of the device network and the cloud.

mod builder;
mod cloud;
mod config;
mod device;
mod network;

pub use builder::LedgerBuilder;
pub use cloud::{cloud_get, CloudFault, CloudResponse, CloudStore, Receipt};
pub use config::{FaultKind, FaultSpec, ScenarioConfig};
pub use device::{cloud_keypair, flush, BroadcastPayload, CommFile, Device, DeviceKeys};
pub use network::{elect_miners, simulate, Event, EventKind, FileRecord, Simulation};
