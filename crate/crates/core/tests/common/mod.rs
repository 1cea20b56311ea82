#![allow(dead_code)]

use iotledger::kdtree::{AttrKind, AttrValue, Attribute, Schema};
use iotledger::sim::{CommFile, ScenarioConfig};
use iotledger::{HyperRect, NodeId, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `l` numeric attributes on `[0, 1]`, so raw values equal normalized ones.
pub fn unit_schema(l: usize) -> Schema {
    Schema::new(
        (0..l)
            .map(|j| Attribute { name: format!("a{j}"), kind: AttrKind::Numeric { min: 0.0, max: 1.0 } })
            .collect(),
    )
    .unwrap()
}

pub fn uniform_points(n: usize, l: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Point::new((0..l).map(|_| rng.gen::<f64>()).collect()).unwrap()).collect()
}

/// Body whose first eight bytes are the file's index.
pub fn body_for(index: usize) -> Vec<u8> {
    let mut b = (index as u64).to_be_bytes().to_vec();
    b.extend_from_slice(b"payload");
    b
}

pub fn index_of(body: &[u8]) -> usize {
    u64::from_be_bytes(body[..8].try_into().unwrap()) as usize
}

/// One file per point, sent by `sender` to `receiver` at `ts`.
pub fn files_for(points: &[Point], first_index: usize, sender: u64, receiver: u64, ts: u64) -> Vec<CommFile> {
    points
        .iter()
        .enumerate()
        .map(|(k, p)| CommFile {
            sender: NodeId::device(sender),
            receiver: NodeId::device(receiver),
            ts,
            attrs: p.coords().iter().map(|&x| AttrValue::Num(x)).collect(),
            body: body_for(first_index + k),
        })
        .collect()
}

/// Query rectangle covering roughly `volume` of the unit cube.
pub fn random_rect(l: usize, rng: &mut impl Rng) -> HyperRect {
    let volume: f64 = rng.gen_range(0.02..0.6);
    let side = volume.powf(1.0 / l as f64);
    let bounds: Vec<(f64, f64)> = (0..l)
        .map(|_| {
            let lo = rng.gen_range(-0.05..(1.05 - side));
            (lo, lo + side)
        })
        .collect();
    HyperRect::from_bounds(&bounds).unwrap()
}

pub fn small_config(seed: u64) -> ScenarioConfig {
    toml::from_str(&format!(
        r#"
seed = {seed}
devices = 4
storage_cap = 700
steps = 12
difficulty = 3
rate = 0.7
file_size = [40, 200]
miners = 2
topology = [[0, 1], [1, 2], [2, 3], [3, 0]]

[[schema]]
name = "temperature"
kind = "numeric"
min = -10.0
max = 40.0

[[schema]]
name = "wind"
kind = "categorical"
values = ["n", "e", "s", "w"]
"#
    ))
    .unwrap()
}
