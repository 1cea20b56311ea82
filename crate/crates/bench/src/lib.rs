//! Seeded workloads shared by the criterion benches.

use iotledger::crypto::Digest;
use iotledger::kdtree::LeafPayload;
use iotledger::{HyperRect, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` points uniform in `[0, 1]^l`, each with a distinct payload.
pub fn uniform_points(n: usize, l: usize, seed: u64) -> Vec<(Point, LeafPayload)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let p = Point::new((0..l).map(|_| rng.gen::<f64>()).collect()).expect("finite");
            let payload = LeafPayload { cipher_ref: Digest::ZERO, log_ref: i as u64 };
            (p, payload)
        })
        .collect()
}

/// Random query rectangle inside `[0, 1]^l` with side at most `side`.
pub fn query_rect(l: usize, side: f64, rng: &mut impl Rng) -> HyperRect {
    let bounds: Vec<(f64, f64)> = (0..l)
        .map(|_| {
            let w = rng.gen::<f64>() * side;
            let lo = rng.gen::<f64>() * (1.0 - w);
            (lo, lo + w)
        })
        .collect();
    HyperRect::from_bounds(&bounds).expect("ordered bounds")
}
