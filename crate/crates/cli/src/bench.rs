//! Timing harness behind `iotledger bench`. Emits one CSV row per
//! (suite, l, n, trial).

use std::collections::BTreeMap;
use std::hint::black_box;
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use iotledger::aspe::{keygen, make_trapdoor, Trapdoor};
use iotledger::crypto::{Digest, Signature};
use iotledger::geometry::anchors_for_rect;
use iotledger::imt::{build_imt, Imt};
use iotledger::kdtree::{build, encrypt_tree, IdGen, KdTree};
use iotledger::log::{CommLog, ENC_DIGEST_LEN};
use iotledger::search::{search_block, DEFAULT_DELTA};
use iotledger_bench::{query_rect, uniform_points};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::Failure;

pub const CSV_HEADER: &str = "suite,l,n,trial,wall_nanoseconds";

/// Minimum wall time of one trial. Quick operations repeat until it is
/// reached and the row reports the mean per operation.
pub const MIN_TRIAL: Duration = Duration::from_millis(50);
/// Distinct query rectangles cycled through by the search suite.
pub const SEARCH_QUERIES: usize = 16;
/// Upper bound on the volume of search rectangles within the unit cube.
pub const SEARCH_SELECTIVITY: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Suite {
    KdtreeBuild,
    KdtreeEncrypt,
    ImtBuild,
    Trapdoor,
    Search,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::KdtreeBuild, Suite::KdtreeEncrypt, Suite::ImtBuild, Suite::Trapdoor, Suite::Search];

    pub fn name(self) -> &'static str {
        match self {
            Suite::KdtreeBuild => "kdtree-build",
            Suite::KdtreeEncrypt => "kdtree-encrypt",
            Suite::ImtBuild => "imt-build",
            Suite::Trapdoor => "trapdoor",
            Suite::Search => "search",
        }
    }
}

impl FromStr for Suite {
    type Err = Failure;

    fn from_str(s: &str) -> Result<Self, Failure> {
        Suite::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| {
            let known: Vec<_> = Suite::ALL.iter().map(|x| x.name()).collect();
            Failure::Usage(format!("unknown suite {s:?}; expected one of {}", known.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchRow {
    pub suite: String,
    pub l: usize,
    pub n: usize,
    pub trial: usize,
    pub wall_nanoseconds: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchParams {
    pub suite: Suite,
    pub dims: Vec<usize>,
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
}

fn fixture_seed(seed: u64, l: usize, n: usize) -> u64 {
    seed ^ ((l as u64) << 48) ^ n as u64
}

fn tree(l: usize, n: usize, seed: u64) -> Result<KdTree, Failure> {
    Ok(build(&uniform_points(n, l, seed), &mut IdGen::from_u64(seed))?)
}

fn dummy_logs(n: usize) -> Vec<CommLog> {
    let log = CommLog { enc_file_hash: [0; ENC_DIGEST_LEN], ts: 0, cipher_ref: Digest::ZERO, peer_sig: Signature::EMPTY };
    vec![log; n]
}

fn trapdoors(l: usize, count: usize, seed: u64) -> Result<Vec<Trapdoor>, Failure> {
    let key = keygen(l, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = SEARCH_SELECTIVITY.powf(1.0 / l as f64);
    (0..count)
        .map(|i| {
            let rect = query_rect(l, side, &mut rng);
            Ok(make_trapdoor(&key, &anchors_for_rect(&rect, DEFAULT_DELTA)?, seed + i as u64)?)
        })
        .collect()
}

fn searchable(l: usize, n: usize, seed: u64) -> Result<Imt, Failure> {
    let key = keygen(l, seed)?;
    Ok(build_imt(&encrypt_tree(&tree(l, n, seed)?, &key)?, &dummy_logs(n))?)
}

/// Mean nanoseconds per call of `op` over at least [`MIN_TRIAL`].
fn timed(mut op: impl FnMut(u64) -> Result<(), Failure>) -> Result<u64, Failure> {
    let start = Instant::now();
    let mut reps = 0u64;
    loop {
        op(reps)?;
        reps += 1;
        let elapsed = start.elapsed();
        if elapsed >= MIN_TRIAL {
            return Ok((elapsed.as_nanos() / u128::from(reps)) as u64);
        }
    }
}

type Op = Box<dyn FnMut(u64) -> Result<(), Failure>>;

/// The timed operation of one `(l, n)` cell, fixtures prepared.
fn cell(suite: Suite, l: usize, n: usize, seed: u64) -> Result<Op, Failure> {
    Ok(match suite {
        Suite::KdtreeBuild => {
            let points = uniform_points(n, l, seed);
            Box::new(move |_| {
                black_box(build(&points, &mut IdGen::from_u64(seed))?);
                Ok(())
            })
        }
        Suite::KdtreeEncrypt => {
            let plain = tree(l, n, seed)?;
            let key = keygen(l, seed)?;
            Box::new(move |_| {
                black_box(encrypt_tree(&plain, &key)?);
                Ok(())
            })
        }
        Suite::ImtBuild => {
            let enc = encrypt_tree(&tree(l, n, seed)?, &keygen(l, seed)?)?;
            let logs = dummy_logs(n);
            Box::new(move |_| {
                black_box(build_imt(&enc, &logs)?);
                Ok(())
            })
        }
        Suite::Trapdoor => {
            // a trapdoor depends on the query alone, n only labels the row
            let key = keygen(l, seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rect = query_rect(l, SEARCH_SELECTIVITY.powf(1.0 / l as f64), &mut rng);
            Box::new(move |i| {
                let anchors = anchors_for_rect(&rect, DEFAULT_DELTA)?;
                black_box(make_trapdoor(&key, &anchors, i)?);
                Ok(())
            })
        }
        Suite::Search => {
            let imt = searchable(l, n, seed)?;
            let trs = trapdoors(l, SEARCH_QUERIES, seed)?;
            Box::new(move |i| {
                black_box(search_block(&trs[i as usize % trs.len()], &imt)?);
                Ok(())
            })
        }
    })
}

pub fn run_bench(p: &BenchParams) -> Result<Vec<BenchRow>, Failure> {
    if p.trials == 0 {
        return Err(Failure::Usage("--trials must be positive".into()));
    }
    if p.dims.is_empty() || p.dims.contains(&0) {
        return Err(Failure::Usage("--dims needs positive dimensions".into()));
    }
    if p.sizes.is_empty() || p.sizes.contains(&0) {
        return Err(Failure::Usage("--sizes needs positive sizes".into()));
    }
    let mut cells = Vec::new();
    for &l in &p.dims {
        for &n in &p.sizes {
            let mut op = cell(p.suite, l, n, fixture_seed(p.seed, l, n))?;
            op(0)?;
            cells.push((l, n, op));
        }
    }
    // trials are interleaved across cells so that slow stretches on a busy
    // machine do not all land on one cell
    let mut times = vec![Vec::with_capacity(p.trials); cells.len()];
    for _ in 0..p.trials {
        for (t, (_, _, op)) in times.iter_mut().zip(cells.iter_mut()) {
            t.push(timed(op)?);
        }
    }
    let mut rows = Vec::with_capacity(cells.len() * p.trials);
    for ((l, n, _), t) in cells.iter().zip(times) {
        rows.extend(t.into_iter().enumerate().map(|(trial, wall_nanoseconds)| BenchRow {
            suite: p.suite.name().to_string(),
            l: *l,
            n: *n,
            trial,
            wall_nanoseconds,
        }));
    }
    Ok(rows)
}

pub fn write_csv(rows: &[BenchRow], w: impl Write) -> Result<(), Failure> {
    let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    let io = |e: csv::Error| Failure::Usage(format!("writing CSV: {e}"));
    csv.write_record(CSV_HEADER.split(',')).map_err(io)?;
    for r in rows {
        csv.serialize(r).map_err(io)?;
    }
    csv.flush().map_err(|e| Failure::Usage(format!("writing CSV: {e}")))
}

/// Median wall time per `(l, n)` cell.
pub fn medians(rows: &[BenchRow]) -> BTreeMap<(usize, usize), u64> {
    let mut cells: BTreeMap<(usize, usize), Vec<u64>> = BTreeMap::new();
    for r in rows {
        cells.entry((r.l, r.n)).or_default().push(r.wall_nanoseconds);
    }
    cells
        .into_iter()
        .map(|(k, mut v)| {
            v.sort_unstable();
            (k, v[v.len() / 2])
        })
        .collect()
}
