use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use iotledger_cli::bench::{run_bench, write_csv, BenchParams, Suite, CSV_HEADER};

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn iotledger(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iotledger")).args(args).output().expect("binary runs")
}

fn simulate_demo(dir: &Path) -> Output {
    iotledger(&["simulate", "--config", repo("scenarios/demo.toml").to_str().unwrap(), "--out", dir.to_str().unwrap()])
}

fn query(dir: &Path, q: &Path) -> Output {
    iotledger(&[
        "query",
        "--chain",
        dir.join("chain.bin").to_str().unwrap(),
        "--query",
        q.to_str().unwrap(),
        "--keys",
        dir.join("keys.json").to_str().unwrap(),
    ])
}

fn summary(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.lines().last().expect("summary line")).unwrap()
}

#[test]
fn demo_scenario_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate_demo(dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&out);
    assert!(s["blocks"].as_u64().unwrap() > 0);
    assert_eq!(s["devices"], 6);
    for f in ["chain.bin", "cloud.bin", "events.jsonl", "keys.json"] {
        assert!(dir.path().join(f).metadata().unwrap().len() > 0, "{f}");
    }

    let out = query(dir.path(), &repo("scenarios/demo_query.toml"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&out);
    assert_eq!(s["hits"], 2);
    assert_eq!(s["cloud_lost"], 1);
    let first: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&out.stdout).lines().next().unwrap()).unwrap();
    assert_eq!(first["status"], "recovered");

    let empty = dir.path().join("empty.toml");
    std::fs::write(&empty, "rect = [[100.0, 120.0], [0.0, 100.0], [\"n\", \"w\"]]\n").unwrap();
    let out = query(dir.path(), &empty);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(summary(&out)["hits"], 0);

    let records = dir.path().join("hits.jsonl");
    let out = iotledger(&[
        "query",
        "--chain",
        dir.path().join("chain.bin").to_str().unwrap(),
        "--query",
        repo("scenarios/demo_query.toml").to_str().unwrap(),
        "--keys",
        dir.path().join("keys.json").to_str().unwrap(),
        "--out",
        records.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(records).unwrap().lines().count(), 2);
}

#[test]
fn simulate_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(simulate_demo(a.path()).status.success());
    assert!(simulate_demo(b.path()).status.success());
    for f in ["chain.bin", "cloud.bin", "events.jsonl", "keys.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn flipped_chain_byte_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    assert!(simulate_demo(dir.path()).status.success());
    let chain = dir.path().join("chain.bin");
    let mut bytes = std::fs::read(&chain).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    std::fs::write(&chain, bytes).unwrap();
    let out = query(dir.path(), &repo("scenarios/demo_query.toml"));
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tamper detected"));
}

#[test]
fn invalid_config_names_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(repo("scenarios/demo.toml")).unwrap().replace("devices = 6", "devices = 0");
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, &text).unwrap();
    let out = iotledger(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let line = text.lines().position(|l| l.starts_with("devices")).unwrap() + 1;
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&format!("line {line}: devices")), "{err}");

    std::fs::write(&cfg, "seed = 1\ndevices = \"two\"\n").unwrap();
    let out = iotledger(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn usage_errors_exit_one() {
    let out = iotledger(&["bench", "--suite", "nope"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown suite"));
    assert_eq!(iotledger(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(iotledger(&["query", "--chain", "/nonexistent/chain.bin", "--query", "q", "--keys", "/nonexistent/k"]).status.code(), Some(1));
}

#[test]
fn bench_csv_shape() {
    let out = iotledger(&["bench", "--suite", "trapdoor", "--dims", "2,4,8", "--sizes", "64", "--trials", "3"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "suite,l,n,trial,wall_nanoseconds");
    assert_eq!(lines.len(), 1 + 3 * 3);
    assert!(lines[1..].iter().all(|l| l.starts_with("trapdoor,")));
}

#[test]
fn csv_header_is_stable() {
    assert_eq!(CSV_HEADER, "suite,l,n,trial,wall_nanoseconds");
    for suite in Suite::ALL {
        let rows = run_bench(&BenchParams { suite, dims: vec![2], sizes: vec![32], trials: 1, seed: 1 }).unwrap();
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some(CSV_HEADER));
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().starts_with(&format!("{},2,32,0,", suite.name())));
    }
}
