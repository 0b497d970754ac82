mod common;

use std::path::Path;
use std::process::{Command, Output};

fn promforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_promforge")).args(args).output().expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

const SMALL: [&str; 10] = [
    "--set",
    "sampling.n_train=4",
    "--set",
    "sampling.n_validation=2",
    "--set",
    "sampling.n_test=1",
    "--set",
    "fe.n_elements=20",
    "--set",
    "basis.n_modes=8",
];

#[test]
fn full_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = |p: &str| dir.path().join(p).to_str().unwrap().to_string();
    let config = common::config_path();
    let run = d("run");
    let mut build = vec!["build", "--config", config.to_str().unwrap(), "--out", &run];
    build.extend(SMALL);
    let db = d("run/database.prdb");
    assert!(ok(promforge(&build)).contains("4 training ROMs"));
    let fit = ok(promforge(&["fit", "--db", &db]));
    assert_eq!(fit.lines().filter(|l| l.contains("eps =")).count(), 6);
    let bench = ok(promforge(&["bench", "--db", &db, "--out", &d("bench")]));
    assert_eq!(bench.lines().filter(|l| l.starts_with("point 0")).count(), 5);
    ok(promforge(&["export", "--report", &d("bench/report.json"), "--out", &d("csv")]));
    assert!(Path::new(&d("csv/summary.json")).exists());
    assert!(Path::new(&d("csv/point0_interpolated.csv")).exists());
    let inspect = ok(promforge(&["inspect", &db]));
    assert!(inspect.contains("training ROMs     4"));
    assert!(inspect.contains("eps[K1]"));
}

#[test]
fn failures_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = promforge(&["build", "--config", "/nonexistent.toml", "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let bad = dir.path().join("bad.prdb");
    std::fs::write(&bad, b"PROMFDB\0garbage").unwrap();
    let out = promforge(&["inspect", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("version"));
    let mut truncated = b"PROMFDB\0".to_vec();
    truncated.extend_from_slice(&1u32.to_le_bytes());
    truncated.extend_from_slice(&1000u64.to_le_bytes());
    std::fs::write(&bad, truncated).unwrap();
    let out = promforge(&["inspect", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("corrupt"));

    let config = common::config_path();
    let out = promforge(&[
        "build",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--set",
        "sampling.unknown=3",
    ]);
    assert!(!out.status.success());
}
