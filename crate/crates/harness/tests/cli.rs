use std::path::Path;
use std::process::Command;

use varalloc_core::allocation::NormOrder;
use varalloc_core::concentration::{delta_schedule, Schedule};
use varalloc_harness::config::ExperimentConfig;
use varalloc_harness::experiment::{read_rows, run_experiment, summarize, write_outputs, COLUMNS};

const BIN: &str = env!("CARGO_BIN_EXE_varalloc");

const SMALL: &str = r#"
name = "small"
policy = "adaptive"
horizons = [300, 600, 1200, 3000]
trials = 1
seed = 9

[settings]
norm = 2
regime = "gaussian"

[[arms]]
family = "gaussian"
variance = 1.0

[[arms]]
family = "symmetric_beta"
shape = 1.5

[[arms]]
family = "rademacher"
"#;

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn simulate_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let mut outputs = Vec::new();
    for run in ["a.csv", "b.csv"] {
        let out = dir.path().join(run);
        let status = Command::new(BIN).arg("simulate").arg(&cfg).arg("-o").arg(&out).output().unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    assert_eq!(text.lines().next().unwrap(), COLUMNS.join(","));
    assert!(dir.path().join("a.summary.csv").exists());
}

#[test]
fn library_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg: ExperimentConfig = SMALL.parse().unwrap();
    let rows = run_experiment(&cfg).unwrap();
    let path = dir.path().join("rows.csv");
    write_outputs(&rows, &path).unwrap();
    assert_eq!(read_rows(&path).unwrap(), rows);
}

#[test]
fn slopes_and_bounds_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("rows.csv");
    assert!(Command::new(BIN).arg("simulate").arg(&cfg).arg("-o").arg(&out).status().unwrap().success());
    let slopes = Command::new(BIN).arg("slopes").arg(&out).output().unwrap();
    assert!(slopes.status.success());
    assert!(String::from_utf8_lossy(&slopes.stdout).contains("slope"));
    let bounds = Command::new(BIN).arg("bounds").arg(&cfg).output().unwrap();
    assert!(bounds.status.success());
    let text = String::from_utf8(bounds.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().nth(1).unwrap().contains("T7_ssg_adaptive_finite"));
}

#[test]
fn oracle_subcommand() {
    let out = Command::new(BIN).args(["oracle", "1,4", "-T", "10", "-p", "inf"]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("[2, 8]"));
    let big = Command::new(BIN).args(["oracle", "1,1,1,1,1", "-T", "10"]).output().unwrap();
    assert_eq!(big.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = Command::new(BIN).arg("simulate").arg(dir.path().join("nope.toml")).output().unwrap();
    assert_eq!(missing.status.code(), Some(3));
    let bad = write(dir.path(), "bad.toml", &SMALL.replace("trials = 1", "trials = 0"));
    let out = Command::new(BIN).arg("simulate").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let unwritable = Command::new(BIN)
        .arg("simulate")
        .arg(write(dir.path(), "ok.toml", SMALL))
        .arg("-o")
        .arg(dir.path().join("no/such/dir/out.csv"))
        .output()
        .unwrap();
    assert_eq!(unwritable.status.code(), Some(3));
    let selftest = Command::new(BIN).args(["selftest", "--configs", "20"]).output().unwrap();
    assert!(selftest.status.success());
}

#[test]
fn good_event_frequency_respects_union_bound() {
    let text = include_str!("../../../configs/canonical_inf.toml");
    let mut cfg: ExperimentConfig = text.parse().unwrap();
    cfg.horizons = vec![2000, 5000];
    let rows = run_experiment(&cfg).unwrap();
    let k = cfg.num_arms() as f64;
    for s in summarize(&rows) {
        let delta = delta_schedule(Schedule::NonAdaptive, NormOrder::Infinity, s.t);
        assert!(s.good_event_rate >= 1.0 - 2.0 * k * delta * s.t as f64);
        assert!(s.good_event_rate >= 1.0 - 2.0 * k * delta - 3.0 * (2.0 * k * delta / s.trials as f64).sqrt());
    }
}
