use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pushsum(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pushsum")).args(args).output().unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = configs().join("default.toml");
    let o = pushsum(&["simulate", "--config", arg(&config), "--out", arg(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    for f in ["trace.csv", "report.json", "config.toml", "gap.svg", "consensus.svg", "bounds.svg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let o = pushsum(&["report", "--out", arg(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("final_gap"));
}

#[test]
fn seed_override_changes_trace() {
    let config = configs().join("default.toml");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pushsum(&["simulate", "--config", arg(&config), "--out", arg(a.path())]);
    pushsum(&["simulate", "--config", arg(&config), "--out", arg(b.path()), "--seed", "99"]);
    let ta = std::fs::read(a.path().join("trace.csv")).unwrap();
    let tb = std::fs::read(b.path().join("trace.csv")).unwrap();
    assert_ne!(ta, tb);
    let saved = std::fs::read_to_string(b.path().join("config.toml")).unwrap();
    assert!(saved.contains("seed = 99"));
}

#[test]
fn verify_passes_on_default() {
    let o = pushsum(&["verify", "--config", arg(&configs().join("default.toml"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("product-identity"));
}

#[test]
fn corrupted_weights_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.txt");
    std::fs::write(&w, "0.5 0.5 0\n0.5 0.5 0.5\n0 0 0.5\n").unwrap();
    let config = configs().join("default.toml");
    let o = pushsum(&["verify", "--config", arg(&config), "--weights-file", arg(&w)]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("skip"));
    let o = pushsum(&["simulate", "--config", arg(&config), "--weights-file", arg(&w), "--out", arg(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn graph_file_override() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.txt");
    let mut text = String::from("3 1000\n");
    for t in 0..1000 {
        text.push_str(&format!("{t}: 1>2 2>3 3>1\n"));
    }
    std::fs::write(&g, text).unwrap();
    let config = configs().join("default.toml");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    pushsum(&["simulate", "--config", arg(&config), "--out", arg(&a)]);
    let o = pushsum(&["simulate", "--config", arg(&config), "--graph-file", arg(&g), "--out", arg(&b)]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(
        std::fs::read(a.join("trace.csv")).unwrap(),
        std::fs::read(b.join("trace.csv")).unwrap()
    );
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(configs().join("default.toml")).unwrap();
    std::fs::write(&bad, text.replace("seed = 1", "seed = 1\ntypo = 2")).unwrap();
    let o = pushsum(&["simulate", "--config", arg(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("typo"));
    let o = pushsum(&["verify", "--config", arg(&dir.path().join("missing.toml"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = pushsum(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    let o = pushsum(&["sweep", "--config", arg(&configs().join("l1_median.toml")), "--horizons", "100,200"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_prints_slope() {
    let dir = tempfile::tempdir().unwrap();
    let o = pushsum(&[
        "sweep",
        "--config",
        arg(&configs().join("l1_median.toml")),
        "--horizons",
        "50,100,200",
        "--out",
        arg(dir.path()),
    ]);
    assert!(stdout(&o).contains("log-log slope"), "{}", stdout(&o));
    assert!(dir.path().join("sweep.json").exists());
}
