use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn esms(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_esms"))
        .args(args)
        .output()
        .expect("esms binary runs")
}

fn default_conf() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.conf")
}

/// A tiny scenario so each binary run takes well under a second.
const TINY: [&str; 10] = [
    "--set",
    "fleet_size=30",
    "--set",
    "world.n_zones=20",
    "--set",
    "world.n_ports=6",
    "--set",
    "horizon_days=2",
    "--set",
    "world.demand_rate_per_min=2",
];

fn with_tiny<'a>(head: &[&'a str]) -> Vec<&'a str> {
    head.iter().copied().chain(TINY).collect()
}

fn summaries(root: &Path) -> Vec<PathBuf> {
    let mut found: Vec<PathBuf> = walkdir::WalkDir::new(root)
        .into_iter()
        .map(|e| e.unwrap().into_path())
        .filter(|p| p.file_name().is_some_and(|n| n == "summary.json"))
        .collect();
    found.sort();
    found
}

#[test]
fn shipped_config_validates() {
    let conf = default_conf();
    let out = esms(&["validate-config", "--config", conf.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let defaults = esms(&["validate-config"]);
    assert_eq!(out.stdout, defaults.stdout);
}

#[test]
fn unknown_key_exits_2_and_names_it() {
    let out = esms(&["validate-config", "--set", "no_such_key=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
}

#[test]
fn bad_value_exits_2() {
    let out = esms(&["validate-config", "--set", "fleet_size=many"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_exits_3() {
    let out = esms(&["validate-config", "--config", "/nonexistent/esms.conf"]);
    assert_eq!(out.status.code(), Some(3));
    let out = esms(&["report", "/nonexistent/runs"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn run_is_replayable() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let args = with_tiny(&["run", "--seed", "4", "--delay-min", "10", "--out", dir.to_str().unwrap()]);
        let out = esms(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(&a, "summary.json"), read(&b, "summary.json"));
    assert_eq!(read(&a, "seed.txt"), b"4\n");
    assert!(String::from_utf8(read(&a, "build.txt")).unwrap().starts_with("esms "));

    // the snapshot alone reproduces the run
    let snapshot = a.join("config.conf");
    let c = tmp.path().join("c");
    let out = esms(&["run", "--config", snapshot.to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(&a, "summary.json"), read(&c, "summary.json"));
}

#[test]
fn paper_grid_writes_every_scenario_and_report_is_a_pure_fold() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("sweep");
    let args = with_tiny(&["sweep", "--paper-grid", "--seed", "1", "--out", dir.to_str().unwrap()]);
    let out = esms(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(summaries(&dir).len(), 19);
    for table in ["comparison.csv", "confusion.csv", "losses.csv"] {
        assert!(dir.join(table).is_file(), "{table}");
    }

    let report = tmp.path().join("report.csv");
    let dest = report.to_str().unwrap();
    assert!(esms(&["report", dir.to_str().unwrap(), "--out", dest]).status.success());
    let first = std::fs::read(&report).unwrap();
    assert!(esms(&["report", dir.to_str().unwrap(), "--out", dest]).status.success());
    assert_eq!(first, std::fs::read(&report).unwrap());
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("run,seed,scale,delay_min,detector,alpha,metric,index,value"));
    assert!(text.contains("weekly_revenue_usd"));
}

#[test]
fn generated_world_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let world = tmp.path().join("world");
    let out = esms(&with_tiny(&["gen-world", "--seed", "2", "--out", world.to_str().unwrap()]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["zones.csv", "ports.csv", "trips.csv", "world.conf"] {
        assert!(world.join(f).is_file(), "{f}");
    }
    let conf = world.join("world.conf");
    let from_files = tmp.path().join("files");
    let synthetic = tmp.path().join("synthetic");
    let out = esms(&with_tiny(&[
        "run",
        "--config",
        conf.to_str().unwrap(),
        "--seed",
        "2",
        "--out",
        from_files.to_str().unwrap(),
    ]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = esms(&with_tiny(&["run", "--seed", "2", "--out", synthetic.to_str().unwrap()]));
    assert!(out.status.success());
    let revenue = |d: &Path| {
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("summary.json")).unwrap()).unwrap();
        v["total_revenue_cents"].as_u64().unwrap()
    };
    assert_eq!(revenue(&from_files), revenue(&synthetic));
}
