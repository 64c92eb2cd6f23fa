use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn rcsns(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcsns")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Vacuum configuration rewritten with `edit` applied to its text.
fn vacuum_variant(dir: &Path, edit: impl Fn(String) -> String) -> PathBuf {
    let text = fs::read_to_string(configs().join("vacuum.toml")).unwrap();
    let p = dir.join("config.toml");
    fs::write(&p, edit(text)).unwrap();
    p
}

#[test]
fn vacuum_run_completes_with_zero_particle_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = rcsns(&[
        "simulate",
        "--config",
        path(&configs().join("vacuum.toml")),
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut reader = csv::Reader::from_path(out.join("diagnostics.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (ew, mass) = (col("Ew"), col("mass"));
    let mut rows = 0;
    for row in reader.records() {
        let row = row.unwrap();
        assert_eq!(row[ew].parse::<f64>().unwrap(), 0.0);
        assert_eq!(row[mass].parse::<f64>().unwrap(), 0.0);
        rows += 1;
    }
    assert_eq!(rows, 21);
    let m = manifest(&out);
    assert_eq!(m["status"], "completed");
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["config"]["particles"], 0);
    assert!(m["checks"].as_array().unwrap().iter().any(|c| c["name"] == "divergence"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = vacuum_variant(dir.path(), |t| t.replace("grid = 32", "grid = 32\nbogus = 1"));
    let o = rcsns(&["simulate", "--config", path(&cfg), "--out", path(&dir.path().join("run"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_config_values_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for (from, to) in [("light_speed = 2.0", "light_speed = -1.0"), ("grid = 32", "grid = 0"), ("dt = 0.01", "dt = \"x\"")] {
        let cfg = vacuum_variant(dir.path(), |t| t.replace(from, to));
        let o = rcsns(&["simulate", "--config", path(&cfg), "--out", path(&dir.path().join("run"))]);
        assert_eq!(o.status.code(), Some(2), "{to}");
    }
    let o = rcsns(&["simulate", "--config", path(&dir.path().join("missing.toml"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn cfl_violation_exits_numerical_with_last_good_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = vacuum_variant(dir.path(), |t| t.replace("amplitude = 1.0\nmean", "amplitude = 100.0\nmean"));
    let out = dir.path().join("run");
    let o = rcsns(&["simulate", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(manifest(&out)["status"], "numerical_failure");
    assert!(out.join("checkpoints/fluid_last_good.bin").exists());
    assert!(out.join("checkpoints/ensemble_last_good.csv").exists());
}

fn write_series(dir: &Path, rows: impl Iterator<Item = (f64, f64)>) -> PathBuf {
    let p = dir.join("series.csv");
    let mut text = String::from("t,L,rho_inf\n");
    for (t, l) in rows {
        text.push_str(&format!("{t:e},{l:e},1\n"));
    }
    fs::write(&p, text).unwrap();
    p
}

fn field(stdout: &[u8], key: &str) -> f64 {
    let text = String::from_utf8_lossy(stdout);
    let line = text.lines().find(|l| l.starts_with(key)).unwrap();
    line.split_whitespace().nth(1).unwrap().parse().unwrap()
}

#[test]
fn fit_recovers_an_exact_exponential() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_series(dir.path(), (0..=60).map(|i| {
        let t = 0.1 * i as f64;
        (t, 3.0 * (-2.5 * t).exp())
    }));
    let o = rcsns(&["fit", "--csv", path(&csv), "--window", "1,5", "--assert"]);
    assert_eq!(o.status.code(), Some(0));
    assert!((field(&o.stdout, "rate") - 2.5).abs() <= 1e-10);
    assert!((field(&o.stdout, "r_squared") - 1.0).abs() <= 1e-12);
}

#[test]
fn fit_assert_fails_on_a_flat_series() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_series(dir.path(), (0..=60).map(|i| (0.1 * i as f64, 1.0 + 1e-3 * (i % 2) as f64)));
    let o = rcsns(&["fit", "--csv", path(&csv), "--window", "1,5", "--assert"]);
    assert_eq!(o.status.code(), Some(1));
    let o = rcsns(&["fit", "--csv", path(&csv), "--window", "1,5"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn fit_rejects_malformed_input() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "t,L\n0,1\n1,oops\n").unwrap();
    assert_eq!(rcsns(&["fit", "--csv", path(&bad)]).status.code(), Some(2));
    let no_l = dir.path().join("no_l.csv");
    fs::write(&no_l, "t,E\n0,1\n").unwrap();
    assert_eq!(rcsns(&["fit", "--csv", path(&no_l)]).status.code(), Some(2));
    let good = write_series(dir.path(), (0..10).map(|i| (i as f64, (-(i as f64)).exp())));
    assert_eq!(rcsns(&["fit", "--csv", path(&good), "--window", "5"]).status.code(), Some(2));
    assert_eq!(rcsns(&["fit", "--csv", path(&good), "--window", "20,30"]).status.code(), Some(2));
}

#[test]
fn validate_passes_and_reports_injected_faults() {
    let o = rcsns(&["validate"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 10);

    let o = rcsns(&["validate", "--inject-fault", "leray_projection"]);
    assert_eq!(o.status.code(), Some(1));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().any(|l| l.starts_with("FAIL leray_projection")));
    assert_eq!(text.lines().filter(|l| l.starts_with("FAIL")).count(), 1);

    assert_eq!(rcsns(&["validate", "--inject-fault", "nonsense"]).status.code(), Some(2));
}

#[test]
fn iterate_writes_trace_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = rcsns(&["iterate", "--config", path(&configs().join("picard_desk.toml")), "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let trace = fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    let records: Vec<serde_json::Value> = trace.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 6);
    assert!(records.iter().all(|r| r["delta"].as_f64().unwrap() > 0.0));
    let m = manifest(dir.path());
    assert_eq!(m["command"], "iterate");
    assert!(m["config_toml"].as_str().unwrap().contains("[iteration]"));
}

#[test]
fn seed_override_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = rcsns(&[
            "simulate",
            "--config",
            path(&configs().join("two_beam.toml")),
            "--out",
            path(&out),
            "--seed",
            seed,
        ]);
        assert_eq!(o.status.code(), Some(0));
        assert_eq!(manifest(&out)["config"]["seed"], seed.parse::<u64>().unwrap());
        fs::read(out.join("diagnostics.csv")).unwrap()
    };
    assert_ne!(run("1", "a"), run("2", "b"));
}
