use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use netvol::Scenario;
use serde_json::Value;

fn netvol(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netvol"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// One synthetic coupled market shared by every test; each test works in its
/// own workspace next to it.
fn market() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli-market");
        fs::create_dir_all(&dir).unwrap();
        fs::write(dir.join("scenario.conf"), Scenario::signal(1.0, 0).to_kv()).unwrap();
        let out = netvol(&dir, &["synth", "--config", "scenario.conf", "--out", "data"]);
        assert!(out.status.success(), "{}", stderr(&out));
        dir
    })
}

fn project(extra: &str) -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    let data = market().join("data");
    let conf = format!(
        "input = {}\ntruth = {}\nworkspace = ws\nmodels = linear\n{extra}",
        data.join("prices.csv").display(),
        data.join("truth.csv").display()
    );
    fs::write(tmp.path().join("run.conf"), conf).unwrap();
    tmp
}

fn manifest(dir: &Path, stage: &str) -> Value {
    serde_json::from_slice(&fs::read(dir.join("ws").join(stage).join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn full_run_reports_an_inverse_relation_and_then_hits_the_cache() {
    let p = project("");
    let dir = p.path();
    let out = netvol(dir, &["report", "--config", "run.conf"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary: Value = serde_json::from_slice(&fs::read(dir.join("ws/report/summary.json")).unwrap()).unwrap();
    let rho = summary["spearman"].as_f64().unwrap();
    assert!(rho < 0.0, "spearman {rho}");
    for f in ["indicator_logrv.svg", "auroc_kde.svg", "table.csv", "table.json", "pairs.csv", "kde_auroc.csv"] {
        assert!(dir.join("ws/report").join(f).is_file(), "{f}");
    }
    assert_eq!(summary["table"].as_array().unwrap().len(), 1);

    for stage in ["returns", "graphs", "models", "indicator", "forecast", "report"] {
        let m = manifest(dir, stage);
        assert_eq!(m["code_version"], env!("CARGO_PKG_VERSION"));
        assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
        assert!(!m["files"].as_object().unwrap().is_empty(), "{stage}");
    }

    let before = fs::metadata(dir.join("ws/indicator/indicator.csv")).unwrap().modified().unwrap();
    let again = netvol(dir, &["report", "--config", "run.conf"]);
    assert!(again.status.success());
    let log = stderr(&again);
    assert_eq!(log.matches("cache hit").count(), 5, "{log}");
    assert!(!log.contains("building"), "{log}");
    let after = fs::metadata(dir.join("ws/indicator/indicator.csv")).unwrap().modified().unwrap();
    assert_eq!(before, after);
}

#[test]
fn changing_a_graph_key_keeps_ingest_and_rebuilds_graphs() {
    let p = project("");
    let dir = p.path();
    assert!(netvol(dir, &["graphs", "--config", "run.conf"]).status.success());
    let returns = manifest(dir, "returns");
    let graphs = manifest(dir, "graphs");

    let conf = fs::read_to_string(dir.join("run.conf")).unwrap() + "corr_threshold = 0.6\n";
    fs::write(dir.join("run.conf"), conf).unwrap();
    let out = netvol(dir, &["graphs", "--config", "run.conf"]);
    assert!(out.status.success());
    let log = stderr(&out);
    assert!(log.contains("returns: cache hit"), "{log}");
    assert!(log.contains("graphs: building"), "{log}");
    assert_eq!(manifest(dir, "returns"), returns);
    assert_ne!(manifest(dir, "graphs")["config_hash"], graphs["config_hash"]);
}

#[test]
fn frozen_refuses_stale_artifacts() {
    let p = project("");
    let dir = p.path();
    assert!(netvol(dir, &["ingest", "--config", "run.conf"]).status.success());
    assert!(netvol(dir, &["ingest", "--config", "run.conf", "--frozen"]).status.success());

    // a tampered artifact is detected through its content hash
    let vol = dir.join("ws/returns/vol.csv");
    let text = fs::read_to_string(&vol).unwrap();
    fs::write(&vol, text + "\n").unwrap();
    let out = netvol(dir, &["ingest", "--config", "run.conf", "--frozen"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("vol.csv was modified"), "{}", stderr(&out));

    // without the flag the stage is rebuilt
    let out = netvol(dir, &["ingest", "--config", "run.conf"]);
    assert!(out.status.success());
    assert!(stderr(&out).contains("returns: building"));

    let out = netvol(dir, &["graphs", "--config", "run.conf", "--frozen"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("graphs artifacts missing"), "{}", stderr(&out));
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    fs::write(dir.join("missing.conf"), "input = nowhere.csv\n").unwrap();
    let out = netvol(dir, &["ingest", "--config", "missing.conf"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nowhere.csv"), "{}", stderr(&out));

    fs::write(dir.join("unknown.conf"), "input = x.csv\nwindow_length = 3\n").unwrap();
    let out = netvol(dir, &["graphs", "--config", "unknown.conf"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("window_length"), "{}", stderr(&out));

    fs::write(dir.join("bad.conf"), "input = x.csv\ncorr_threshold = 1.5\n").unwrap();
    assert_eq!(netvol(dir, &["graphs", "--config", "bad.conf"]).status.code(), Some(2));

    assert_eq!(netvol(dir, &["report"]).status.code(), Some(2));
    assert_eq!(netvol(dir, &["report", "--config", "absent.conf"]).status.code(), Some(2));
    assert_eq!(netvol(dir, &["explode", "--config", "bad.conf"]).status.code(), Some(2));
    assert_eq!(netvol(dir, &["synth", "--config", "unknown.conf", "--out", "d"]).status.code(), Some(2));
}

#[test]
fn malformed_prices_are_a_pipeline_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("prices.csv"), "timestamp,A,B\n2024-01-02T09:31:00,1.0,oops\n").unwrap();
    fs::write(dir.join("run.conf"), "input = prices.csv\n").unwrap();
    let out = netvol(dir, &["ingest", "--config", "run.conf"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}
