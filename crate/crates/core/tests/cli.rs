use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use softfoot::io::{load_model, mjcf, save_model};
use softfoot::build_default_softfoot;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_softfoot"));
    c.env_remove("SOFTFOOT_LOG");
    c
}

fn shipped_model() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models/softfoot_default.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn shipped_model_matches_builder() {
    let m = load_model(&shipped_model()).unwrap();
    assert_eq!(m, build_default_softfoot());
}

#[test]
fn validate_exit_codes() {
    let model = shipped_model();
    let o = run(&["validate", model.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let dir = tempfile::tempdir().unwrap();
    let mut bad = build_default_softfoot();
    bad.couplings[2].lower_limit = 1.0;
    bad.couplings[2].upper_limit = -1.0;
    let bad_path = dir.path().join("inverted.json");
    save_model(&bad, &bad_path).unwrap();
    let o = run(&["validate", bad_path.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("m2-m3"));

    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{\n  \"heel\": [1, 2,\n").unwrap();
    let o = run(&["validate", broken.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));

    let o = run(&["validate", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn export_writes_readable_mjcf() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("foot.xml");
    let o = run(&["export", shipped_model().to_str().unwrap(), "--format", "mjcf", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let scene = mjcf::read_mjcf(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(scene.topology_mismatches(&build_default_softfoot()).is_empty());

    let o = run(&["export", shipped_model().to_str().unwrap(), "--format", "urdf"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn sensitivity_incline_range() {
    let m = shipped_model();
    for bad in ["0", "6"] {
        let o = run(&["sensitivity", m.to_str().unwrap(), "--incline", bad]);
        assert_eq!(code(&o), 2, "incline {bad} accepted");
    }
}

#[test]
fn bench_with_self_as_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let m = shipped_model();
    let o = run(&["bench", m.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(a.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 49);

    let exp = a.join("results.csv");
    let o = run(&[
        "bench",
        m.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
        "--exp",
        exp.to_str().unwrap(),
        "--workers",
        "2",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(csv, std::fs::read_to_string(b.join("results.csv")).unwrap());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(b.join("report.json")).unwrap()).unwrap();
    let components = report["report"]["components"].as_array().unwrap();
    assert_eq!(components.len(), 3);
    for c in components {
        assert_eq!(c["unfiltered_mean_pct"].as_f64(), Some(0.0), "{c}");
        assert_eq!(c["filtered_mean_pct"].as_f64(), Some(0.0), "{c}");
    }
    assert!(b.join("chart_12N.svg").exists() && b.join("chart_24N.svg").exists());
}
