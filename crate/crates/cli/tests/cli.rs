use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nilm_core::domain::make_context;
use nilm_core::ingest::read_segments;

fn nilm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nilm"))
        .args(args)
        .current_dir(dir)
        .env_remove("NILM_THREADS")
        .output()
        .expect("run nilm")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn generate_writes_the_requested_records() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["generate", "--classes", "8", "--per-class", "100", "--fs", "2000", "--seed", "7", "--out"];
    let mut a = args.to_vec();
    a.push("data.seg");
    ok(&nilm(dir.path(), &a));
    let ds = read_segments(dir.path().join("data.seg"), &make_context(2000, 50, 0.5).unwrap()).unwrap();
    assert_eq!(ds.len(), 800);
    assert_eq!(ds.n_classes(), 8);

    a.pop();
    a.push("again.seg");
    ok(&nilm(dir.path(), &a));
    assert_eq!(fs::read(dir.path().join("data.seg")).unwrap(), fs::read(dir.path().join("again.seg")).unwrap());
}

#[test]
fn missing_out_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = nilm(dir.path(), &["generate", "--classes", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--out"));
}

#[test]
fn invalid_context_fails_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let out = nilm(dir.path(), &["generate", "--fs", "16000", "--f0", "60", "--out", "x.seg"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("x.seg").exists());
}

fn detect(dir: &Path, csv: &str, extra: &[&str]) -> String {
    fs::write(dir.join("p.csv"), csv).unwrap();
    let mut args = vec!["detect", "--input", "p.csv", "--out", "ev.csv"];
    args.extend_from_slice(extra);
    ok(&nilm(dir, &args));
    fs::read_to_string(dir.join("ev.csv")).unwrap()
}

#[test]
fn detect_kettle_activation() {
    let dir = tempfile::tempdir().unwrap();
    let csv = "timestamp,watts\n0,0\n6,0\n12,2100\n18,2100\n24,0\n30,0\n";
    let events = detect(dir.path(), csv, &["--appliance", "kettle"]);
    assert_eq!(events, "kind,timestamp\nON,12\nOFF,24\n");
}

#[test]
fn detect_flat_trace_gives_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let events = detect(dir.path(), "0,0\n6,0\n12,0\n", &["--appliance", "kettle"]);
    assert_eq!(events, "kind,timestamp\n");
}

#[test]
fn detect_honors_threshold_overrides() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("t.txt"), "# stricter kettle\nkettle, 3000, 100\n").unwrap();
    let csv = "0,0\n6,2100\n12,0\n";
    assert_eq!(detect(dir.path(), csv, &["--appliance", "kettle"]).lines().count(), 3);
    let events = detect(dir.path(), csv, &["--appliance", "kettle", "--thresholds", "t.txt"]);
    assert_eq!(events, "kind,timestamp\n");
    let explicit = detect(dir.path(), csv, &["--on", "1000", "--off", "500"]);
    assert_eq!(explicit.lines().count(), 3);
}

#[test]
fn detect_rejects_malformed_csv() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("p.csv"), "0,0\n6,abc\n").unwrap();
    let out = nilm(dir.path(), &["detect", "--input", "p.csv", "--out", "ev.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

fn csv_rows(dir: &Path) -> Vec<String> {
    fs::read_to_string(dir.join("reports.csv")).unwrap().lines().skip(1).map(str::to_owned).collect()
}

#[test]
fn selected_models_and_classifiers() {
    let dir = tempfile::tempdir().unwrap();
    let out = nilm(
        dir.path(),
        &["benchmark", "--classes", "4", "--per-class", "20", "--models", "rms25,handcrafted", "--classifiers", "knn", "--seed", "1", "--out", "rep"],
    );
    ok(&out);
    let rows = csv_rows(&dir.path().join("rep"));
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("rms25,knn,"));
    assert!(rows[1].starts_with("handcrafted,knn,"));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("KNN") && stdout.contains("handcrafted"));
    // Everything lands under --out.
    let entries: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(entries, vec!["rep"]);
}

#[test]
fn full_benchmark_is_reproducible_and_emits_25_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{
        "dataset": {"synthetic": {"classes": 8, "per_class": 15}},
        "context": {"fs": 2000, "f0": 50, "duration": 0.2},
        "seed": 5,
        "save_models": true
    }"#;
    fs::write(dir.path().join("exp.json"), config).unwrap();
    for out in ["a", "b"] {
        ok(&nilm(dir.path(), &["benchmark", "--config", "exp.json", "--models", "handcrafted,rms25,random_subsample,pca,ae,cae,cnn", "--out", out]));
    }
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(csv_rows(&a).len(), 25);
    for f in ["reports.json", "reports.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    assert_eq!(fs::read_dir(a.join("models")).unwrap().count(), 25);
}

#[test]
fn thread_cap_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_nilm"))
        .args(["generate", "--classes", "2", "--per-class", "3", "--out", "d.seg"])
        .current_dir(dir.path())
        .env("NILM_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = Command::new(env!("CARGO_BIN_EXE_nilm"))
        .args(["generate", "--classes", "2", "--per-class", "3", "--out", "d.seg"])
        .current_dir(dir.path())
        .env("NILM_THREADS", "2")
        .output()
        .unwrap();
    ok(&out);
}

#[test]
fn missing_data_file_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = nilm(dir.path(), &["benchmark", "--data", "nope.seg", "--out", "rep"]);
    assert_eq!(out.status.code(), Some(1));
}
