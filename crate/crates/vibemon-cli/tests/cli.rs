//! Behavioral tests of the `vibemon` binary: subcommand wiring, exit codes,
//! CSV output shape, determinism of generated datasets, and failure
//! handling. Everything runs on small synthetic datasets in tempdirs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_vibemon");

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .output()
        .expect("binary should launch")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// 60 snapshots of 2048 samples, fault growing quickly from reading 40.
fn synth_faulted(dir: &Path) {
    let out = run(&[
        "synth",
        "--out",
        path_str(dir),
        "--snapshots",
        "60",
        "--samples",
        "2048",
        "--onset",
        "40",
        "--growth",
        "1.0",
        "--seed",
        "11",
    ]);
    assert_eq!(out.status.code(), Some(0), "synth failed: {out:?}");
}

/// Same run with the fault amplitude pinned to zero: healthy end to end.
fn synth_healthy(dir: &Path) {
    let out = run(&[
        "synth",
        "--out",
        path_str(dir),
        "--snapshots",
        "60",
        "--samples",
        "2048",
        "--onset",
        "60",
        "--growth",
        "0.0",
        "--seed",
        "11",
    ]);
    assert_eq!(out.status.code(), Some(0), "synth failed: {out:?}");
}

fn train_args<'a>(dataset: &'a Path, model: &'a Path) -> Vec<String> {
    [
        "train",
        "--dataset",
        path_str(dataset),
        "--channels",
        "bearing1=1",
        "--window-len",
        "64",
        "--hop",
        "16",
        "--p",
        "4",
        "--k-min",
        "1",
        "--k-max",
        "4",
        "--restarts",
        "4",
        "--hmm-max-iter",
        "60",
        "--seed",
        "13",
        "--out",
        path_str(model),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn train(dataset: &Path, model: &Path) {
    let args = train_args(dataset, model);
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = run(&refs);
    assert_eq!(
        out.status.code(),
        Some(0),
        "train failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(model.exists(), "train must leave a model file behind");
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    entries.sort();
    entries
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_str().unwrap().to_string(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn synth_is_deterministic_per_seed() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let c = TempDir::new().unwrap();
    synth_faulted(a.path());
    synth_faulted(b.path());
    assert_eq!(
        dir_contents(a.path()),
        dir_contents(b.path()),
        "same seed must reproduce every snapshot byte for byte"
    );
    let out = run(&[
        "synth",
        "--out",
        path_str(c.path()),
        "--snapshots",
        "60",
        "--samples",
        "2048",
        "--onset",
        "40",
        "--growth",
        "1.0",
        "--seed",
        "12",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_ne!(
        dir_contents(a.path()),
        dir_contents(c.path()),
        "a different seed must change the data"
    );
}

#[test]
fn train_then_monitor_flags_the_degradation_with_exit_two() {
    let data = TempDir::new().unwrap();
    let work = TempDir::new().unwrap();
    synth_faulted(data.path());
    let model = work.path().join("model.json");
    train(data.path(), &model);

    let csv_path = work.path().join("verdicts.csv");
    let out = run(&[
        "monitor",
        "--model",
        path_str(&model),
        "--dataset",
        path_str(data.path()),
        "--out",
        path_str(&csv_path),
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "a degrading run must exit with code 2: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "reading_index,timestamp,loglik,zscore,alarm");
    assert_eq!(lines.len(), 61, "header plus one row per snapshot");
    for (i, line) in lines[1..].iter().enumerate() {
        assert!(
            line.starts_with(&format!("{},", i + 1)),
            "row {i} out of order: {line}"
        );
    }
    let last = lines.last().unwrap();
    assert!(
        last.ends_with(",true"),
        "end of life must alarm, got: {last}"
    );

    // summary lands on stdout when the CSV goes to a file
    let summary = String::from_utf8_lossy(&out.stdout);
    assert!(summary.contains("degradation onset"), "summary: {summary}");
}

#[test]
fn monitor_without_out_streams_csv_to_stdout() {
    let data = TempDir::new().unwrap();
    let work = TempDir::new().unwrap();
    synth_faulted(data.path());
    let model = work.path().join("model.json");
    train(data.path(), &model);

    let out = run(&[
        "monitor",
        "--model",
        path_str(&model),
        "--dataset",
        path_str(data.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("reading_index,timestamp,loglik,zscore,alarm\n"));
    assert_eq!(stdout.lines().count(), 61);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("degradation onset"),
        "summary must move to stderr when the CSV owns stdout"
    );
}

#[test]
fn monitoring_a_healthy_run_exits_zero() {
    let faulted = TempDir::new().unwrap();
    let healthy = TempDir::new().unwrap();
    let work = TempDir::new().unwrap();
    synth_faulted(faulted.path());
    synth_healthy(healthy.path());
    let model = work.path().join("model.json");
    train(faulted.path(), &model);

    let out = run(&[
        "monitor",
        "--model",
        path_str(&model),
        "--dataset",
        path_str(healthy.path()),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "no sustained degradation, so exit 0: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn errors_exit_one_and_leave_no_partial_model() {
    let work = TempDir::new().unwrap();
    let model = work.path().join("model.json");
    let missing = work.path().join("does-not-exist");
    let args = train_args(&missing, &model);
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = run(&refs);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let leftovers: Vec<_> = std::fs::read_dir(work.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert!(
        leftovers.is_empty(),
        "failed training must not leave files behind, found {leftovers:?}"
    );

    // monitoring with a bad model path must also exit 1
    let out = run(&[
        "monitor",
        "--model",
        path_str(&model),
        "--dataset",
        path_str(work.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn elbow_subcommand_emits_the_curve() {
    let data = TempDir::new().unwrap();
    let work = TempDir::new().unwrap();
    synth_faulted(data.path());
    let curve_path = work.path().join("elbow.csv");
    let out = run(&[
        "elbow",
        "--dataset",
        path_str(data.path()),
        "--channels",
        "bearing1=1",
        "--window-len",
        "64",
        "--hop",
        "16",
        "--p",
        "4",
        "--k-min",
        "1",
        "--k-max",
        "4",
        "--restarts",
        "4",
        "--seed",
        "13",
        "--out",
        path_str(&curve_path),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(&curve_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "k,wcss");
    assert_eq!(lines.len(), 5, "header plus one row per candidate k");
    assert!(String::from_utf8_lossy(&out.stderr).contains("selected k ="));

    // WCSS must not increase with k
    let wcss: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    for pair in wcss.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-9, "WCSS rose with k: {wcss:?}");
    }
}

#[test]
fn fixed_state_count_skips_the_elbow() {
    let data = TempDir::new().unwrap();
    let work = TempDir::new().unwrap();
    synth_faulted(data.path());
    let model = work.path().join("model.json");
    let mut args = train_args(data.path(), &model);
    args.push("--states".into());
    args.push("2".into());
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = run(&refs);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("(fixed)"));

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(json["hmm"]["pi"].as_array().unwrap().len(), 2);
    assert_eq!(json["format_version"], 1);
}

#[test]
fn training_twice_yields_the_same_model_payload() {
    let data = TempDir::new().unwrap();
    let work = TempDir::new().unwrap();
    synth_faulted(data.path());
    let first = work.path().join("first.json");
    let second = work.path().join("second.json");
    train(data.path(), &first);
    train(data.path(), &second);
    let mut a: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&first).unwrap()).unwrap();
    let mut b: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&second).unwrap()).unwrap();
    // only the creation stamp may differ between identical training runs
    a["created_utc"] = serde_json::Value::String(String::new());
    b["created_utc"] = serde_json::Value::String(String::new());
    assert_eq!(a, b);
}
