//! End-to-end checks of the command-line interface: file layout, exit
//! codes, the usage contract around `--set` and `--force`, and the paper
//! trails (manifests, CSVs) being reproducible.

use std::path::Path;
use std::process::{Command, Output};

use isograd::graph::{EDGES_FILE, FEATURES_FILE, LABELS_FILE};

fn isograd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isograd"))
        .args(args)
        .output()
        .expect("binary should launch")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

/// A dataset small enough that every command finishes in well under a
/// second, with enough structure that both chunks keep train nodes.
const TINY: &[&str] = &[
    "--set",
    "communities=2",
    "--set",
    "nodes_per_community=30",
    "--set",
    "feature_dim=8",
    "--set",
    "seed=5",
];

#[test]
fn generate_writes_dataset_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("data");
    let out = isograd(&[&["generate", "--out", out_dir.to_str().unwrap()], TINY].concat());
    assert!(out.status.success(), "{}", stderr_of(&out));
    for name in [EDGES_FILE, FEATURES_FILE, LABELS_FILE, "manifest.txt"] {
        assert!(out_dir.join(name).exists(), "missing {name}");
    }
    let manifest = String::from_utf8(read(&out_dir, "manifest.txt")).unwrap();
    assert!(manifest.contains("command = generate"));
    assert!(manifest.contains("seed = 5"));
    assert!(manifest.contains("nodes_per_community = 30"));
}

#[test]
fn generate_reruns_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let second = dir.path().join("b");
    for out_dir in [&first, &second] {
        let out = isograd(&[&["generate", "--out", out_dir.to_str().unwrap()], TINY].concat());
        assert!(out.status.success(), "{}", stderr_of(&out));
    }
    for name in [EDGES_FILE, FEATURES_FILE, LABELS_FILE, "manifest.txt"] {
        assert_eq!(read(&first, name), read(&second, name), "{name} differs between reruns");
    }
}

#[test]
fn existing_outputs_need_force() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("data");
    let args = |extra: &'static [&'static str]| {
        [&["generate", "--out", out_dir.to_str().unwrap()], TINY, extra].concat()
    };
    assert!(isograd(&args(&[])).status.success());

    let clobber = isograd(&args(&[]));
    assert_eq!(clobber.status.code(), Some(2), "overwrite without --force should be refused");
    assert!(stderr_of(&clobber).contains("--force"));

    let forced = isograd(&args(&["--force"]));
    assert!(forced.status.success(), "{}", stderr_of(&forced));
}

#[test]
fn unknown_config_key_is_a_usage_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = isograd(&[
        "train",
        "--out",
        dir.path().join("run").to_str().unwrap(),
        "--set",
        "epcohs=3",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("epcohs"), "stderr: {}", stderr_of(&out));

    let out = isograd(&[
        "train",
        "--out",
        dir.path().join("run2").to_str().unwrap(),
        "--set",
        "no-equals-sign",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("no-equals-sign"));
}

#[test]
fn train_writes_metrics_checkpoint_and_reproducible_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = isograd(&[&["generate", "--out", data.to_str().unwrap()], TINY].concat());
    assert!(out.status.success(), "{}", stderr_of(&out));

    let dataset_override = format!("dataset={}", data.display());
    let run_args = |out_dir: &Path| {
        vec![
            "train".to_string(),
            "--out".into(),
            out_dir.to_str().unwrap().into(),
            "--set".into(),
            dataset_override.clone(),
            "--set".into(),
            "epochs=2".into(),
            "--set".into(),
            "chunks=2".into(),
            "--set".into(),
            "workers=2".into(),
            "--set".into(),
            "phases_max=2".into(),
            "--set".into(),
            "hidden_dim=16".into(),
            "--set".into(),
            "batch_size=16".into(),
            "--set".into(),
            "seed=5".into(),
        ]
    };

    let first = dir.path().join("run-a");
    let second = dir.path().join("run-b");
    for out_dir in [&first, &second] {
        let args = run_args(out_dir);
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = isograd(&refs);
        assert!(out.status.success(), "{}", stderr_of(&out));
        assert!(out_dir.join("model.ckpt").exists());
    }

    let metrics = String::from_utf8(read(&first, "metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    // The column order is a published contract; downstream joins depend
    // on it.
    assert_eq!(
        lines.next().unwrap(),
        "epoch,super_epoch,phases,loss,train_acc,valid_acc,test_acc,\
         coverage_factor_mean,grad_bytes,remote_bytes,repartition_bytes,seconds"
    );
    // Row 0 evaluates the untrained model, then one row per epoch.
    assert_eq!(lines.count(), 3);

    assert_eq!(read(&first, "metrics.csv"), read(&second, "metrics.csv"));
    assert_eq!(read(&first, "manifest.txt"), read(&second, "manifest.txt"));
}

#[test]
fn partition_writes_layout_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("layout");
    let out = isograd(
        &[
            &["partition", "--out", out_dir.to_str().unwrap()],
            TINY,
            &["--set", "chunks=3", "--set", "workers=3", "--set", "phases_max=3"],
        ]
        .concat(),
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    for name in ["chunks.csv", "layout.bin", "manifest.txt"] {
        assert!(out_dir.join(name).exists(), "missing {name}");
    }
    assert!(stdout_of(&out).contains("3 chunks"));
}

#[test]
fn traffic_reports_zero_bytes_for_a_single_partition() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("traffic");
    let out = isograd(
        &[
            &["traffic", "--out", out_dir.to_str().unwrap()],
            TINY,
            &["--set", "traffic_partitions=1,2", "--set", "fanouts=4,4", "--set", "batch_size=8"],
        ]
        .concat(),
    );
    assert!(out.status.success(), "{}", stderr_of(&out));

    let csv = String::from_utf8(read(&out_dir, "traffic.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "partitions,strategy,bytes");
    // One whole-graph row per strategy, nothing remote to fetch.
    let singles: Vec<&&str> = lines.iter().filter(|l| l.starts_with("1,")).collect();
    assert_eq!(singles.len(), 2);
    for line in singles {
        assert!(line.ends_with(",0"), "single partition should move nothing: {line}");
    }
    let doubles = lines.iter().filter(|l| l.starts_with("2,")).count();
    assert_eq!(doubles, 2);
}

#[test]
fn verify_runs_only_the_requested_suite() {
    let out = isograd(&["verify", "--only", "coverage"]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("uncovered chunk pairs"), "stdout: {text}");
    assert!(!text.contains("gradient check"), "other suites should be skipped: {text}");

    let bogus = isograd(&["verify", "--only", "entropy"]);
    assert_eq!(bogus.status.code(), Some(2));
    assert!(stderr_of(&bogus).contains("entropy"));
}

#[test]
fn verify_writes_the_report_csv_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("report");
    let out = isograd(&[
        "verify",
        "--only",
        "coverage",
        "--only",
        "projection",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let csv = String::from_utf8(read(&out_dir, "verify.csv")).unwrap();
    assert!(csv.starts_with("quantity,reference,estimate,abs_error,band,samples,tolerance,pass"));
    // Nine projection cases plus the coverage rollup.
    assert_eq!(csv.lines().count(), 11);
    assert!(csv.lines().skip(1).all(|l| l.ends_with("true")));
}
