//! End-to-end checks of the binary: exit codes, output invariants, and
//! manifest replay. Everything runs against small inputs in a temp dir.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_trackcull");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary should launch")
}

fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "expected success for {:?}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

fn json_file(dir: &Path, name: &str) -> serde_json::Value {
    let body = fs::read_to_string(dir.join(name)).expect("readable output");
    serde_json::from_str(&body).expect("valid JSON output")
}

/// simulate -> extract (both modes) -> train a throwaway network, shared
/// by the tests that only need plausible files on disk.
fn fixture(dir: &Path) {
    run_ok(
        dir,
        &["simulate", "--events", "60", "--seed", "9", "-o", "events.jsonl"],
    );
    run_ok(
        dir,
        &[
            "extract", "-i", "events.jsonl", "--mode", "training", "-o", "train.csv",
        ],
    );
    run_ok(
        dir,
        &[
            "extract", "-i", "events.jsonl", "--mode", "evaluation", "-o", "eval.csv",
        ],
    );
    run_ok(
        dir,
        &[
            "train", "-i", "train.csv", "--model", "mlp", "--hidden", "8", "--max-epochs",
            "2", "-o", "mlp.json",
        ],
    );
}

#[test]
fn simulate_is_deterministic_and_seed_sensitive() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let args = ["simulate", "--events", "80", "--seed", "42", "-o"];

    run_ok(dir, &[&args[..], &["a.jsonl"]].concat());
    run_ok(dir, &[&args[..], &["b.jsonl"]].concat());
    run_ok(
        dir,
        &["simulate", "--events", "80", "--seed", "43", "-o", "c.jsonl"],
    );

    let a = fs::read(dir.join("a.jsonl")).unwrap();
    let b = fs::read(dir.join("b.jsonl")).unwrap();
    let c = fs::read(dir.join("c.jsonl")).unwrap();
    assert_eq!(a, b, "same seed must reproduce the event file exactly");
    assert_ne!(a, c, "a different seed must change the events");
}

#[test]
fn bad_flags_exit_1() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();

    let cases: &[&[&str]] = &[
        &["simulate", "--events", "-1", "-o", "x.jsonl"],
        &["simulate", "-o", "x.jsonl"],
        &["extract", "-i", "x.jsonl", "--strategy", "bogus", "-o", "x.csv"],
        &["simulate", "--events", "5", "--noise-mean", "-2", "-o", "x.jsonl"],
    ];
    for args in cases {
        let out = run(dir, args);
        assert_eq!(exit_code(&out), 1, "args {args:?} should be a usage error");
    }

    let help = run(dir, &["--help"]);
    assert_eq!(exit_code(&help), 0, "--help is not an error");
}

#[test]
fn unreadable_or_malformed_input_exits_2() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    run_ok(
        dir,
        &["simulate", "--events", "5", "--seed", "1", "-o", "events.jsonl"],
    );

    let missing = run(dir, &["extract", "-i", "nope.jsonl", "-o", "x.csv"]);
    assert_eq!(exit_code(&missing), 2);

    // Events are not a dataset; the CSV reader must reject them.
    let malformed = run(
        dir,
        &["train", "-i", "events.jsonl", "--model", "ert", "-o", "x.json"],
    );
    assert_eq!(exit_code(&malformed), 2);
}

#[test]
fn train_records_hyperparams_in_the_model_file() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fixture(dir);

    run_ok(
        dir,
        &[
            "train", "-i", "train.csv", "--model", "mlp", "--max-epochs", "1", "-o",
            "defaults.json",
        ],
    );
    let mlp = json_file(dir, "defaults.json");
    assert_eq!(mlp["kind"], "mlp");
    assert_eq!(mlp["hyperparams"]["hidden_layers"], serde_json::json!([64, 64, 64]));
    assert_eq!(mlp["hyperparams"]["batch_size"], 32);

    run_ok(
        dir,
        &["train", "-i", "train.csv", "--model", "ert", "-o", "forest.json"],
    );
    let ert = json_file(dir, "forest.json");
    assert_eq!(ert["kind"], "ert");
    assert_eq!(ert["hyperparams"]["n_estimators"], 300);
    assert_eq!(ert["hyperparams"]["max_depth"], serde_json::Value::Null);
}

#[test]
fn evaluate_report_is_internally_consistent() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fixture(dir);

    let out = run_ok(
        dir,
        &[
            "evaluate", "--model", "mlp.json", "-i", "eval.csv", "-o", "report.json",
        ],
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("A1"), "summary table missing from stdout");
    assert!(stdout.contains("Time to Predict"), "latency rows missing");

    let report = json_file(dir, "report.json");
    assert_eq!(report["model_kind"], "mlp");
    assert_eq!(report["n_samples"], 60);

    let a1 = report["a1"].as_f64().unwrap();
    let af = report["af"].as_f64().unwrap();
    assert_eq!(a1 + af, 1.0, "a1 and af must partition the samples exactly");

    let c = &report["confusion"];
    let (tn, fp) = (c[0][0].as_u64().unwrap(), c[0][1].as_u64().unwrap());
    let (fnn, tp) = (c[1][0].as_u64().unwrap(), c[1][1].as_u64().unwrap());
    let n_rows = report["n_rows"].as_u64().unwrap();
    assert_eq!(tn + fp + fnn + tp, n_rows);
    let accuracy = report["accuracy"].as_f64().unwrap();
    assert_eq!(accuracy, (tp + tn) as f64 / n_rows as f64);
}

#[test]
fn manifests_replay_byte_identically() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fixture(dir);

    for output in ["train.csv", "mlp.json"] {
        let manifest = json_file(dir, &format!("{output}.manifest.json"));
        let args: Vec<String> = manifest["command"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_str().unwrap().to_string())
            .collect();

        let original = fs::read(dir.join(output)).unwrap();
        let replay = Command::new(BIN)
            .args(&args)
            .current_dir(dir)
            .output()
            .unwrap();
        assert!(replay.status.success(), "replaying {output} failed");
        let rewritten = fs::read(dir.join(output)).unwrap();
        assert_eq!(original, rewritten, "replay of {output} changed the bytes");
    }
}

#[test]
fn benchmark_at_threshold_zero_matches_conventional() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fixture(dir);
    run_ok(
        dir,
        &[
            "simulate", "--events", "150", "--noise-mean", "0.5", "--seed", "5", "-o",
            "sparse.jsonl",
        ],
    );

    run_ok(
        dir,
        &[
            "benchmark", "--model", "mlp.json", "-i", "sparse.jsonl", "--threshold", "0",
            "-o", "bench.json",
        ],
    );
    let report = json_file(dir, "bench.json");

    // Fitting everything the conventional path fits means identical choices.
    assert_eq!(report["candidate_reduction"], 1.0);
    for bin in report["bins"].as_array().unwrap() {
        if bin["n_conv"].as_u64().unwrap() > 0 {
            assert_eq!(bin["ratio"], 1.0, "bin {bin} diverged at threshold 0");
        }
    }

    let csv = fs::read_to_string(dir.join("bench.csv")).unwrap();
    assert!(csv.starts_with("bin_low,bin_high,ratio,n_ai,n_conv\n"));
    assert_eq!(csv.lines().count(), 10, "9 bins behind the header");
}

#[test]
fn study_reports_all_three_strategies() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    run_ok(
        dir,
        &["simulate", "--events", "80", "--seed", "3", "-o", "events.jsonl"],
    );

    let out = run_ok(
        dir,
        &[
            "study", "-i", "events.jsonl", "--hidden", "8", "--max-epochs", "1", "-o",
            "study.json",
        ],
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    for name in ["closest-neighbor", "random", "least-likely"] {
        assert!(stdout.contains(name), "{name} missing from the summary");
    }

    let report = json_file(dir, "study.json");
    let strategies: Vec<&str> = report["outcomes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["strategy"].as_str().unwrap())
        .collect();
    assert_eq!(strategies, ["closest-neighbor", "random", "least-likely"]);
    assert_eq!(report["n_train_events"], 40);
    assert_eq!(report["n_test_events"], 40);
}
