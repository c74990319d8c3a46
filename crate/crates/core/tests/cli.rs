use std::fs;
use std::process::Command;

use tokenprune::harness::{cli_main, read_json_report};
use tokenprune::Schedule;

fn call(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cli_main(
        std::iter::once("tokenprune").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_tokenprune");
    let ok = Command::new(bin)
        .args(["crossover", "--d", "768", "--h", "12"])
        .output()
        .unwrap();
    assert!(ok.status.success());
    assert_eq!(String::from_utf8_lossy(&ok.stdout), "1530\n");
    let bad = Command::new(bin)
        .args(["flops", "--n", "8"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("Usage"));
    let unknown = Command::new(bin)
        .args(["crossover", "--d", "1", "--h", "1", "--x"])
        .output()
        .unwrap();
    assert!(!unknown.status.success());
}

#[test]
fn flops_subcommand_values() {
    let (code, out, _) = call(&["flops", "--n", "512", "--d", "768", "--h", "12"]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines.contains(&"MHA 3222798336"));
    assert!(lines.contains(&"FFNN 4831444992"));
    assert!(lines.contains(&"  component_sum 3222405120"));
    let (_, out, _) = call(&["flops", "--n", "1531", "--d", "768", "--h", "12"]);
    assert!(out.lines().any(|l| l == "FFNN-MHA -1083948"));
}

#[test]
fn run_reports_speedup_only_when_pruning() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    let (code, _, err) = call(&[
        "gen-corpus",
        "--n",
        "12",
        "--min-len",
        "10",
        "--max-len",
        "60",
        "--seed",
        "3",
        "--out",
        corpus.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(fs::read_to_string(&corpus).unwrap().lines().count(), 12);

    let report = |schedule: &str, name: &str| {
        let path = dir.path().join(name);
        let (code, out, err) = call(&[
            "run",
            "--corpus",
            corpus.to_str().unwrap(),
            "--schedule",
            schedule,
            "--dims",
            "desk-small",
            "--batch-size",
            "4",
            "--seed",
            "1",
            "--report",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{err}");
        assert!(out.contains("speedup"));
        read_json_report(&path).unwrap()
    };
    let none = report("none", "none.json");
    let all = report("all", "all.json");
    assert_eq!(none.speedup, 1.0);
    assert_eq!(all.config.schedule, Schedule::All);
    assert_eq!(all.config.seed, Some(1));
    assert!(all.config.merge);
    assert!(all.speedup > 1.0);
}

#[test]
fn run_flags_and_formats() {
    let dir = tempfile::tempdir().unwrap();
    let weights = dir.path().join("w.json");
    let (code, _, err) = call(&[
        "init-weights",
        "--dims",
        "custom",
        "--d",
        "16",
        "--h",
        "2",
        "--layers",
        "2",
        "--max-len",
        "32",
        "--vocab",
        "64",
        "--seed",
        "4",
        "--out",
        weights.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let csv_path = dir.path().join("r.csv");
    let (code, _, err) = call(&[
        "run",
        "--synthetic",
        "5",
        "--weights",
        weights.to_str().unwrap(),
        "--no-merge",
        "--alpha",
        "0.5",
        "--schedule",
        "even",
        "--report",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let text = fs::read_to_string(&csv_path).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 + 1);
    assert!(text.starts_with("layer,mean_kept_length,mha_flops,ffnn_flops"));

    let (code, out, _) = call(&[
        "run",
        "--synthetic",
        "3",
        "--dims",
        "desk-small",
        "--format",
        "json",
        "--no-merge",
    ]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["config"]["merge"], false);
    assert_eq!(v["config"]["alpha"], 1.0);

    let missing = dir.path().join("nope.jsonl");
    let (code, _, err) = call(&["run", "--corpus", missing.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("nope.jsonl"));
    let (code, _, _) = call(&["run", "--synthetic", "3", "--schedule", "sometimes"]);
    assert_ne!(code, 0);
}
