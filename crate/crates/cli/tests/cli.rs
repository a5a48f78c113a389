use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn nasforge(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nasforge"))
        .args(args)
        .current_dir(dir)
        .env_remove("NASFORGE_CONFIG")
        .output()
        .expect("binary runs")
}

fn success(dir: &Path, args: &[&str]) -> String {
    let out = nasforge(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    nasforge(dir, args).status.code().expect("exit code")
}

const TINY_AGENT: [&str; 8] = [
    "--agent-total-train-steps",
    "600",
    "--agent-learning-starts",
    "100",
    "--agent-batch-size",
    "8",
    "--agent-hidden",
    "8,8",
];

#[test]
fn bound_prints_the_exact_total() {
    let tmp = TempDir::new().unwrap();
    let out = success(tmp.path(), &["bound", "--max-vertices", "8", "--num-ops", "10"]);
    assert_eq!(out.trim(), "268143512722241");
}

#[test]
fn params_of_the_minimal_architecture() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("a.jsonl"), "{\"v\":2,\"edges\":[[0,1]],\"ops\":[]}\n").unwrap();
    let out = success(tmp.path(), &["params", "--arch-file", "a.jsonl"]);
    let row: Vec<&str> = out.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(row[3], "17");
}

#[test]
fn sampling_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    success(tmp.path(), &["sample", "--n", "40", "--seed", "3", "--out", "a.jsonl"]);
    success(tmp.path(), &["sample", "--n", "40", "--seed", "3", "--out", "b.jsonl"]);
    let a = fs::read(tmp.path().join("a.jsonl")).unwrap();
    assert_eq!(a, fs::read(tmp.path().join("b.jsonl")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 40);
    let stdout = success(tmp.path(), &["sample", "--n", "40", "--seed", "3"]);
    assert_eq!(stdout.as_bytes(), fs::read(tmp.path().join("a.jsonl")).unwrap());
}

#[test]
fn corpus_has_the_requested_shape() {
    let tmp = TempDir::new().unwrap();
    success(tmp.path(), &["gen-corpus", "--n-records", "300", "--out", "c.jsonl"]);
    let text = fs::read_to_string(tmp.path().join("c.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 300);
    let distinct: std::collections::HashSet<String> = text
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            format!("{}{}{}", v["v"], v["edges"], v["ops"])
        })
        .collect();
    assert_eq!(distinct.len(), 100);
}

#[test]
fn oracle_config_file_is_used() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("o.toml"), "n_records = 30\nseeds_per_arch = 2\nnoise_sigma = 0.0\n").unwrap();
    success(tmp.path(), &["gen-corpus", "--oracle-config", "o.toml", "--out", "c.jsonl"]);
    assert_eq!(fs::read_to_string(tmp.path().join("c.jsonl")).unwrap().lines().count(), 30);
}

#[test]
fn round_trip_from_sampling_to_search() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    success(d, &["sample", "--n", "200", "--seed", "1", "--out", "archs.jsonl"]);
    let table = success(d, &["params", "--arch-file", "archs.jsonl"]);
    assert_eq!(table.lines().count(), 201);
    success(d, &["gen-corpus", "--arch-file", "archs.jsonl", "--out", "corpus.jsonl"]);
    assert_eq!(fs::read_to_string(d.join("corpus.jsonl")).unwrap().lines().count(), 600);
    let table = success(
        d,
        &[
            "train-surrogate",
            "--kind",
            "ridge",
            "--records",
            "corpus.jsonl",
            "--report-out",
            "report.json",
            "--model-out",
            "model.json",
        ],
    );
    assert!(table.contains("Ridge"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["kind"], "ridge");
    assert_eq!(report["folds"].as_array().unwrap().len(), 5);
    for run in ["run1", "run2"] {
        success(
            d,
            &["search", "--strategy", "random", "--budget", "300", "--seeds", "4", "--model", "model.json", "--out-dir", run],
        );
    }
    let trace = fs::read_to_string(d.join("run1/trace.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "query,f1,params,utility,adversarial");
    assert_eq!(trace.lines().count(), 301);
    assert_eq!(trace, fs::read_to_string(d.join("run2/trace.csv")).unwrap());
    let pareto = fs::read_to_string(d.join("run1/pareto.csv")).unwrap();
    assert_eq!(pareto.lines().next().unwrap(), "snapshot,f1,params");
    assert_eq!(pareto.lines().last().unwrap().split(',').next().unwrap(), "30");
}

#[test]
fn rl_search_with_flag_overrides_and_checkpoint() {
    let tmp = TempDir::new().unwrap();
    let mut args = vec!["search", "--strategy", "rl", "--oracle", "--budget", "20", "--seeds", "0,1", "--out-dir", "rl", "--save-checkpoint"];
    args.extend(TINY_AGENT);
    success(tmp.path(), &args);
    for seed in ["seed-0", "seed-1"] {
        let dir = tmp.path().join("rl").join(seed);
        assert_eq!(fs::read_to_string(dir.join("trace.csv")).unwrap().lines().count(), 21);
        let ckpt: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("qnetwork.json")).unwrap()).unwrap();
        assert_eq!(ckpt["version"], 1);
        assert_eq!(ckpt["config"]["batch_size"], 8);
    }
}

#[test]
fn suite_writes_the_summary() {
    let tmp = TempDir::new().unwrap();
    let mut args = vec![
        "suite",
        "--strategies",
        "random,local,rl",
        "--seeds",
        "0..2",
        "--budget",
        "30",
        "--oracle",
        "--out-dir",
        "s",
    ];
    args.extend(TINY_AGENT);
    success(tmp.path(), &args);
    let summary = fs::read_to_string(tmp.path().join("s/suite_summary.csv")).unwrap();
    assert_eq!(
        summary.lines().next().unwrap(),
        "strategy,query,best_f1_mean,best_f1_std,best_params_mean,best_params_std,best_utility_mean,best_utility_std,adversarial_cumulative"
    );
    assert_eq!(summary.lines().count(), 1 + 3 * 30);
    let runs = fs::read_to_string(tmp.path().join("s/suite_runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 3 * 2);
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::write(d.join("run.toml"), "[search]\nbudget = 25\nseeds = [2]\n[io]\nout_dir = \"from-file\"\n").unwrap();
    success(d, &["--config", "run.toml", "search", "--strategy", "walk", "--oracle"]);
    assert_eq!(fs::read_to_string(d.join("from-file/trace.csv")).unwrap().lines().count(), 26);
    success(d, &["--config", "run.toml", "search", "--strategy", "walk", "--oracle", "--budget", "7", "--out-dir", "flag"]);
    assert_eq!(fs::read_to_string(d.join("flag/trace.csv")).unwrap().lines().count(), 8);
    let out = Command::new(env!("CARGO_BIN_EXE_nasforge"))
        .args(["search", "--strategy", "random", "--oracle", "--out-dir", "env"])
        .current_dir(d)
        .env("NASFORGE_CONFIG", d.join("run.toml"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(d.join("env/trace.csv")).unwrap().lines().count(), 26);
}

#[test]
fn malformed_input_exits_with_one() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::write(d.join("bad.toml"), "[agent]\nbogus = 1\n").unwrap();
    assert_eq!(code(d, &["--config", "bad.toml", "bound"]), 1);
    fs::write(d.join("bad.jsonl"), "{\"v\":2,\"edges\":[[0,1]],\"ops\":[]}\nnot json\n").unwrap();
    assert_eq!(code(d, &["params", "--arch-file", "bad.jsonl"]), 1);
    fs::write(d.join("invalid.jsonl"), "{\"v\":3,\"edges\":[[0,2]],\"ops\":[\"conv-3\"]}\n").unwrap();
    assert_eq!(code(d, &["params", "--arch-file", "invalid.jsonl"]), 1);
    assert_eq!(code(d, &["params", "--arch-file", "missing.jsonl"]), 1);
    assert_eq!(code(d, &["search", "--strategy", "bogus", "--oracle"]), 1);
    assert_eq!(code(d, &["search", "--strategy", "random"]), 1);
    assert_eq!(code(d, &["no-such-command"]), 1);
}

#[test]
fn limit_violations_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_eq!(code(d, &["search", "--strategy", "random", "--oracle", "--budget", "0"]), 2);
    assert_eq!(code(d, &["sample", "--max-vertices", "9"]), 2);
    assert_eq!(code(d, &["bound", "--max-vertices", "1"]), 2);
}

#[test]
fn help_succeeds() {
    let tmp = TempDir::new().unwrap();
    for cmd in ["sample", "params", "bound", "gen-corpus", "train-surrogate", "search", "suite"] {
        let out = success(tmp.path(), &[cmd, "--help"]);
        assert!(out.contains("Usage"));
    }
}
