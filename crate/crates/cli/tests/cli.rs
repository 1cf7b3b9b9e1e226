use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn tablematch(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tablematch"))
        .args(args)
        .current_dir(dir)
        .env_remove("TABLEMATCH_SEED")
        .env_remove("TABLEMATCH_OUT")
        .env_remove("TABLEMATCH_CONFIG")
        .env_remove("TABLEMATCH_PARALLELISM")
        .env_remove("TABLEMATCH_EMBEDDER")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_error(out: &Output) -> serde_json::Value {
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).expect("error JSON on stderr");
    serde_json::from_str(line).unwrap()
}

fn generate(dir: &Path) {
    let out = tablematch(
        &["gen", "--tables", "4", "--rows", "100", "--clusters", "50", "--noise", "0.05", "--seed", "7", "--out", "data"],
        dir,
    );
    assert_eq!(stdout_json(&out)["truth_tuples"], 50);
}

fn write_config(dir: &Path, extra: &str) {
    let tables: Vec<String> = (0..4).map(|i| format!("\"data/table_{i}.csv\"")).collect();
    let text = format!(
        "tables = [{}]\ntruth = \"data/truth.jsonl\"\nout_dir = \"out\"\nm = 0.5\n{extra}",
        tables.join(", ")
    );
    std::fs::write(dir.join("run.toml"), text).unwrap();
}

#[test]
fn gen_match_and_score() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    write_config(dir.path(), "");
    let summary = stdout_json(&tablematch(&["match", "--config", "run.toml"], dir.path()));
    assert_eq!(summary["score"]["f1"], 1.0);
    assert_eq!(summary["selected_attributes"], serde_json::json!(["name", "city"]));
    for file in ["tuples.jsonl", "manifest.json", "merge_trace.jsonl", "score.json"] {
        assert!(dir.path().join("out").join(file).exists(), "{file}");
    }

    let report = stdout_json(&tablematch(
        &["score", "--pred", "out/tuples.jsonl", "--truth", "data/truth.jsonl"],
        dir.path(),
    ));
    assert_eq!(report["f1"], 1.0);
    assert_eq!(report["truth_tuples"], 50);
}

#[test]
fn flags_and_env_override_config() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    write_config(dir.path(), "seed = 1\n");
    let run = |par: &str, out: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_tablematch"))
            .args(["match", "--config", "run.toml", "--seed", "3", "--embedder", "hashing"])
            .env("TABLEMATCH_PARALLELISM", par)
            .env("TABLEMATCH_OUT", out)
            .current_dir(dir.path())
            .output()
            .unwrap();
        stdout_json(&status);
        std::fs::read(dir.path().join(out).join("tuples.jsonl")).unwrap()
    };
    assert_eq!(run("1", "p1"), run("4", "p4"));
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("p4/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 3);
    assert_eq!(manifest["config"]["parallelism"], 4);
}

#[test]
fn failures_report_json() {
    let dir = tempfile::tempdir().unwrap();
    let err = stderr_error(&tablematch(&["match", "--config", "missing.toml"], dir.path()));
    assert_eq!(err["error"]["kind"], "Io");

    std::fs::write(dir.path().join("bad.toml"), "tables = [\"a.csv\"]\nbogus = 1\n").unwrap();
    let err = stderr_error(&tablematch(&["match", "--config", "bad.toml"], dir.path()));
    assert_eq!(err["error"]["kind"], "Config");

    let err = stderr_error(&tablematch(&["gen", "--tables", "2", "--rows", "3", "--clusters", "50", "--out", "x"], dir.path()));
    assert_eq!(err["error"]["kind"], "InvalidParams");

    generate(dir.path());
    write_config(dir.path(), "");
    let err = stderr_error(&tablematch(&["match", "--config", "run.toml", "--embedder", "bert"], dir.path()));
    assert_eq!(err["error"]["kind"], "InvalidConfig");

    let err = stderr_error(&tablematch(&["frobnicate"], dir.path()));
    assert_eq!(err["error"]["kind"], "Usage");
}

#[test]
fn single_strategy_bench_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bench.toml"),
        "strategies = [\"hierarchical\"]\ns_values = [2]\nn = 50\nrepeats = 3\n",
    )
    .unwrap();
    let out = tablematch(&["bench", "--config", "bench.toml", "--out", "report.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "strategy,S,n,median_seconds,distance_evals,pairs_found");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("hierarchical,2,50,"));
}

#[test]
fn default_bench_finishes_in_time() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let out = tablematch(&["bench"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(start.elapsed() < Duration::from_secs(300), "took {:?}", start.elapsed());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 3);
}
