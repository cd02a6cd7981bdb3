use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_confirm-lsh"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small() -> Vec<&'static str> {
    vec!["--set", "n=200", "--set", "queries=12", "--seed", "7"]
}

fn with(extra: &[&str], out: &Path) -> Vec<String> {
    let mut args: Vec<String> = small().into_iter().map(String::from).collect();
    args.extend(extra.iter().map(|s| s.to_string()));
    args.push("--out".into());
    args.push(out.display().to_string());
    args
}

fn run(args: &[String]) -> Output {
    cli(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

#[test]
fn build_then_query_matches_in_memory_run() {
    let dir = tempfile::tempdir().unwrap();
    let structure = dir.path().join("ensemble.lshe");
    let built = run(&with(&["build"], &structure));
    assert!(built.status.success(), "{}", String::from_utf8_lossy(&built.stderr));
    let again = dir.path().join("again.lshe");
    assert!(run(&with(&["build"], &again)).status.success());
    assert_eq!(fs::read(&structure).unwrap(), fs::read(&again).unwrap(), "same seed, same bytes");

    let from_file = dir.path().join("a.jsonl");
    let s = structure.display().to_string();
    assert!(run(&with(&["query", "--structure", &s], &from_file)).status.success());
    let in_memory = dir.path().join("b.jsonl");
    assert!(run(&with(&["query"], &in_memory)).status.success());
    assert_eq!(fs::read(&from_file).unwrap(), fs::read(&in_memory).unwrap());
}

#[test]
fn natural_forest_round_trips_too() {
    let dir = tempfile::tempdir().unwrap();
    let forest = dir.path().join("forest.lshf");
    assert!(run(&with(&["--set", "algorithm=natural", "build"], &forest)).status.success());
    let a = dir.path().join("a.jsonl");
    let f = forest.display().to_string();
    assert!(run(&with(&["--set", "algorithm=natural", "query", "--structure", &f], &a)).status.success());
    let b = dir.path().join("b.jsonl");
    assert!(run(&with(&["--set", "algorithm=natural", "query"], &b)).status.success());
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn zero_depth_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&with(&["--set", "K=0", "build"], &dir.path().join("x")));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("K must be"));
}

#[test]
fn brute_queries_have_full_recall() {
    let out = cli(&["--set", "n=150", "--set", "queries=10", "--set", "algorithm=brute", "query"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let summary = text.lines().last().unwrap();
    assert!(summary.contains("\"recall\":1.0"), "{summary}");
    assert_eq!(text.lines().count(), 12);
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small\ninstance = uniform\nn = 100\nqueries = 3\nalgorithm = table-cs\nseed = 1\n").unwrap();
    let out = cli(&["--config", cfg.to_str().unwrap(), "--seed", "5", "query"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = String::from_utf8(out.stdout).unwrap().lines().next().unwrap().to_string();
    assert!(first.contains("\"kind\":\"uniform-hamming\""));
    assert!(first.contains("\"seed\":5"));
    assert!(first.contains("\"algorithm\":\"table-cs\""));
}

#[test]
fn generate_writes_a_loadable_instance() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst");
    assert!(run(&with(&["generate"], &inst)).status.success());
    let cfg = format!("instance_dir={}", inst.display());
    let out = cli(&["--set", &cfg, "--set", "algorithm=brute", "query"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 14);
}

#[test]
fn verify_exit_codes() {
    let ok = cli(&["verify", "formats"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("PASS criterion 11"));
    assert_eq!(cli(&["verify", "no-such-suite"]).status.code(), Some(1));
}

#[test]
fn bench_writes_reports_and_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.cfg");
    fs::write(&cfg, "algorithms = brute, forest-adaptive\ninstances = planted-nn, distance-zero\nsizes = 64, 128\nqueries = 4\n").unwrap();
    let out_dir = dir.path().join("bench");
    let out = cli(&["--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "bench"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(out_dir.join("summary.tsv")).unwrap();
    assert_eq!(table.lines().count(), 9);
    for line in table.lines().skip(1).filter(|l| l.contains("\tbrute\t")) {
        assert!(line.contains("\t1.0000\t"), "{line}");
    }
    assert!(out_dir.join("distance-zero-128-forest-adaptive.jsonl").exists());
}

#[test]
fn dimension_mismatch_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let structure = dir.path().join("e.lshe");
    assert!(run(&with(&["build"], &structure)).status.success());
    let s = structure.display().to_string();
    let out = cli(&["--set", "n=200", "--set", "queries=12", "--set", "dim=32", "--seed", "7", "query", "--structure", &s]);
    assert_eq!(out.status.code(), Some(1));
}
