use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pass(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pass"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn gen(dir: &Path, users: &str, pas: &str) -> PathBuf {
    let out = pass(
        &[
            "gen", "--count", "3", "--seed", "5", "--users", users, "--pas", pas, "-o", "sc.json",
        ],
        dir,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    dir.join("sc.json")
}

#[test]
fn gen_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let first = fs::read(gen(dir.path(), "2", "3")).unwrap();
    let second = fs::read(gen(dir.path(), "2", "3")).unwrap();
    assert_eq!(first, second);
    let text = String::from_utf8(first).unwrap();
    assert!(text.contains("\"schema_version\": 1"));
}

#[test]
fn solve_eval_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d, "2", "2");
    let out = pass(
        &[
            "solve",
            "-s",
            "sc.json",
            "-m",
            "uniform",
            "-o",
            "u.csv",
            "--solutions",
            "u.json",
        ],
        d,
    );
    assert!(out.status.success());
    let out = pass(&["eval", "-s", "sc.json", "-i", "u.json", "-o", "e.csv"], d);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let solved = fs::read_to_string(d.join("u.csv")).unwrap();
    let scored = fs::read_to_string(d.join("e.csv")).unwrap();
    let rate = |csv: &str| -> Vec<String> {
        csv.lines()
            .skip(1)
            .map(|l| l.split(',').nth(3).unwrap().to_string())
            .collect()
    };
    assert_eq!(rate(&solved), rate(&scored));

    let out = pass(
        &[
            "report",
            "u.csv",
            "e.csv",
            "--axis",
            "l",
            "-o",
            "series.csv",
        ],
        d,
    );
    assert!(out.status.success());
    let series = fs::read_to_string(d.join("series.csv")).unwrap();
    assert_eq!(series.lines().next(), Some("method,x,mean,std,count"));
    assert_eq!(series.lines().count(), 2);
}

#[test]
fn kdl_search_parameters_are_scored_by_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d, "2", "2");
    let out = pass(
        &[
            "solve",
            "-s",
            "sc.json",
            "-m",
            "kdl-search",
            "--budget",
            "128",
            "-o",
            "k.csv",
            "--kkt-out",
            "k.json",
        ],
        d,
    );
    assert!(out.status.success());
    let out = pass(
        &[
            "eval",
            "-s",
            "sc.json",
            "-i",
            "k.json",
            "--method",
            "kdl-search",
            "-o",
            "e.csv",
        ],
        d,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let scored = fs::read_to_string(d.join("e.csv")).unwrap();
    assert_eq!(
        scored
            .lines()
            .filter(|l| l.contains(",kdl_search,"))
            .count(),
        3
    );
}

#[test]
fn oversized_oracle_writes_error_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d, "2", "4");
    let out = pass(
        &["solve", "-s", "sc.json", "-m", "oracle", "-o", "o.csv"],
        d,
    );
    assert!(out.status.success());
    let rows = fs::read_to_string(d.join("o.csv")).unwrap();
    assert_eq!(rows.lines().filter(|l| l.contains("too large")).count(), 3);

    let out = pass(
        &[
            "solve", "-s", "sc.json", "-m", "oracle", "-o", "o.csv", "--strict",
        ],
        d,
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn mmpdd_trace_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d, "2", "2");
    let out = pass(
        &[
            "solve",
            "-s",
            "sc.json",
            "-m",
            "mmpdd",
            "-o",
            "m.csv",
            "--trace-dir",
            "traces",
            "--strict",
        ],
        d,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let trace = fs::read_to_string(d.join("traces/s00000.csv")).unwrap();
    assert!(trace.starts_with("outer_iter,inner_sweeps,sum_rate,al_value,residual_inf,rho"));
}

#[test]
fn dataset_has_two_features_per_user() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d, "3", "1");
    assert!(pass(&["dataset", "-s", "sc.json", "-o", "ds.json"], d)
        .status
        .success());
    let text = fs::read_to_string(d.join("ds.json")).unwrap();
    assert_eq!(text.matches("\"scenario_id\"").count(), 3);
}

#[test]
fn empty_report_succeeds_with_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = pass(&["report", "-o", "empty.csv"], dir.path());
    assert!(out.status.success());
    assert_eq!(
        fs::read_to_string(dir.path().join("empty.csv")).unwrap(),
        "method,x,mean,std,count\n"
    );
}

#[test]
fn invalid_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        pass(
            &[
                "solve",
                "-s",
                "missing.json",
                "-m",
                "uniform",
                "-o",
                "x.csv"
            ],
            d
        )
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        pass(&["solve", "-s", "x.json", "-m", "bogus", "-o", "x.csv"], d)
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        pass(&["gen", "--users", "0", "-o", "x.json"], d)
            .status
            .code(),
        Some(2)
    );
    fs::write(d.join("bad.csv"), "a,b\n1,2\n").unwrap();
    assert_eq!(
        pass(&["report", "bad.csv", "-o", "s.csv"], d).status.code(),
        Some(2)
    );

    gen(d, "2", "2");
    let out = Command::new(env!("CARGO_BIN_EXE_pass"))
        .current_dir(d)
        .env("PASS_THREADS", "zero")
        .args(["solve", "-s", "sc.json", "-m", "uniform", "-o", "x.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
