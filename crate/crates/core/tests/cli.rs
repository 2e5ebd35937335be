use std::path::Path;
use std::process::{Command, Output};

fn mvlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvlab")).args(args).output().expect("run mvlab")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

const SADDLE: &[&str] = &[
    "op=pucci-:theta=1,Theta=2",
    "family=band:theta=1,Theta=2",
    "u=0.5*x1^2-0.5*x2^2",
    "x=0,0",
];

#[test]
fn verify_saddle_converges_to_minus_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("saddle");
    let mut args = vec!["verify"];
    args.extend(SADDLE);
    args.extend(["--expect", "converges", "--out", out.to_str().unwrap()]);
    let o = mvlab(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(dir.path().join("saddle.summary.txt")).unwrap();
    assert!(summary.contains("target: -1"), "{summary}");
    let csv = std::fs::read_to_string(dir.path().join("saddle.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "eps,mean,delta,residual,matrix_id");
    for row in csv.lines().skip(1) {
        let delta: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!((delta + 1.0).abs() < 1e-9, "{row}");
    }
}

#[test]
fn mismatched_expectation_exits_one() {
    let mut args = vec!["verify"];
    args.extend(SADDLE);
    args.extend(["--expect", "diverges"]);
    assert_eq!(code(&mvlab(&args)), 1);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&mvlab(&["verify", "bogus=1"])), 2);
    assert_eq!(code(&mvlab(&["verify", "op=pucci-:theta=3,Theta=2", "u=x1", "x=0"])), 2);
}

#[test]
fn config_parse_errors_report_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "[experiment]\nkind = verify\n[field]\n  colour = red\n").unwrap();
    let o = mvlab(&["verify", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("4:3") || err.contains("line 4, column 3"), "{err}");
}

#[test]
fn shipped_experiments_all_match() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../experiments");
    let out = tempfile::tempdir().unwrap();
    let o = mvlab(&["table", dir.to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{stdout}");
    assert_eq!(stdout.lines().count(), 7, "{stdout}");
}
