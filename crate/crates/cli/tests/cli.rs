use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thirdrule"))
        .args(args)
        .env("THIRDRULE_THREADS", "2")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn allocate_splits_evenly() {
    let o = run(&["allocate", "--income", "60000"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    for bucket in ["debt", "savings", "expenses"] {
        assert!(out.contains(&format!("{bucket}: 20000.00")), "{out}");
    }
}

#[test]
fn negative_income_is_rejected() {
    let o = run(&["allocate", "--income", "-5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("income"));
}

#[test]
fn unknown_flag_is_usage_error() {
    let o = run(&["allocate", "--income", "100", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_file_is_io_error() {
    let o = run(&["stress", "--profiles", "/does/not/exist.csv", "--scenarios", fixture("scenarios.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("exist.csv"));
}

#[test]
fn help_documents_stress_flags() {
    let o = run(&["stress", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    for flag in ["--profiles", "--scenarios", "--rules", "--horizon", "--dt", "--trials", "--seed", "--output", "--format"] {
        assert!(out.contains(flag), "missing {flag}");
    }
}

fn stress_report(dir: &std::path::Path, name: &str) -> PathBuf {
    let out = dir.join(name);
    let o = run(&[
        "stress",
        "--profiles",
        fixture("profiles.csv").to_str().unwrap(),
        "--scenarios",
        fixture("scenarios.json").to_str().unwrap(),
        "--seed",
        "7",
        "--trials",
        "1000",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    out
}

#[test]
fn stress_report_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let path = stress_report(dir.path(), "report.csv");
    let actual = std::fs::read_to_string(path).unwrap();
    let golden = fixture("golden_report.csv");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&golden, &actual).unwrap();
    }
    assert_eq!(actual, std::fs::read_to_string(golden).unwrap());
}

#[test]
fn report_converts_between_formats() {
    let dir = tempfile::tempdir().unwrap();
    let csv = stress_report(dir.path(), "report.csv");
    let json = stress_report(dir.path(), "report.json");

    let o = run(&["report", "--input", csv.to_str().unwrap(), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), std::fs::read_to_string(&json).unwrap());

    let o = run(&["report", "--input", json.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), std::fs::read_to_string(&csv).unwrap());
}

#[test]
fn report_compare_ranks_rules() {
    let dir = tempfile::tempdir().unwrap();
    let csv = stress_report(dir.path(), "report.csv");
    let o = run(&["report", "--input", csv.to_str().unwrap(), "--compare"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert!(lines.next().unwrap().contains("rank"));
    // Three fixture profiles by four scenarios by three rules.
    assert_eq!(lines.count(), 36);
}

#[test]
fn shapley_is_efficient() {
    let o = run(&["shapley", "--incomes", "50000,40000,10000"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("100000.00"), "{}", stdout(&o));
}
