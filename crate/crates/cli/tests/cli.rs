use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hypersearch"))
}

#[test]
fn optimize_then_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("trials.jsonl");
    let out = bin()
        .args(["optimize", "--loss", "quad1d", "--algo", "random", "--max-trials", "12"])
        .args(["--workers", "2", "--seed", "3", "--db"])
        .arg(&db)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("12 trials in store (12 ok)"));

    let csv = dir.path().join("report.csv");
    let out = bin().args(["report", "--db"]).arg(&db).args(["--csv"]).arg(&csv).output().unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("T,best_loss\n"));
    assert_eq!(text.lines().take_while(|l| !l.is_empty()).count(), 13);
}

#[test]
fn resume_appends_only_the_difference() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("trials.jsonl");
    for max in ["5", "9"] {
        let out = bin()
            .args(["optimize", "--loss", "quad1d", "--max-trials", max, "--db"])
            .arg(&db)
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let lines = std::fs::read_to_string(&db).unwrap().lines().count();
    assert_eq!(lines, 9);
}

#[test]
fn sample_prints_one_json_object_per_line() {
    let dir = tempfile::tempdir().unwrap();
    let space = dir.path().join("s.space");
    std::fs::write(&space, "x = uniform(0, 1)\nk = choice(0, normal(0, 1))\n").unwrap();
    let out = bin()
        .args(["sample", "--n", "4", "--seed", "9", "--space"])
        .arg(&space)
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 4);
    for line in lines {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("x").is_some());
    }
}

#[test]
fn validate_reports_labels_and_rejects_bad_spaces() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.space");
    std::fs::write(&good, "x = uniform(0, 1)\n").unwrap();
    let out = bin().args(["validate", "--space"]).arg(&good).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("ok: 1 labels"));

    let bad = dir.path().join("bad.space");
    std::fs::write(&bad, "x = uniform(5, 1)\n").unwrap();
    let out = bin().args(["validate", "--space"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_codes_distinguish_usage_from_data_errors() {
    let out = bin().args(["optimize", "--loss", "nope", "--db", "/tmp/unused.jsonl"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1), "unknown loss is a usage error");

    let out = bin().args(["report", "--db", "/definitely/missing.jsonl"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "missing database is a data error");

    let out = bin().args(["frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1), "bad subcommand is a usage error");

    let out = bin().args(["--help"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}
