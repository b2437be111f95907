use std::path::Path;
use std::process::{Command, Output};

fn jitlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jitlab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn demo() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    let o = jitlab(tmp.path(), &["demo", "."]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("jitlab.toml").is_file());
    tmp
}

#[test]
fn full_run_then_cached_rerun() {
    let tmp = demo();
    let o = jitlab(tmp.path(), &["run"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = tmp.path().join("out");
    for f in [
        "commits.ndjson",
        "linkages.ndjson",
        "szz.ndjson",
        "metrics.csv",
        "filter_ledger.csv",
        "dataset.csv",
        "models/short.json",
        "evaluation/auc_long.csv",
        "importance.csv",
        "stability.csv",
        "stats/kruskal.csv",
        "run_manifest.json",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let header = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let header = header.lines().next().unwrap();
    for acronym in ["la", "ld", "nf", "ent", "nuc", "ndev", "age", "asawr", "rsawr", "nrev", "app", "hcmt", "rtime"] {
        assert!(header.split(',').any(|h| h == acronym), "{acronym} not in {header}");
    }
    let again = jitlab(tmp.path(), &["run"]);
    assert_eq!(again.status.code(), Some(0));
    let text = stdout(&again);
    assert!(!text.contains(" ran "), "{text}");
    assert_eq!(text.matches("cached").count(), 11);
}

#[test]
fn stage_commands_and_flags() {
    let tmp = demo();
    let o = jitlab(tmp.path(), &["filter", "--drop-mislabeled"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let ledger = std::fs::read_to_string(tmp.path().join("out/filter_ledger.csv")).unwrap();
    assert!(ledger.contains("Extrinsic and mislabeled bugs"));
    assert!(!tmp.path().join("out/dataset.csv").exists());

    let o = jitlab(tmp.path(), &["stratify", "--months", "6"]);
    assert_eq!(o.status.code(), Some(0));
    let periods: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("out/periods.json")).unwrap()).unwrap();
    assert_eq!(periods["months"], 6);

    let o = jitlab(tmp.path(), &["evaluate", "--scheme", "short", "--months", "6"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("out/evaluation/auc_short.csv").is_file());
    assert!(!tmp.path().join("out/evaluation/auc_long.csv").exists());

    let o = jitlab(tmp.path(), &["szz", "--no-cosmetic-filter", "--no-date-filter"]);
    assert_eq!(o.status.code(), Some(0));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("out/szz_summary.json")).unwrap()).unwrap();
    assert!(summary["dropped_by_reason"].as_object().unwrap().is_empty());

    let o = jitlab(tmp.path(), &["train", "--churn-threshold", "5000", "--spline-df", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for cmd in ["importance", "stability", "stats"] {
        assert_eq!(jitlab(tmp.path(), &[cmd]).status.code(), Some(0), "{cmd}");
    }
}

#[test]
fn config_overrides_are_applied() {
    let tmp = demo();
    let o = jitlab(
        tmp.path(),
        &["config", "--churn-threshold", "5000", "--pattern", "Fixes #{id}", "--normalization", "joint-total"],
    );
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("churn_threshold = 5000.0"), "{text}");
    assert!(text.contains("Fixes #{id}"));
    assert!(text.contains("normalization = \"joint_total\""));
}

#[test]
fn exit_codes() {
    let tmp = demo();
    assert_eq!(jitlab(tmp.path(), &["--no-such-flag"]).status.code(), Some(1));
    assert_eq!(jitlab(tmp.path(), &["run", "--months", "4"]).status.code(), Some(1));
    assert_eq!(jitlab(tmp.path(), &["run", "--from", "nowhere"]).status.code(), Some(1));
    assert_eq!(jitlab(tmp.path(), &["--help"]).status.code(), Some(0));
    let o = jitlab(tmp.path(), &["link", "--issues", "missing.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("link"));
    let o = jitlab(tmp.path(), &["mine", "--repo", "not-a-repo"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn label_import_and_export() {
    let tmp = demo();
    let csv = "issue_id,rater,verdict,rule_id,rationale\n1,zoe,extrinsic,extrinsic-2,requirements changed\n2,zoe,intrinsic,bug-3,\n";
    std::fs::write(tmp.path().join("new.csv"), csv).unwrap();
    let o = jitlab(tmp.path(), &["label", "import", "new.csv", "--labels", "fresh.ndjson"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("imported 2"));
    let o = jitlab(tmp.path(), &["label", "export", "--labels", "fresh.ndjson"]);
    assert_eq!(o.status.code(), Some(0));
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["rule_id"], "extrinsic-2");

    let bad = "issue_id,rater,verdict,rule_id\n1,zoe,intrinsic,extrinsic-1\n";
    std::fs::write(tmp.path().join("bad.csv"), bad).unwrap();
    let o = jitlab(tmp.path(), &["label", "import", "bad.csv", "--labels", "fresh.ndjson"]);
    assert_eq!(o.status.code(), Some(2));
    let o = jitlab(tmp.path(), &["label", "export", "--labels", "labels.csv"]);
    assert_eq!(o.status.code(), Some(1));
}
