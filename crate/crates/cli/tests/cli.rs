use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};

use norec_cli::report::{Meta, Recorded, ReportSink};
use norec_cli::{run_campaign, CampaignConfig, CampaignSummary};
use norec_core::{BugInjection, Finding, FindingKind};

fn norec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_norec")).args(args).output().expect("run norec")
}

fn summary(out: &Path) -> CampaignSummary {
    serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap()
}

fn injected(out: &Path, seed: u64, workers: usize) -> CampaignConfig {
    CampaignConfig {
        injection: Some(BugInjection::LikeRangeSkip),
        seed,
        databases: 40,
        queries: 50,
        workers,
        out: out.to_path_buf(),
        ..CampaignConfig::default()
    }
}

fn fingerprints(s: &CampaignSummary) -> BTreeSet<String> {
    s.findings.iter().map(|f| f.fingerprint.clone()).collect()
}

#[test]
fn zero_queries_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = norec(&["--queries", "0", "--databases", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(s.tally.checks, 0);
    assert_eq!(s.tally.databases, 3);
    assert!(s.findings.is_empty());
}

#[test]
fn config_errors_abort_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = norec(&["--backend", "embedded", "--inject", "like-range-skip", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "queries = 3\nnonsense = true\n").unwrap();
    assert_eq!(norec(&["--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "queries = 3\ndatabases = 4\nseed = 9\n[generator]\nmax_tables = 1\n").unwrap();
    let o = norec(&["--config", cfg.to_str().unwrap(), "--queries", "5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(summary(&out).tally.checks, 20);
}

#[test]
fn injected_campaign_reports_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = norec(&[
        "--inject",
        "like-range-skip",
        "--seed",
        "0",
        "--databases",
        "40",
        "--queries",
        "50",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let s = summary(&out);
    assert!(s.count(FindingKind::OptimizationBug) > 0);
    assert!(out.join("raw").read_dir().unwrap().count() as u64 >= s.raw_findings);

    let mut glob_zero_one = false;
    for f in &s.findings {
        let sql = std::fs::read_to_string(f.path.join("reproduce.sql")).unwrap();
        let meta: Meta = serde_json::from_slice(&std::fs::read(f.path.join("meta.json")).unwrap()).unwrap();
        assert_eq!(meta.fingerprint, f.fingerprint);
        assert_eq!(meta.injection.as_deref(), Some("like-range-skip"));
        assert_eq!(meta.occurrences, f.occurrences);
        let lines: Vec<&str> = sql.lines().collect();
        let n = lines.len();
        assert!(lines[..n - 1].iter().all(|l| l.ends_with(';')));
        if f.kind == FindingKind::OptimizationBug {
            assert!(lines[n - 1].starts_with("-- optimized="));
            assert!(lines[n - 3].contains(" WHERE ") && lines[n - 2].contains("IS TRUE"));
            glob_zero_one |= lines[n - 1] == "-- optimized=0 unoptimized=1";
        }
    }
    assert!(glob_zero_one);

    let r = norec(&["--replay", out.to_str().unwrap()]);
    let text = String::from_utf8_lossy(&r.stdout);
    assert!(r.status.success(), "{text}");
    assert!(text.contains(&format!("{} replayed, 0 mismatched", s.findings.len())));
}

#[test]
fn findings_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_campaign(&injected(&dir.path().join("a"), 3, 1)).unwrap();
    let b = run_campaign(&injected(&dir.path().join("b"), 3, 4)).unwrap();
    assert_eq!(a.tally, b.tally);
    assert_eq!(fingerprints(&a), fingerprints(&b));
    assert!(!fingerprints(&a).is_empty());
}

#[test]
fn same_bug_from_different_seeds_shares_a_fingerprint() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_campaign(&injected(&dir.path().join("a"), 1, 2)).unwrap();
    let b = run_campaign(&injected(&dir.path().join("b"), 2, 2)).unwrap();
    assert!(!fingerprints(&a).is_disjoint(&fingerprints(&b)));
}

#[test]
fn duplicate_fingerprint_only_bumps_the_counter() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_campaign(&injected(&dir.path().join("a"), 0, 1)).unwrap();
    let first = &s.findings[0];
    let finding: Finding = serde_json::from_slice(&std::fs::read(first.path.join("testcase.json")).unwrap()).unwrap();
    let out = dir.path().join("fresh");
    let mut sink = ReportSink::new(&out, serde_json::json!({})).unwrap();
    let Recorded::New(path) = sink.record(&finding, &finding.test_case, "toy", true, true).unwrap() else {
        panic!("first record must be new");
    };
    let sql = std::fs::read_to_string(path.join("reproduce.sql")).unwrap();
    match sink.record(&finding, &finding.test_case, "toy", true, true).unwrap() {
        Recorded::Duplicate { path: p, occurrences } => {
            assert_eq!(p, path);
            assert_eq!(occurrences, 2);
        }
        Recorded::New(_) => panic!("duplicate recorded as new"),
    }
    assert_eq!(std::fs::read_to_string(path.join("reproduce.sql")).unwrap(), sql);
    let dirs = std::fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().file_name() != "raw").count();
    assert_eq!(dirs, 1);
    assert_eq!(std::fs::read_dir(out.join("raw")).unwrap().count(), 2);
}
