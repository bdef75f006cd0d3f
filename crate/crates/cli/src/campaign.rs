//! Worker pool, reduction and the report sink.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use norec_core::finding::{ErrorRecord, FindingKind};
use norec_core::reducer::{reduce, ReduceBudget};
use norec_core::session::{run_database, Candidate, SessionConfig, Tally};
use norec_core::{Executor, Finding, TestCase, ToyEngine, VerdictClass};
use serde::{Deserialize, Serialize};

use crate::config::{Backend, CampaignConfig};
use crate::report::{unix_now, Recorded, ReportSink};
use crate::sqlite::{sqlite_version, IsolatedSqlite, SqliteExecutor, HANG_PREFIX};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindingSummary {
    pub fingerprint: String,
    pub kind: FindingKind,
    pub occurrences: u64,
    pub reproducible: bool,
    pub setup_statements: usize,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub tally: Tally,
    /// Unique findings ordered by fingerprint.
    pub findings: Vec<FindingSummary>,
    /// Findings before deduplication.
    pub raw_findings: u64,
    pub harness_errors: Vec<String>,
    pub engine_version: String,
    pub elapsed_secs: f64,
    pub checks_per_sec: f64,
    pub validity_rate: f64,
}

impl CampaignSummary {
    pub fn count(&self, kind: FindingKind) -> usize {
        self.findings.iter().filter(|f| f.kind == kind).count()
    }
}

enum Message {
    Finding { finding: Box<Finding>, raw: Box<TestCase>, reduced: bool, reproducible: bool },
    Done(Tally),
    HarnessError(String),
}

fn engine_version(config: &CampaignConfig) -> String {
    match config.backend {
        Backend::Toy => ToyEngine::new(config.injection).engine_version(),
        Backend::Embedded => sqlite_version(),
    }
}

/// The executable that serves `--serve-sqlite`; the running binary by default.
fn isolation_program(config: &CampaignConfig) -> Result<PathBuf> {
    match &config.engine_program {
        Some(p) => Ok(p.clone()),
        None => std::env::current_exe().context("locating the norec binary"),
    }
}

struct Worker<'a> {
    id: usize,
    config: &'a CampaignConfig,
    session: SessionConfig,
    tx: mpsc::Sender<Message>,
}

impl Worker<'_> {
    fn timeout(&self) -> Duration {
        Duration::from_millis(self.config.timeout_ms)
    }

    fn executor(&self) -> Result<Box<dyn Executor>> {
        Ok(match self.config.backend {
            Backend::Toy => Box::new(ToyEngine::new(self.config.injection)),
            Backend::Embedded if self.config.isolate => {
                Box::new(IsolatedSqlite::new(isolation_program(self.config)?, self.timeout()))
            }
            Backend::Embedded => {
                let dir = self.config.out.join("work");
                std::fs::create_dir_all(&dir)?;
                Box::new(SqliteExecutor::fresh_file(&dir.join(format!("worker-{}.db", self.id)), self.timeout())?)
            }
        })
    }

    /// A fresh executor for replays during reduction.
    fn replay_executor(&self, class: &VerdictClass) -> Box<dyn Executor> {
        match self.config.backend {
            Backend::Toy => Box::new(ToyEngine::new(self.config.injection)),
            Backend::Embedded => {
                if *class == VerdictClass::Crash {
                    if let Ok(p) = isolation_program(self.config) {
                        return Box::new(IsolatedSqlite::new(p, self.timeout()));
                    }
                }
                Box::new(SqliteExecutor::in_memory(self.timeout()).expect("in-memory SQLite database"))
            }
        }
    }

    fn handle(&self, c: Candidate) {
        let hang = c.error.as_ref().is_some_and(|e| e.message.starts_with(HANG_PREFIX));
        let kind = if hang { FindingKind::Hang } else { c.kind };
        let raw = c.test_case.clone();
        let mut reproducible = true;
        let mut reduced = false;
        let (mut test_case, mut verdict, mut error) = (c.test_case, c.verdict, c.error);
        if self.config.reduce && !hang {
            let budget = ReduceBudget {
                max_replays: self.config.max_reduce_replays,
                time_limit: Some(Duration::from_secs(self.config.reduce_secs)),
            };
            let class = test_case.verdict_class.clone();
            match reduce(&test_case, || self.replay_executor(&class), budget) {
                Ok(r) => {
                    let mut e = self.replay_executor(&class);
                    let replay = r.test_case.replay(&mut e);
                    if replay.class.as_ref() == Some(&class) {
                        test_case = r.test_case;
                        verdict = replay.verdict.map(|v| v.with_seed(test_case.seed));
                        error = replay.error.map(|(statement, message)| ErrorRecord { statement, message });
                        reduced = true;
                    }
                }
                Err(_) => reproducible = false,
            }
        }
        let finding = Finding::new(kind, test_case, verdict, error, self.config.injection, unix_now());
        let _ =
            self.tx.send(Message::Finding { finding: Box::new(finding), raw: Box::new(raw), reduced, reproducible });
    }

    fn run(&self, next: &AtomicU64, deadline: Option<Instant>) {
        let mut tally = Tally::default();
        loop {
            if deadline.is_some_and(|d| Instant::now() >= d) {
                break;
            }
            let index = next.fetch_add(1, Ordering::Relaxed);
            if self.config.databases != 0 && index >= self.config.databases {
                break;
            }
            let mut exec = match self.executor() {
                Ok(e) => e,
                Err(e) => {
                    let _ = self.tx.send(Message::HarnessError(format!("worker {}: {e:#}", self.id)));
                    break;
                }
            };
            let mut candidates = Vec::new();
            let t = run_database(&mut exec, &self.session, self.config.seed, index, &mut |c| candidates.push(c));
            drop(exec);
            tally.merge(&t);
            for c in candidates {
                self.handle(c);
            }
        }
        let _ = self.tx.send(Message::Done(tally));
    }
}

pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignSummary> {
    config.validate()?;
    let started = Instant::now();
    let config_echo = serde_json::to_value(config)?;
    let mut sink = ReportSink::new(&config.out, config_echo)?;
    let session = SessionConfig {
        generator: config.generator.clone(),
        queries_per_database: config.queries,
        mode: config.oracle_mode(),
    };
    let deadline = config.duration_secs.map(|s| started + Duration::from_secs(s));
    let next = AtomicU64::new(0);
    let version = engine_version(config);
    let (tx, rx) = mpsc::channel();

    let mut tally = Tally::default();
    let mut harness_errors = Vec::new();
    let mut unique: BTreeMap<String, FindingSummary> = BTreeMap::new();
    let mut raw_findings = 0;
    std::thread::scope(|s| {
        for id in 0..config.workers {
            let worker = Worker { id, config, session: session.clone(), tx: tx.clone() };
            let next = &next;
            s.spawn(move || worker.run(next, deadline));
        }
        drop(tx);
        for msg in rx {
            match msg {
                Message::Done(t) => tally.merge(&t),
                Message::HarnessError(e) => harness_errors.push(e),
                Message::Finding { finding, raw, reduced, reproducible } => {
                    raw_findings += 1;
                    let (path, occurrences) = match sink.record(&finding, &raw, &version, reduced, reproducible) {
                        Ok(Recorded::New(path)) => (path, 1),
                        Ok(Recorded::Duplicate { path, occurrences }) => (path, occurrences),
                        Err(e) => {
                            harness_errors.push(format!("report {}: {e:#}", finding.fingerprint));
                            continue;
                        }
                    };
                    unique
                        .entry(finding.fingerprint.clone())
                        .or_insert_with(|| FindingSummary {
                            fingerprint: finding.fingerprint.clone(),
                            kind: finding.kind,
                            occurrences,
                            reproducible,
                            setup_statements: finding.test_case.setup.len(),
                            path,
                        })
                        .occurrences = occurrences;
                }
            }
        }
    });
    let _ = std::fs::remove_dir_all(config.out.join("work"));
    let elapsed = started.elapsed().as_secs_f64();
    let summary = CampaignSummary {
        validity_rate: tally.validity_rate(),
        checks_per_sec: if elapsed > 0.0 { tally.checks as f64 / elapsed } else { 0.0 },
        tally,
        findings: unique.into_values().collect(),
        raw_findings,
        harness_errors,
        engine_version: version,
        elapsed_secs: elapsed,
    };
    std::fs::write(sink.out().join("summary.json"), serde_json::to_vec_pretty(&summary)?)?;
    Ok(summary)
}
