//! Reproducer directories: `<out>/<fingerprint>/{reproduce.sql, meta.json, testcase.json}`
//! plus un-reduced cases under `<out>/raw/`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
pub use norec_core::finding::reproduce_sql;
use norec_core::{Finding, TestCase};
use serde::{Deserialize, Serialize};

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub kind: String,
    pub fingerprint: String,
    pub seed: u64,
    pub dialect: String,
    pub engine_version: String,
    pub injection: Option<String>,
    pub verdict_class: String,
    pub strategy: String,
    pub mode: String,
    pub optimized_count: Option<u64>,
    pub unoptimized_count: Option<u64>,
    pub error: Option<String>,
    /// False when the first replay did not reproduce and reduction was skipped.
    pub reproducible: bool,
    pub reduced: bool,
    pub occurrences: u64,
    pub first_seen: u64,
    pub last_seen: u64,
    pub config: serde_json::Value,
}

pub enum Recorded {
    New(PathBuf),
    Duplicate { path: PathBuf, occurrences: u64 },
}

/// Serializes all report writes of a campaign.
pub struct ReportSink {
    out: PathBuf,
    config: serde_json::Value,
    raw_counter: HashMap<String, u64>,
}

impl ReportSink {
    pub fn new(out: &Path, config: serde_json::Value) -> Result<Self> {
        fs::create_dir_all(out.join("raw")).with_context(|| format!("creating {}", out.display()))?;
        Ok(ReportSink { out: out.to_path_buf(), config, raw_counter: HashMap::new() })
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    /// Writes or updates the directory for `finding`; `raw` is the case
    /// before reduction.
    pub fn record(
        &mut self,
        finding: &Finding,
        raw: &TestCase,
        engine_version: &str,
        reduced: bool,
        reproducible: bool,
    ) -> Result<Recorded> {
        let n = self.raw_counter.entry(finding.fingerprint.clone()).or_insert(0);
        *n += 1;
        let raw_path = self.out.join("raw").join(format!("{}-{}.json", finding.fingerprint, n));
        fs::write(&raw_path, serde_json::to_vec_pretty(raw)?)
            .with_context(|| format!("writing {}", raw_path.display()))?;

        let dir = self.out.join(&finding.fingerprint);
        let meta_path = dir.join("meta.json");
        if meta_path.exists() {
            let mut meta: Meta = serde_json::from_slice(&fs::read(&meta_path)?).context("reading meta.json")?;
            meta.occurrences += 1;
            meta.last_seen = unix_now();
            fs::write(&meta_path, serde_json::to_vec_pretty(&meta)?)?;
            return Ok(Recorded::Duplicate { path: dir, occurrences: meta.occurrences });
        }
        fs::create_dir_all(&dir)?;
        let tc = &finding.test_case;
        let counts = finding.verdict.as_ref().and_then(|v| v.counts());
        let meta = Meta {
            kind: finding.kind.name().into(),
            fingerprint: finding.fingerprint.clone(),
            seed: tc.seed,
            dialect: tc.dialect.name.clone(),
            engine_version: engine_version.into(),
            injection: finding.injection.map(|i| i.name().into()),
            verdict_class: tc.verdict_class.to_string(),
            strategy: tc.strategy.to_string(),
            mode: format!("{:?}", tc.mode).to_lowercase(),
            optimized_count: counts.map(|c| c.0),
            unoptimized_count: counts.map(|c| c.1),
            error: finding.error.as_ref().map(|e| e.message.clone()),
            reproducible,
            reduced,
            occurrences: 1,
            first_seen: finding.found_at,
            last_seen: finding.found_at,
            config: self.config.clone(),
        };
        fs::write(dir.join("reproduce.sql"), reproduce_sql(finding))?;
        fs::write(dir.join("testcase.json"), serde_json::to_vec_pretty(finding)?)?;
        fs::write(&meta_path, serde_json::to_vec_pretty(&meta)?)?;
        Ok(Recorded::New(dir))
    }
}
