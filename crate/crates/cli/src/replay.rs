//! Re-runs persisted findings on fresh engines.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use norec_core::{Executor, Finding, ToyEngine, VerdictClass};

use crate::sqlite::SqliteExecutor;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub path: PathBuf,
    pub expected: VerdictClass,
    pub observed: Option<VerdictClass>,
}

impl ReplayOutcome {
    pub fn reproduced(&self) -> bool {
        self.observed.as_ref() == Some(&self.expected)
    }
}

/// `testcase.json` files in `dir` itself or its immediate subdirectories.
pub fn find_cases(dir: &Path) -> Result<Vec<PathBuf>> {
    let direct = dir.join("testcase.json");
    if direct.is_file() {
        return Ok(vec![direct]);
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let p = entry?.path().join("testcase.json");
        if p.is_file() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

pub fn replay_file(path: &Path, timeout: Duration) -> Result<ReplayOutcome> {
    let finding: Finding =
        serde_json::from_slice(&std::fs::read(path)?).with_context(|| format!("parsing {}", path.display()))?;
    let tc = &finding.test_case;
    let mut exec: Box<dyn Executor> = match tc.dialect.name.as_str() {
        "toy" => Box::new(ToyEngine::new(finding.injection)),
        _ => Box::new(SqliteExecutor::in_memory(timeout)?),
    };
    let observed = tc.replay(&mut exec).class;
    Ok(ReplayOutcome { path: path.to_path_buf(), expected: tc.verdict_class.clone(), observed })
}

pub fn replay_dir(dir: &Path, timeout: Duration) -> Result<Vec<ReplayOutcome>> {
    find_cases(dir)?.iter().map(|p| replay_file(p, timeout)).collect()
}
