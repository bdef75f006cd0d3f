//! Campaign configuration: defaults, TOML file, then command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use norec_core::generator::GenConfig;
use norec_core::oracle::OracleMode;
use norec_core::BugInjection;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// The built-in engine.
    Toy,
    /// SQLite linked into the process.
    Embedded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OracleArg {
    Count,
    Content,
}

impl From<OracleArg> for OracleMode {
    fn from(o: OracleArg) -> Self {
        match o {
            OracleArg::Count => OracleMode::Count,
            OracleArg::Content => OracleMode::Content,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub backend: Backend,
    pub injection: Option<BugInjection>,
    pub oracle: OracleArg,
    pub seed: u64,
    pub queries: usize,
    /// Number of database iterations; 0 means unbounded (needs `duration_secs`).
    pub databases: u64,
    pub workers: usize,
    pub timeout_ms: u64,
    /// Stop starting new databases after this many seconds.
    pub duration_secs: Option<u64>,
    pub out: PathBuf,
    /// Run the embedded engine in a child process so aborts become crashes.
    pub isolate: bool,
    pub reduce: bool,
    pub max_reduce_replays: usize,
    pub reduce_secs: u64,
    pub generator: GenConfig,
    /// Binary serving `--serve-sqlite` for isolation; not part of the file format.
    #[serde(skip)]
    pub engine_program: Option<PathBuf>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            backend: Backend::Toy,
            injection: None,
            oracle: OracleArg::Count,
            seed: 0,
            queries: 100,
            databases: 100,
            workers: 1,
            timeout_ms: 10_000,
            duration_secs: None,
            out: PathBuf::from("norec-out"),
            isolate: false,
            reduce: true,
            max_reduce_replays: 5000,
            reduce_secs: 60,
            generator: GenConfig::default(),
            engine_program: None,
        }
    }
}

impl CampaignConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.injection.is_some() && self.backend != Backend::Toy {
            bail!("--inject requires --backend toy");
        }
        if self.workers == 0 {
            bail!("--workers must be at least 1");
        }
        if self.databases == 0 && self.duration_secs.is_none() {
            bail!("--databases 0 needs a duration limit");
        }
        if self.timeout_ms == 0 {
            bail!("--timeout-ms must be positive");
        }
        if let Err(e) = self.generator.validate() {
            bail!("generator config: {e}");
        }
        Ok(())
    }

    pub fn oracle_mode(&self) -> OracleMode {
        self.oracle.into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_overrides_defaults() {
        let c: CampaignConfig = toml::from_str(
            r#"
            backend = "toy"
            injection = "LikeRangeSkip"
            queries = 7
            [generator]
            max_tables = 1
            "#,
        )
        .unwrap();
        assert_eq!(c.queries, 7);
        assert_eq!(c.injection, Some(BugInjection::LikeRangeSkip));
        assert_eq!(c.generator.max_tables, 1);
        assert_eq!(c.generator.max_rows, GenConfig::default().max_rows);
        c.validate().unwrap();
    }

    #[test]
    fn injection_needs_toy() {
        let c = CampaignConfig {
            backend: Backend::Embedded,
            injection: Some(BugInjection::LikeRangeSkip),
            ..Default::default()
        };
        assert!(c.validate().is_err());
        assert!(CampaignConfig { workers: 0, ..Default::default() }.validate().is_err());
        assert!(toml::from_str::<CampaignConfig>("bogus = 1").is_err());
    }
}
