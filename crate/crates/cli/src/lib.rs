//! Campaign orchestration for the `norec` binary: configuration, the SQLite
//! adapter, workers, reduction and reproducer reports.

pub mod campaign;
pub mod config;
pub mod replay;
pub mod report;
pub mod sqlite;

pub use campaign::{run_campaign, CampaignSummary, FindingSummary};
pub use config::{Backend, CampaignConfig, OracleArg};
