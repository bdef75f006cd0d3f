//! The executor interface and the built-in engine.

pub mod eval;
pub mod toy;

use serde::{Deserialize, Serialize};

use crate::ast::Statement;
use crate::dialect::DialectProfile;
use crate::value::SqlValue;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EngineResult {
    /// DDL and DML return an empty column list and no rows.
    Rows {
        columns: Vec<String>,
        rows: Vec<Vec<SqlValue>>,
    },
    Error(String),
    Timeout,
    Crash(String),
}

impl EngineResult {
    pub fn empty() -> Self {
        EngineResult::Rows { columns: vec![], rows: vec![] }
    }

    pub fn rows(&self) -> Option<&[Vec<SqlValue>]> {
        match self {
            EngineResult::Rows { rows, .. } => Some(rows),
            _ => None,
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self, EngineResult::Rows { .. })
    }
}

/// Something that runs statements against one database.
pub trait Executor {
    fn execute(&mut self, stmt: &Statement) -> EngineResult;

    fn dialect(&self) -> &DialectProfile;

    fn engine_version(&self) -> String;
}

impl<E: Executor + ?Sized> Executor for Box<E> {
    fn execute(&mut self, stmt: &Statement) -> EngineResult {
        (**self).execute(stmt)
    }

    fn dialect(&self) -> &DialectProfile {
        (**self).dialect()
    }

    fn engine_version(&self) -> String {
        (**self).engine_version()
    }
}
