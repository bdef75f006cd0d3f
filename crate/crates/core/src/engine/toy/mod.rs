//! A miniature in-memory SQL engine with an optimizer that can be made
//! faulty on purpose.

mod exec;
pub mod optimizer;
pub mod storage;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ast::{SelectQuery, Statement};
use crate::dialect::DialectProfile;
use crate::engine::{EngineResult, Executor};

pub use exec::sum;
use exec::{ExecError, QueryRunner};
use storage::Storage;

/// A deliberately wrong optimizer rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BugInjection {
    /// LIKE/GLOB prefix ranges are used on columns without TEXT affinity.
    LikeRangeSkip,
    /// Single-element IN lists become equalities even when affinity applies.
    InToEqAffinity,
    /// Swapping comparison operands loses the effective collation.
    CommuteDropsCollation,
    /// Comparisons against a NULL literal fold to FALSE instead of NULL.
    NullFilterAsFalse,
    /// Text bounds on numeric index columns are parsed without skipping
    /// leading whitespace, and a lossy parse widens `<` to `<=`.
    StringRangeBound,
    /// Index scans hand back the collation-normalized key instead of the
    /// stored value.
    ValueCorruption,
}

impl BugInjection {
    pub const ALL: [BugInjection; 6] = [
        BugInjection::LikeRangeSkip,
        BugInjection::InToEqAffinity,
        BugInjection::CommuteDropsCollation,
        BugInjection::NullFilterAsFalse,
        BugInjection::StringRangeBound,
        BugInjection::ValueCorruption,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BugInjection::LikeRangeSkip => "like-range-skip",
            BugInjection::InToEqAffinity => "in-to-eq-affinity",
            BugInjection::CommuteDropsCollation => "commute-drops-collation",
            BugInjection::NullFilterAsFalse => "null-filter-as-false",
            BugInjection::StringRangeBound => "string-range-bound",
            BugInjection::ValueCorruption => "value-corruption",
        }
    }
}

impl fmt::Display for BugInjection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BugInjection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        BugInjection::ALL
            .into_iter()
            .find(|b| b.name().replace('-', "") == norm)
            .ok_or_else(|| format!("unknown injection '{s}'"))
    }
}

/// Default number of row visits a single query may make.
pub const DEFAULT_ROW_BUDGET: u64 = 5_000_000;

#[derive(Debug, Clone)]
pub struct ToyEngine {
    storage: Storage,
    dialect: DialectProfile,
    injection: Option<BugInjection>,
    row_budget: u64,
}

impl ToyEngine {
    pub fn new(injection: Option<BugInjection>) -> Self {
        ToyEngine {
            storage: Storage::default(),
            dialect: DialectProfile::toy(),
            injection,
            row_budget: DEFAULT_ROW_BUDGET,
        }
    }

    /// An engine without any injected fault.
    pub fn reference() -> Self {
        Self::new(None)
    }

    pub fn with_row_budget(mut self, budget: u64) -> Self {
        self.row_budget = budget;
        self
    }

    pub fn injection(&self) -> Option<BugInjection> {
        self.injection
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    /// Full scans and the predicate as written.
    pub fn execute_naive(&self, q: &SelectQuery) -> EngineResult {
        self.run_query(q, false)
    }

    /// Rewrites the WHERE clause and plans index access first.
    pub fn execute_optimized(&self, q: &SelectQuery) -> EngineResult {
        self.run_query(q, true)
    }

    fn run_query(&self, q: &SelectQuery, optimize: bool) -> EngineResult {
        let mut runner = QueryRunner {
            storage: &self.storage,
            dialect: &self.dialect,
            injection: self.injection,
            optimize,
            budget: self.row_budget,
        };
        match runner.run(q) {
            Ok((columns, (rows, _))) => EngineResult::Rows { columns, rows },
            Err(ExecError::BudgetExhausted) => EngineResult::Timeout,
            Err(e) => EngineResult::Error(e.to_string()),
        }
    }
}

impl Executor for ToyEngine {
    fn execute(&mut self, stmt: &Statement) -> EngineResult {
        match stmt {
            Statement::Select(q) => self.execute_optimized(q),
            other => match self.storage.apply(other, &self.dialect) {
                Ok(()) => EngineResult::empty(),
                Err(m) => EngineResult::Error(m),
            },
        }
    }

    fn dialect(&self) -> &DialectProfile {
        &self.dialect
    }

    fn engine_version(&self) -> String {
        match self.injection {
            Some(b) => format!("toy {} ({b})", env!("CARGO_PKG_VERSION")),
            None => format!("toy {}", env!("CARGO_PKG_VERSION")),
        }
    }
}

#[cfg(test)]
mod tests;
