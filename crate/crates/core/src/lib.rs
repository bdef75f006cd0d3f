//! Detecting query-optimizer logic bugs by non-optimizing reference engine
//! construction (NoREC).
//!
//! An optimized query `SELECT * FROM … WHERE φ` is rewritten into a query
//! that evaluates `φ` for every row without a `WHERE` clause, so the engine
//! has nothing to optimize. Both are reduced to a count; a mismatch means one
//! of the two evaluation paths is wrong.
//!
//! The crate contains the AST and renderer, a random generator, the oracle,
//! a miniature SQL engine with injectable optimizer faults, and a test-case
//! reducer. It has no I/O and builds for `wasm32-unknown-unknown`.

pub mod ast;
pub mod dialect;
pub mod engine;
pub mod finding;
pub mod generator;
pub mod oracle;
pub mod reducer;
pub mod render;
pub mod scenarios;
pub mod schema;
pub mod session;
pub mod value;

pub use ast::{Expression, SelectQuery, Statement, StatementKind};
pub use dialect::DialectProfile;
pub use engine::toy::{BugInjection, ToyEngine};
pub use engine::{EngineResult, Executor};
pub use finding::{Finding, FindingKind};
pub use oracle::{CountStrategy, OracleVerdict};
pub use reducer::{reduce, TestCase, VerdictClass};
pub use value::SqlValue;
