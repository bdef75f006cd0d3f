//! Findings and their deduplication fingerprints.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ast::Expression;
use crate::engine::toy::BugInjection;
use crate::oracle::OracleVerdict;
use crate::reducer::{error_class, TestCase, VerdictClass};
use crate::render::render_statement;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FindingKind {
    OptimizationBug,
    ErrorBug,
    CrashBug,
    /// A statement that never returned, observed only with process isolation.
    Hang,
}

impl FindingKind {
    pub fn name(self) -> &'static str {
        match self {
            FindingKind::OptimizationBug => "optimization",
            FindingKind::ErrorBug => "error",
            FindingKind::CrashBug => "crash",
            FindingKind::Hang => "hang",
        }
    }

    pub fn for_class(class: &VerdictClass) -> Self {
        match class {
            VerdictClass::Discrepancy => FindingKind::OptimizationBug,
            VerdictClass::UnexpectedError { .. } => FindingKind::ErrorBug,
            VerdictClass::Crash => FindingKind::CrashBug,
        }
    }
}

impl fmt::Display for FindingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The failing statement and raw message of an error, crash or hang.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub statement: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub fingerprint: String,
    pub test_case: TestCase,
    pub verdict: Option<OracleVerdict>,
    pub error: Option<ErrorRecord>,
    pub injection: Option<BugInjection>,
    /// Seconds since the Unix epoch, supplied by the caller.
    pub found_at: u64,
}

impl Finding {
    pub fn new(
        kind: FindingKind,
        test_case: TestCase,
        verdict: Option<OracleVerdict>,
        error: Option<ErrorRecord>,
        injection: Option<BugInjection>,
        found_at: u64,
    ) -> Self {
        let mut f = Finding { kind, fingerprint: String::new(), test_case, verdict, error, injection, found_at };
        f.fingerprint = fingerprint(&f);
        f
    }
}

/// The predicate a finding is about: the query's WHERE clause, or the
/// expressions of the last setup statement when there is no query.
fn failing_expressions(tc: &TestCase) -> Vec<&Expression> {
    match &tc.query {
        Some(q) => q.expressions(),
        None => tc.setup.last().map(|s| s.expressions()).unwrap_or_default(),
    }
}

/// Sorted node kinds of the failing expressions; identifiers and constants
/// do not contribute.
pub fn operator_kinds(tc: &TestCase) -> Vec<String> {
    let mut kinds = Vec::new();
    for e in failing_expressions(tc) {
        e.walk(&mut |n| {
            if !matches!(n, Expression::Constant(_) | Expression::Column(_)) {
                kinds.push(n.kind_name());
            }
        });
    }
    kinds.sort();
    kinds
}

/// A 16-hex-digit hash of the finding kind, the operator multiset, the
/// error class and the injection name.
pub fn fingerprint(f: &Finding) -> String {
    let mut h = Sha256::new();
    h.update(f.kind.name());
    h.update([0]);
    for k in operator_kinds(&f.test_case) {
        h.update(k);
        h.update([0]);
    }
    h.update([1]);
    if let Some(e) = &f.error {
        h.update(error_class(&e.message));
    }
    h.update([1]);
    if let Some(i) = f.injection {
        h.update(i.name());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// The SQL script for a finding: setup, then the oracle statements, then a
/// comment with the outcome.
pub fn reproduce_sql(f: &Finding) -> String {
    let tc = &f.test_case;
    let mut out = String::new();
    for s in &tc.setup {
        if let Ok(sql) = render_statement(s, &tc.dialect) {
            out.push_str(&sql);
            out.push('\n');
        }
    }
    match (&f.verdict, &f.error) {
        (Some(OracleVerdict::Discrepancy(d)), _) => {
            out.push_str(&d.optimized_sql);
            out.push('\n');
            out.push_str(&d.unoptimized_sql);
            out.push('\n');
            out.push_str(&format!("-- optimized={} unoptimized={}", d.optimized_count, d.unoptimized_count));
            if let Some(row) = &d.differing_row {
                let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                out.push_str(&format!(" differing_row=({})", cells.join(", ")));
            }
            out.push('\n');
        }
        (_, Some(e)) => {
            if tc.query.is_some() {
                out.push_str(&e.statement);
                out.push('\n');
            }
            let message = e.message.replace('\n', " ");
            out.push_str(&format!("-- {}: {message}\n", f.kind));
        }
        _ => {}
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{BinaryOp, SelectQuery, Statement};
    use crate::dialect::DialectProfile;
    use crate::oracle::{CountStrategy, OracleMode};
    use crate::schema::{ColumnDef, TableDef};

    fn tc(table: &str, pattern: &str) -> TestCase {
        TestCase {
            setup: vec![Statement::CreateTable(TableDef::new(table, vec![ColumnDef::new("c0", "")]))],
            query: Some(SelectQuery::star(
                &[table],
                Some(Expression::binary(BinaryOp::Glob, Expression::col(table, "c0"), Expression::text(pattern))),
            )),
            dialect: DialectProfile::toy(),
            seed: 1,
            verdict_class: VerdictClass::Discrepancy,
            mode: OracleMode::Count,
            strategy: CountStrategy::NaiveIteration,
        }
    }

    #[test]
    fn ignores_identifiers_and_constants() {
        let inj = Some(BugInjection::LikeRangeSkip);
        let a = Finding::new(FindingKind::OptimizationBug, tc("t0", "-*"), None, None, inj, 1);
        let b = Finding::new(FindingKind::OptimizationBug, tc("t7", "1*"), None, None, inj, 2);
        assert_eq!(a.fingerprint, b.fingerprint);
        assert_eq!(a.fingerprint.len(), 16);
    }

    #[test]
    fn kind_and_injection_matter() {
        let a = Finding::new(FindingKind::OptimizationBug, tc("t0", "-*"), None, None, None, 0);
        let b = Finding::new(FindingKind::ErrorBug, tc("t0", "-*"), None, None, None, 0);
        let c = Finding::new(
            FindingKind::OptimizationBug,
            tc("t0", "-*"),
            None,
            None,
            Some(BugInjection::LikeRangeSkip),
            0,
        );
        assert_ne!(a.fingerprint, b.fingerprint);
        assert_ne!(a.fingerprint, c.fingerprint);
    }

    #[test]
    fn error_class_matters() {
        let rec = |m: &str| Some(ErrorRecord { statement: "SELECT 1;".into(), message: m.into() });
        let a = Finding::new(FindingKind::ErrorBug, tc("t0", "-*"), None, rec("no such column: c9"), None, 0);
        let b = Finding::new(FindingKind::ErrorBug, tc("t0", "-*"), None, rec("no such column: c1"), None, 0);
        let c =
            Finding::new(FindingKind::ErrorBug, tc("t0", "-*"), None, rec("database disk image is malformed"), None, 0);
        assert_eq!(a.fingerprint, b.fingerprint);
        assert_ne!(a.fingerprint, c.fingerprint);
    }

    #[test]
    fn reproducer_lists_setup_queries_and_counts() {
        use crate::oracle::Discrepancy;
        use crate::value::SqlValue;
        let d = Discrepancy {
            optimized_count: 1,
            unoptimized_count: 1,
            optimized_sql: "SELECT a;".into(),
            unoptimized_sql: "SELECT b;".into(),
            strategy: CountStrategy::NaiveIteration,
            mode: OracleMode::Content,
            seed: None,
            differing_row: Some(vec![SqlValue::Text("A ".into()), SqlValue::Null]),
        };
        let f = Finding::new(
            FindingKind::OptimizationBug,
            tc("t0", "-*"),
            Some(OracleVerdict::Discrepancy(Box::new(d))),
            None,
            None,
            0,
        );
        let sql = reproduce_sql(&f);
        let lines: Vec<&str> = sql.lines().collect();
        assert_eq!(
            lines,
            [
                "CREATE TABLE t0(c0);",
                "SELECT a;",
                "SELECT b;",
                "-- optimized=1 unoptimized=1 differing_row=(\"A \", NULL)"
            ]
        );

        let err = Some(ErrorRecord { statement: "SELECT 1;".into(), message: "boom\nagain".into() });
        let f = Finding::new(FindingKind::CrashBug, TestCase { query: None, ..tc("t0", "-*") }, None, err, None, 0);
        assert_eq!(reproduce_sql(&f), "CREATE TABLE t0(c0);\n-- crash: boom again\n");
    }
}
