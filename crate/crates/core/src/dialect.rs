//! Per-engine feature and semantics flags.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ast::{Expression, StatementKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialectProfile {
    pub name: String,
    pub has_native_boolean: bool,
    pub bool_sum_needs_cast: bool,
    pub has_glob: bool,
    pub has_collate_nocase: bool,
    pub div_by_zero_yields_null: bool,
    pub applies_column_affinity: bool,
    pub has_between_symmetric: bool,
    pub has_partial_indexes: bool,
    pub derived_table_needs_alias: bool,
    /// Upper-case function names that are safe to generate.
    pub deterministic_functions: BTreeSet<String>,
    /// Error substrings tolerated per statement kind.
    pub expected_errors: BTreeMap<StatementKind, Vec<String>>,
}

pub const DEFAULT_FUNCTIONS: [&str; 4] = ["LENGTH", "ABS", "LOWER", "UPPER"];

fn expected(entries: &[(StatementKind, &[&str])]) -> BTreeMap<StatementKind, Vec<String>> {
    entries.iter().map(|(k, pats)| (*k, pats.iter().map(|p| p.to_string()).collect())).collect()
}

impl DialectProfile {
    /// The built-in toy engine: embedded-style dynamic typing plus
    /// `BETWEEN SYMMETRIC`.
    pub fn toy() -> Self {
        DialectProfile {
            name: "toy".into(),
            has_native_boolean: false,
            bool_sum_needs_cast: false,
            has_glob: true,
            has_collate_nocase: true,
            div_by_zero_yields_null: true,
            applies_column_affinity: true,
            has_between_symmetric: true,
            has_partial_indexes: true,
            derived_table_needs_alias: false,
            deterministic_functions: DEFAULT_FUNCTIONS.iter().map(|s| s.to_string()).collect(),
            expected_errors: expected(&[
                (StatementKind::CreateTable, &[]),
                (StatementKind::CreateIndex, &["UNIQUE constraint failed", "integer overflow"]),
                (StatementKind::Insert, &["UNIQUE constraint failed"]),
                (StatementKind::Update, &["UNIQUE constraint failed", "integer overflow"]),
                (StatementKind::Delete, &["integer overflow"]),
                (StatementKind::Select, &["integer overflow"]),
            ]),
        }
    }

    /// The embedded SQLite engine.
    pub fn sqlite() -> Self {
        DialectProfile {
            name: "sqlite".into(),
            has_between_symmetric: false,
            expected_errors: expected(&[
                (StatementKind::CreateTable, &[]),
                (StatementKind::CreateIndex, &["UNIQUE constraint failed", "integer overflow"]),
                (StatementKind::Insert, &["UNIQUE constraint failed"]),
                (StatementKind::Update, &["UNIQUE constraint failed", "integer overflow"]),
                (StatementKind::Delete, &["integer overflow"]),
                (StatementKind::Select, &["integer overflow"]),
            ]),
            ..Self::toy()
        }
    }

    /// A strictly typed dialect with native booleans, used for rendering.
    pub fn strict() -> Self {
        DialectProfile {
            name: "strict".into(),
            has_native_boolean: true,
            bool_sum_needs_cast: true,
            has_glob: false,
            has_collate_nocase: false,
            div_by_zero_yields_null: false,
            applies_column_affinity: false,
            has_between_symmetric: true,
            has_partial_indexes: true,
            derived_table_needs_alias: true,
            deterministic_functions: DEFAULT_FUNCTIONS.iter().map(|s| s.to_string()).collect(),
            expected_errors: expected(&[
                (StatementKind::CreateTable, &[]),
                (StatementKind::CreateIndex, &["duplicate key"]),
                (StatementKind::Insert, &["duplicate key", "out of range"]),
                (StatementKind::Update, &["duplicate key", "out of range", "division by zero"]),
                (StatementKind::Delete, &["out of range", "division by zero"]),
                (StatementKind::Select, &["out of range", "division by zero"]),
            ]),
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "toy" => Some(Self::toy()),
            "sqlite" | "embedded" => Some(Self::sqlite()),
            "strict" => Some(Self::strict()),
            _ => None,
        }
    }

    pub fn is_deterministic_function(&self, name: &str) -> bool {
        self.deterministic_functions.contains(&name.to_ascii_uppercase())
    }

    pub fn expected_errors_for(&self, kind: StatementKind) -> &[String] {
        self.expected_errors.get(&kind).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Returns the first expected pattern contained in `message`.
    pub fn match_expected(&self, kind: StatementKind, message: &str) -> Option<&str> {
        self.expected_errors_for(kind).iter().find(|p| message.contains(p.as_str())).map(String::as_str)
    }
}

/// True iff every function called in `expr` is whitelisted by `dialect`.
pub fn is_deterministic(expr: &Expression, dialect: &DialectProfile) -> bool {
    expr.function_names().iter().all(|f| dialect.is_deterministic_function(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn determinism_check() {
        let d = DialectProfile::toy();
        let plus = Expression::binary(crate::ast::BinaryOp::Add, Expression::col("t0", "c0"), Expression::int(1));
        assert!(is_deterministic(&plus, &d));
        assert!(is_deterministic(&Expression::call("length", vec![Expression::col("t0", "c0")]), &d));
        assert!(!is_deterministic(&Expression::call("RANDOM", vec![]), &d));
    }

    #[test]
    fn expected_error_matching() {
        let d = DialectProfile::toy();
        assert_eq!(
            d.match_expected(StatementKind::Insert, "UNIQUE constraint failed: t0.c0"),
            Some("UNIQUE constraint failed")
        );
        assert_eq!(d.match_expected(StatementKind::Select, "no such column: c9"), None);
    }

    #[test]
    fn lookup_by_name() {
        assert_eq!(DialectProfile::by_name("embedded").unwrap().name, "sqlite");
        assert!(DialectProfile::by_name("oracle").is_none());
    }
}
