//! Hand-written regression scenarios, each pairing a small database with a
//! query whose optimized and unoptimized counts are known.

use crate::ast::{BinaryOp, Expression, IsTest, SelectQuery, Statement};
use crate::engine::toy::BugInjection;
use crate::schema::{Collation, ColumnDef, IndexDef, TableDef};
use crate::value::SqlValue;

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub summary: &'static str,
    pub setup: Vec<Statement>,
    pub query: SelectQuery,
    pub injection: Option<BugInjection>,
    /// Counts the oracle should observe with `injection` active.
    pub expected_optimized: u64,
    pub expected_unoptimized: u64,
}

fn create(name: &str, columns: Vec<ColumnDef>) -> Statement {
    Statement::CreateTable(TableDef::new(name, columns))
}

fn insert(table: &str, columns: &[&str], rows: Vec<Vec<SqlValue>>) -> Statement {
    Statement::Insert { table: table.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows }
}

fn index(name: &str, table: &str, keys: Vec<Expression>, predicate: Option<Expression>) -> Statement {
    Statement::CreateIndex(IndexDef {
        name: name.into(),
        table: table.into(),
        keys,
        unique: false,
        partial_predicate: predicate,
    })
}

fn bare(c: &str) -> Expression {
    Expression::Column(crate::ast::ColumnRef::bare(c))
}

/// A GLOB prefix range is applied to a column that holds an integer.
pub fn glob_prefix_untyped() -> Scenario {
    Scenario {
        name: "glob-prefix-untyped",
        summary: "GLOB prefix range on an untyped UNIQUE column skips the integer -1",
        setup: vec![
            create("t0", vec![ColumnDef::new("c0", "").unique()]),
            insert("t0", &[], vec![vec![SqlValue::Integer(-1)]]),
        ],
        query: SelectQuery::star(
            &["t0"],
            Some(Expression::binary(BinaryOp::Glob, Expression::col("t0", "c0"), Expression::text("-*"))),
        ),
        injection: Some(BugInjection::LikeRangeSkip),
        expected_optimized: 0,
        expected_unoptimized: 1,
    }
}

/// `'1' IN (c0)` rewritten to an equality that applies affinity.
pub fn in_list_affinity() -> Scenario {
    Scenario {
        name: "in-list-affinity",
        summary: "single-element IN turned into an affinity-converting equality",
        setup: vec![
            create("t0", vec![ColumnDef::new("c0", "INT").unique()]),
            insert("t0", &["c0"], vec![vec![SqlValue::Integer(1)]]),
        ],
        query: SelectQuery::star(
            &["t0"],
            Some(Expression::in_list(Expression::text("1"), vec![Expression::col("t0", "c0")])),
        ),
        injection: Some(BugInjection::InToEqAffinity),
        expected_optimized: 1,
        expected_unoptimized: 0,
    }
}

/// Commuting `c1 <= c0` hands the NOCASE collation of c0 to the comparison.
pub fn commute_collation() -> Scenario {
    Scenario {
        name: "commute-collation",
        summary: "operand swap lets the NOCASE column decide the collation",
        setup: vec![
            create("t0", vec![ColumnDef::new("c0", "").collate(Collation::NoCase), ColumnDef::new("c1", "")]),
            index("i0", "t0", vec![Expression::int(0)], Some(Expression::binary(BinaryOp::Ge, bare("c0"), bare("c1")))),
            insert("t0", &[], vec![vec![SqlValue::text("a"), SqlValue::text("B")]]),
        ],
        query: SelectQuery::star(
            &["t0"],
            Some(Expression::binary(BinaryOp::Le, Expression::col("t0", "c1"), Expression::col("t0", "c0"))),
        ),
        injection: Some(BugInjection::CommuteDropsCollation),
        expected_optimized: 0,
        expected_unoptimized: 1,
    }
}

/// Cross product of two NULL rows with one row.
pub fn cross_product_is_null() -> Scenario {
    Scenario {
        name: "cross-product-is-null",
        summary: "IS NULL on a UNIQUE column across a two-table cross product",
        setup: vec![
            create("t1", vec![ColumnDef::new("c0", "INT")]),
            create("t0", vec![ColumnDef::new("c0", "INT").unique()]),
            insert("t1", &["c0"], vec![vec![SqlValue::Integer(0)]]),
            insert("t0", &["c0"], vec![vec![SqlValue::Null], vec![SqlValue::Null]]),
        ],
        query: SelectQuery::star(&["t0", "t1"], Some(Expression::is(Expression::col("t0", "c0"), IsTest::Null))),
        injection: None,
        expected_optimized: 2,
        expected_unoptimized: 2,
    }
}

/// A NULL BETWEEN bound folded to FALSE flips the outcome under NOT.
pub fn symmetric_between_null() -> Scenario {
    let between =
        Expression::between(Expression::boolean(false), Expression::col("t0", "c0"), Expression::null(), true);
    let predicate = Expression::and(
        Expression::col("t0", "c0"),
        Expression::and(Expression::not(between), Expression::boolean(true)),
    );
    Scenario {
        name: "symmetric-between-null",
        summary: "NULL comparisons inside NOT BETWEEN SYMMETRIC folded to FALSE",
        setup: vec![
            create("t0", vec![ColumnDef::new("c0", "BOOL").unique(), ColumnDef::new("c1", "BOOL")]),
            insert("t0", &["c0"], vec![vec![SqlValue::Boolean(true)]]),
        ],
        query: SelectQuery::star(&["t0"], Some(predicate)),
        injection: Some(BugInjection::NullFilterAsFalse),
        expected_optimized: 1,
        expected_unoptimized: 0,
    }
}

/// A text bound with a leading newline is misread when building a range.
pub fn whitespace_text_bound() -> Scenario {
    let nulls = (0..4).map(|_| vec![SqlValue::Null]);
    Scenario {
        name: "whitespace-text-bound",
        summary: "index range for c0 < '\\n2' becomes NULL < c0 <= 0",
        setup: vec![
            create("t0", vec![ColumnDef::new("c0", "INT").unique()]),
            insert("t0", &[], nulls.chain([vec![SqlValue::Integer(1)], vec![SqlValue::Integer(0)]]).collect()),
        ],
        query: SelectQuery::star(
            &["t0"],
            Some(Expression::binary(BinaryOp::Lt, Expression::col("t0", "c0"), Expression::text("\n2"))),
        ),
        injection: Some(BugInjection::StringRangeBound),
        expected_optimized: 1,
        expected_unoptimized: 2,
    }
}

/// `0.5 = c0` against an indexed INT column holding 1.
pub fn real_int_equality() -> Scenario {
    Scenario {
        name: "real-int-equality",
        summary: "0.5 = c0 on an indexed INT column never matches 1",
        setup: vec![
            create("t0", vec![ColumnDef::new("c0", "INT")]),
            insert("t0", &[], vec![vec![SqlValue::Integer(1)]]),
            index("i0", "t0", vec![bare("c0")], None),
        ],
        query: SelectQuery::star(
            &["t0"],
            Some(Expression::binary(BinaryOp::Eq, Expression::real(0.5), Expression::col("t0", "c0"))),
        ),
        injection: None,
        expected_optimized: 0,
        expected_unoptimized: 0,
    }
}

pub fn all() -> Vec<Scenario> {
    vec![
        glob_prefix_untyped(),
        in_list_affinity(),
        commute_collation(),
        cross_product_is_null(),
        symmetric_between_null(),
        whitespace_text_bound(),
        real_int_equality(),
    ]
}

pub fn by_name(name: &str) -> Option<Scenario> {
    all().into_iter().find(|s| s.name == name)
}
