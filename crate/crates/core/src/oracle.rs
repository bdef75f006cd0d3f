//! The metamorphic check.
//!
//! An optimized query `SELECT * FROM … WHERE φ` is paired with a translated
//! query that computes `φ IS TRUE` for every row of the same `FROM` clause.
//! The engine can use `φ` to plan the first query but not the second, so
//! their counts disagree only if one of the two evaluation paths is wrong.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::{
    CastType, ColumnRef, Expression, IsTest, SelectItem, SelectList, SelectQuery, Statement, StatementKind, TableRef,
};
use crate::dialect::DialectProfile;
use crate::engine::{EngineResult, Executor};
use crate::render::{render_statement, RenderError};
use crate::schema::SchemaDef;
use crate::value::SqlValue;

/// How the optimized query's row count is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CountStrategy {
    /// Run the query as is and count the rows.
    NaiveIteration,
    /// Replace the select list by `COUNT(*)`.
    AggregateCount,
}

impl CountStrategy {
    /// Round-robin schedule: even check indexes iterate.
    pub fn for_check(index: u64) -> Self {
        if index.is_multiple_of(2) {
            CountStrategy::NaiveIteration
        } else {
            CountStrategy::AggregateCount
        }
    }
}

impl fmt::Display for CountStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CountStrategy::NaiveIteration => "naive-iteration",
            CountStrategy::AggregateCount => "aggregate-count",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OracleMode {
    Count,
    Content,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WhichQuery {
    Optimized,
    Unoptimized,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SkipReason {
    ExpectedError { pattern: String, query: WhichQuery },
    Timeout { query: WhichQuery },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub optimized_count: u64,
    pub unoptimized_count: u64,
    pub optimized_sql: String,
    pub unoptimized_sql: String,
    pub strategy: CountStrategy,
    pub mode: OracleMode,
    pub seed: Option<u64>,
    /// Content mode: the first row present on one side only.
    pub differing_row: Option<Vec<SqlValue>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OracleVerdict {
    Consistent { count: u64 },
    Discrepancy(Box<Discrepancy>),
    Skipped(SkipReason),
}

impl OracleVerdict {
    pub fn is_discrepancy(&self) -> bool {
        matches!(self, OracleVerdict::Discrepancy(_))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        if let OracleVerdict::Discrepancy(d) = &mut self {
            d.seed = Some(seed);
        }
        self
    }

    /// (optimized, unoptimized) counts when both queries completed.
    pub fn counts(&self) -> Option<(u64, u64)> {
        match self {
            OracleVerdict::Consistent { count } => Some((*count, *count)),
            OracleVerdict::Discrepancy(d) => Some((d.optimized_count, d.unoptimized_count)),
            OracleVerdict::Skipped(_) => None,
        }
    }
}

/// Outcomes that are not verdicts: the engine misbehaved outside the oracle.
#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum CheckError {
    #[error("unexpected error from `{statement}`: {message}")]
    UnexpectedEngineError { statement: String, kind: StatementKind, message: String },
    #[error("engine crashed on `{statement}`: {message}")]
    EngineCrash { statement: String, message: String },
    #[error("cannot render query: {0}")]
    Unsupported(String),
}

impl From<RenderError> for CheckError {
    fn from(e: RenderError) -> Self {
        CheckError::Unsupported(e.to_string())
    }
}

fn predicate_of(q: &SelectQuery) -> Expression {
    q.where_clause.clone().unwrap_or_else(|| Expression::boolean(true))
}

/// Moves the predicate into the select list as `φ IS TRUE`, dropping
/// `WHERE` and `ORDER BY` and keeping everything else.
pub fn translate(q: &SelectQuery) -> SelectQuery {
    SelectQuery {
        select_list: SelectList::Items(vec![SelectItem::Expr {
            expr: Expression::is(predicate_of(q), IsTest::True),
            alias: None,
        }]),
        from: q.from.clone(),
        joins: q.joins.clone(),
        where_clause: None,
        group_by: q.group_by.clone(),
        order_by: vec![],
        distinct: false,
    }
}

/// The statement whose result yields the optimized count. Grouped queries
/// always count per group and are summed by the caller.
pub fn build_optimized_count_query(q: &SelectQuery, strategy: CountStrategy) -> (Statement, CountStrategy) {
    if !q.group_by.is_empty() {
        let mut c = q.clone();
        c.select_list = SelectList::Items(vec![SelectItem::CountStar]);
        c.order_by.clear();
        return (Statement::Select(c), CountStrategy::NaiveIteration);
    }
    match strategy {
        CountStrategy::NaiveIteration => (Statement::Select(q.clone()), strategy),
        CountStrategy::AggregateCount => {
            let mut c = q.clone();
            c.select_list = SelectList::Items(vec![SelectItem::CountStar]);
            c.order_by.clear();
            (Statement::Select(c), strategy)
        }
    }
}

/// `SELECT SUM(count) FROM (SELECT (φ IS TRUE) AS count FROM …)`.
pub fn build_unoptimized_sum_query(translated: &SelectQuery, dialect: &DialectProfile) -> Statement {
    let term = match &translated.select_list {
        SelectList::Items(items) => match items.first() {
            Some(SelectItem::Expr { expr, .. }) => expr.clone(),
            _ => Expression::boolean(true),
        },
        SelectList::Star => Expression::boolean(true),
    };
    let term = if dialect.bool_sum_needs_cast { Expression::cast(term, CastType::Int) } else { term };
    let mut inner = translated.clone();
    let alias = Some("count".to_string());
    inner.select_list = SelectList::Items(vec![if inner.group_by.is_empty() {
        SelectItem::Expr { expr: term, alias }
    } else {
        SelectItem::Sum { expr: term, alias }
    }]);
    Statement::Select(SelectQuery {
        select_list: SelectList::Items(vec![SelectItem::Sum {
            expr: Expression::Column(ColumnRef::bare("count")),
            alias: None,
        }]),
        from: vec![TableRef::Derived { query: Box::new(inner), alias: None }],
        joins: vec![],
        where_clause: None,
        group_by: vec![],
        order_by: vec![],
        distinct: false,
    })
}

enum Outcome {
    Rows(Vec<Vec<SqlValue>>),
    Skip(SkipReason),
}

fn classify(
    result: EngineResult,
    which: WhichQuery,
    sql: &str,
    dialect: &DialectProfile,
) -> Result<Outcome, CheckError> {
    match result {
        EngineResult::Rows { rows, .. } => Ok(Outcome::Rows(rows)),
        EngineResult::Timeout => Ok(Outcome::Skip(SkipReason::Timeout { query: which })),
        EngineResult::Error(message) => match dialect.match_expected(StatementKind::Select, &message) {
            Some(p) => Ok(Outcome::Skip(SkipReason::ExpectedError { pattern: p.to_string(), query: which })),
            None => Err(CheckError::UnexpectedEngineError {
                statement: sql.to_string(),
                kind: StatementKind::Select,
                message,
            }),
        },
        EngineResult::Crash(message) => Err(CheckError::EngineCrash { statement: sql.to_string(), message }),
    }
}

type RowPair = (Vec<Vec<SqlValue>>, Vec<Vec<SqlValue>>);

/// Runs both statements and classifies their results. A crash outranks an
/// unexpected error, which outranks a skip.
fn run_pair<E: Executor + ?Sized>(
    executor: &mut E,
    optimized: (&Statement, &str),
    unoptimized: (&Statement, &str),
    dialect: &DialectProfile,
) -> Result<Result<RowPair, SkipReason>, CheckError> {
    let a = classify(executor.execute(optimized.0), WhichQuery::Optimized, optimized.1, dialect);
    let b = classify(executor.execute(unoptimized.0), WhichQuery::Unoptimized, unoptimized.1, dialect);
    match (a, b) {
        (Err(e @ CheckError::EngineCrash { .. }), _) | (_, Err(e @ CheckError::EngineCrash { .. })) => Err(e),
        (Err(e), _) | (_, Err(e)) => Err(e),
        (Ok(Outcome::Skip(s)), _) | (_, Ok(Outcome::Skip(s))) => Ok(Err(s)),
        (Ok(Outcome::Rows(a)), Ok(Outcome::Rows(b))) => Ok(Ok((a, b))),
    }
}

fn as_count(v: Option<&SqlValue>) -> Option<u64> {
    match v {
        None | Some(SqlValue::Null) => Some(0),
        Some(SqlValue::Integer(i)) => u64::try_from(*i).ok(),
        Some(SqlValue::Real(r)) if r.fract() == 0.0 && *r >= 0.0 => Some(*r as u64),
        Some(SqlValue::Boolean(b)) => Some(*b as u64),
        _ => None,
    }
}

fn malformed(sql: &str, what: &str) -> CheckError {
    CheckError::UnexpectedEngineError {
        statement: sql.to_string(),
        kind: StatementKind::Select,
        message: format!("malformed count result: {what}"),
    }
}

/// Executes one count-mode check.
pub fn run_check<E: Executor + ?Sized>(
    executor: &mut E,
    q: &SelectQuery,
    strategy: CountStrategy,
    dialect: &DialectProfile,
) -> Result<OracleVerdict, CheckError> {
    let (opt_stmt, strategy) = build_optimized_count_query(q, strategy);
    let unopt_stmt = build_unoptimized_sum_query(&translate(q), dialect);
    let opt_sql = render_statement(&opt_stmt, dialect)?;
    let unopt_sql = render_statement(&unopt_stmt, dialect)?;
    let (opt_rows, unopt_rows) = match run_pair(executor, (&opt_stmt, &opt_sql), (&unopt_stmt, &unopt_sql), dialect)? {
        Ok(rows) => rows,
        Err(skip) => return Ok(OracleVerdict::Skipped(skip)),
    };
    let optimized_count = if !q.group_by.is_empty() {
        let mut total = 0u64;
        for r in &opt_rows {
            total += as_count(r.first()).ok_or_else(|| malformed(&opt_sql, "non-integer group count"))?;
        }
        total
    } else {
        match strategy {
            CountStrategy::NaiveIteration => opt_rows.len() as u64,
            CountStrategy::AggregateCount => match opt_rows.as_slice() {
                [row] => as_count(row.first()).ok_or_else(|| malformed(&opt_sql, "non-integer COUNT(*)"))?,
                _ => return Err(malformed(&opt_sql, "COUNT(*) must return one row")),
            },
        }
    };
    let unoptimized_count = match unopt_rows.as_slice() {
        [row] => as_count(row.first()).ok_or_else(|| malformed(&unopt_sql, "non-integer SUM"))?,
        _ => return Err(malformed(&unopt_sql, "SUM must return one row")),
    };
    if optimized_count == unoptimized_count {
        Ok(OracleVerdict::Consistent { count: optimized_count })
    } else {
        Ok(OracleVerdict::Discrepancy(Box::new(Discrepancy {
            optimized_count,
            unoptimized_count,
            optimized_sql: opt_sql,
            unoptimized_sql: unopt_sql,
            strategy,
            mode: OracleMode::Count,
            seed: None,
            differing_row: None,
        })))
    }
}

/// The translated query for content mode: every column of every table in
/// scope, then `φ IS TRUE`.
pub fn translate_with_columns(q: &SelectQuery, schema: &SchemaDef) -> SelectQuery {
    let mut t = translate(q);
    let mut items = Vec::new();
    for name in q.named_tables() {
        if let Some(table) = schema.table(name) {
            for c in &table.columns {
                items.push(SelectItem::Expr { expr: Expression::col(&table.name, &c.name), alias: None });
            }
        }
    }
    items.push(SelectItem::Expr { expr: Expression::is(predicate_of(q), IsTest::True), alias: None });
    t.select_list = SelectList::Items(items);
    t.group_by.clear();
    t
}

/// A value's identity for multiset comparison: storage class and text.
fn row_key(row: &[SqlValue], dialect: &DialectProfile) -> String {
    row.iter()
        .map(|v| {
            let v = v.clone().normalize_bool(dialect.has_native_boolean);
            format!("{}:{}", v.storage_class(), v.to_text().unwrap_or_default())
        })
        .collect::<Vec<_>>()
        .join("|")
}

/// Executes one content-mode check: the fetched rows must equal, as a
/// multiset, the translated rows whose predicate column is TRUE.
pub fn run_content_check<E: Executor + ?Sized>(
    executor: &mut E,
    q: &SelectQuery,
    schema: &SchemaDef,
    dialect: &DialectProfile,
) -> Result<OracleVerdict, CheckError> {
    if !q.group_by.is_empty() || q.has_derived_tables() {
        return run_check(executor, q, CountStrategy::NaiveIteration, dialect);
    }
    let opt_stmt = Statement::Select(q.clone());
    let unopt_stmt = Statement::Select(translate_with_columns(q, schema));
    let opt_sql = render_statement(&opt_stmt, dialect)?;
    let unopt_sql = render_statement(&unopt_stmt, dialect)?;
    let (opt_rows, unopt_rows) = match run_pair(executor, (&opt_stmt, &opt_sql), (&unopt_stmt, &unopt_sql), dialect)? {
        Ok(rows) => rows,
        Err(skip) => return Ok(OracleVerdict::Skipped(skip)),
    };
    let mut expected: BTreeMap<String, (i64, Vec<SqlValue>)> = BTreeMap::new();
    let mut kept = 0u64;
    for mut row in unopt_rows {
        let flag = row.pop().and_then(|v| v.truth()).unwrap_or(false);
        if flag {
            kept += 1;
            let e = expected.entry(row_key(&row, dialect)).or_insert((0, row));
            e.0 += 1;
        }
    }
    for row in &opt_rows {
        let e = expected.entry(row_key(row, dialect)).or_insert((0, row.clone()));
        e.0 -= 1;
    }
    let differing = expected.into_values().find(|(n, _)| *n != 0).map(|(_, r)| r);
    match differing {
        None => Ok(OracleVerdict::Consistent { count: kept }),
        Some(row) => Ok(OracleVerdict::Discrepancy(Box::new(Discrepancy {
            optimized_count: opt_rows.len() as u64,
            unoptimized_count: kept,
            optimized_sql: opt_sql,
            unoptimized_sql: unopt_sql,
            strategy: CountStrategy::NaiveIteration,
            mode: OracleMode::Content,
            seed: None,
            differing_row: Some(row),
        }))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{BinaryOp, JoinClause, JoinKind};
    use crate::render::render_query;

    fn fig1() -> SelectQuery {
        SelectQuery::star(
            &["t0"],
            Some(Expression::binary(BinaryOp::Gt, Expression::col("t0", "c0"), Expression::int(0))),
        )
    }

    #[test]
    fn translation_shape() {
        let sqlite = DialectProfile::sqlite();
        assert_eq!(render_query(&translate(&fig1()), &sqlite).unwrap(), "SELECT ((t0.c0 > 0) IS TRUE) FROM t0;");
        let none = SelectQuery::star(&["t0"], None);
        assert_eq!(render_query(&translate(&none), &sqlite).unwrap(), "SELECT (1 IS TRUE) FROM t0;");
    }

    #[test]
    fn translation_copies_joins() {
        let mut q = SelectQuery::star(
            &["t0"],
            Some(Expression::binary(BinaryOp::Eq, Expression::col("t2", "c0"), Expression::int(5))),
        );
        q.joins = vec![
            JoinClause {
                kind: JoinKind::Left,
                right: TableRef::named("t1"),
                on: Some(Expression::binary(BinaryOp::Eq, Expression::col("t0", "c0"), Expression::col("t1", "c0"))),
            },
            JoinClause {
                kind: JoinKind::Inner,
                right: TableRef::named("t2"),
                on: Some(Expression::binary(BinaryOp::Gt, Expression::col("t2", "c0"), Expression::col("t0", "c1"))),
            },
        ];
        let t = translate(&q);
        assert_eq!(t.joins, q.joins);
        assert_eq!(t.from, q.from);
        assert_eq!(
            render_query(&t, &DialectProfile::sqlite()).unwrap(),
            "SELECT ((t2.c0 = 5) IS TRUE) FROM t0 LEFT JOIN t1 ON (t0.c0 = t1.c0) JOIN t2 ON (t2.c0 > t0.c1);"
        );
    }

    #[test]
    fn count_queries() {
        let d = DialectProfile::sqlite();
        let (agg, _) = build_optimized_count_query(&fig1(), CountStrategy::AggregateCount);
        assert_eq!(render_statement(&agg, &d).unwrap(), "SELECT COUNT(*) FROM t0 WHERE (t0.c0 > 0);");
        let (naive, _) = build_optimized_count_query(&fig1(), CountStrategy::NaiveIteration);
        assert_eq!(naive, Statement::Select(fig1()));
        let sum = build_unoptimized_sum_query(&translate(&fig1()), &d);
        assert_eq!(
            render_statement(&sum, &d).unwrap(),
            "SELECT SUM(count) FROM (SELECT ((t0.c0 > 0) IS TRUE) AS count FROM t0);"
        );
        let strict = DialectProfile::strict();
        let sum = build_unoptimized_sum_query(&translate(&fig1()), &strict);
        assert_eq!(
            render_statement(&sum, &strict).unwrap(),
            "SELECT SUM(count) FROM (SELECT CAST(((t0.c0 > 0) IS TRUE) AS INT) AS count FROM t0) AS sub;"
        );
    }

    #[test]
    fn grouped_queries_sum_groups() {
        let mut q = fig1();
        q.group_by = vec![Expression::col("t0", "c1")];
        let (stmt, s) = build_optimized_count_query(&q, CountStrategy::AggregateCount);
        assert_eq!(s, CountStrategy::NaiveIteration);
        let d = DialectProfile::sqlite();
        assert_eq!(render_statement(&stmt, &d).unwrap(), "SELECT COUNT(*) FROM t0 WHERE (t0.c0 > 0) GROUP BY t0.c1;");
        assert_eq!(
            render_statement(&build_unoptimized_sum_query(&translate(&q), &d), &d).unwrap(),
            "SELECT SUM(count) FROM (SELECT SUM(((t0.c0 > 0) IS TRUE)) AS count FROM t0 GROUP BY t0.c1);"
        );
    }

    #[test]
    fn strategy_alternates() {
        assert_eq!(CountStrategy::for_check(0), CountStrategy::NaiveIteration);
        assert_eq!(CountStrategy::for_check(1), CountStrategy::AggregateCount);
    }
}
