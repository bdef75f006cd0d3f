//! Query evaluation over [`Storage`].

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::ast::{Direction, Expression, JoinKind, SelectItem, SelectList, SelectQuery, TableRef};
use crate::dialect::DialectProfile;
use crate::engine::eval::{
    eval_expression, expr_affinity, expr_collation, CollationSource, EvalError, Scope, ScopeColumn,
};
use crate::schema::Collation;
use crate::value::{compare_values, Number, SortKey, SqlValue};

use super::optimizer::{range_is_empty, Access, AccessPlanner, Rewriter};
use super::storage::{table_scope, Storage};
use super::BugInjection;

#[derive(Debug, Clone, PartialEq)]
pub enum ExecError {
    Eval(EvalError),
    Message(String),
    BudgetExhausted,
}

impl From<EvalError> for ExecError {
    fn from(e: EvalError) -> Self {
        ExecError::Eval(e)
    }
}

impl std::fmt::Display for ExecError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExecError::Eval(e) => write!(f, "{e}"),
            ExecError::Message(m) => f.write_str(m),
            ExecError::BudgetExhausted => f.write_str("interrupted"),
        }
    }
}

type Result<T> = std::result::Result<T, ExecError>;

/// A scope plus its rows.
#[derive(Debug, Clone, Default)]
pub struct Relation {
    pub scope: Scope,
    pub rows: Vec<Vec<SqlValue>>,
}

pub struct QueryRunner<'a> {
    pub storage: &'a Storage,
    pub dialect: &'a DialectProfile,
    pub injection: Option<BugInjection>,
    /// `false` evaluates every query by full scans and the raw predicate.
    pub optimize: bool,
    /// Remaining row visits before the query is abandoned.
    pub budget: u64,
}

impl QueryRunner<'_> {
    fn charge(&mut self, n: usize) -> Result<()> {
        self.budget = self.budget.checked_sub(n as u64).ok_or(ExecError::BudgetExhausted)?;
        Ok(())
    }

    fn source(&mut self, t: &TableRef) -> Result<Relation> {
        match t {
            TableRef::Named(name) => {
                let table =
                    self.storage.table(name).ok_or_else(|| ExecError::Message(format!("no such table: {name}")))?;
                self.charge(table.rows.len())?;
                Ok(Relation { scope: table.scope(), rows: table.rows.iter().map(|r| r.values.clone()).collect() })
            }
            TableRef::Derived { query, alias } => {
                let (names, inner) = self.run(query)?;
                let label = alias.clone().unwrap_or_default();
                let scope = Scope {
                    columns: names
                        .into_iter()
                        .zip(inner.1)
                        .map(|(name, (affinity, collation))| ScopeColumn {
                            table: label.clone(),
                            name,
                            affinity,
                            collation,
                        })
                        .collect(),
                };
                Ok(Relation { scope, rows: inner.0 })
            }
        }
    }

    /// Rows of the driving table, through an index when the planner picks one.
    fn driving(
        &mut self,
        q: &SelectQuery,
        predicate: Option<Expression>,
        full: &Scope,
    ) -> Result<(Relation, Option<Expression>, Option<Access>)> {
        let first = &q.from[0];
        let TableRef::Named(name) = first else {
            return Ok((self.source(first)?, predicate, None));
        };
        let Some(table) = self.storage.table(name) else {
            return Err(ExecError::Message(format!("no such table: {name}")));
        };
        let planner = AccessPlanner {
            storage: self.storage,
            dialect: self.dialect,
            injection: self.injection,
            scope: full,
            table: name,
            columns: 0..table.def.columns.len(),
        };
        let (residual, access) = planner.plan(predicate);
        match &access {
            Access::FullScan => Ok((self.source(first)?, residual, Some(access))),
            Access::IndexRange { index, lo, hi, .. } => {
                let idx = &self.storage.indexes[*index];
                let by_rowid: BTreeMap<i64, &Vec<SqlValue>> = table.rows.iter().map(|r| (r.rowid, &r.values)).collect();
                let mut rows = Vec::new();
                if !range_is_empty(lo, hi) {
                    for (_, rowid) in idx.entries.range((lo.clone(), hi.clone())) {
                        rows.push(by_rowid[rowid].clone());
                    }
                }
                self.charge(rows.len())?;
                Ok((Relation { scope: table_scope(&table.def), rows }, residual, Some(access)))
            }
        }
    }

    fn scope_of(&self, t: &TableRef) -> Result<Scope> {
        match t {
            TableRef::Named(name) => self
                .storage
                .table(name)
                .map(|t| t.scope())
                .ok_or_else(|| ExecError::Message(format!("no such table: {name}"))),
            TableRef::Derived { .. } => Ok(Scope::empty()),
        }
    }

    fn cross(&mut self, left: Relation, right: Relation) -> Result<Relation> {
        self.charge(left.rows.len() * right.rows.len())?;
        let mut scope = left.scope;
        scope.extend(&right.scope);
        let mut rows = Vec::with_capacity(left.rows.len() * right.rows.len());
        for l in &left.rows {
            for r in &right.rows {
                let mut row = l.clone();
                row.extend(r.iter().cloned());
                rows.push(row);
            }
        }
        Ok(Relation { scope, rows })
    }

    fn join(&mut self, left: Relation, kind: JoinKind, right: Relation, on: Option<&Expression>) -> Result<Relation> {
        let width = right.scope.len();
        let mut scope = left.scope.clone();
        scope.extend(&right.scope);
        self.charge(left.rows.len() * right.rows.len())?;
        let mut rows = Vec::new();
        for l in &left.rows {
            let mut matched = false;
            for r in &right.rows {
                let mut row = l.clone();
                row.extend(r.iter().cloned());
                let keep = match on {
                    None => true,
                    Some(p) => eval_expression(p, &scope, &row, self.dialect)?.truth() == Some(true),
                };
                if keep {
                    matched = true;
                    rows.push(row);
                }
            }
            if !matched && kind == JoinKind::Left {
                let mut row = l.clone();
                row.extend(std::iter::repeat_n(SqlValue::Null, width));
                rows.push(row);
            }
        }
        Ok(Relation { scope, rows })
    }

    /// Runs a query and returns its column names, rows, and per-column
    /// affinity and collation.
    #[allow(clippy::type_complexity)]
    pub fn run(
        &mut self,
        q: &SelectQuery,
    ) -> Result<(Vec<String>, (Vec<Vec<SqlValue>>, Vec<(crate::schema::Affinity, Option<Collation>)>))> {
        if q.from.is_empty() {
            return Err(ExecError::Message("a query needs at least one table".into()));
        }
        // Scope of the full join, needed to plan before rows are fetched.
        let mut full = Scope::empty();
        for t in q.from.iter().chain(q.joins.iter().map(|j| &j.right)) {
            full.extend(&self.scope_of(t)?);
        }
        let simple_scope = !q.has_derived_tables();
        for c in q.expressions().into_iter().flat_map(|e| e.columns()) {
            if simple_scope {
                full.resolve(c)?;
            }
        }

        let (mut rel, predicate, access) = if self.optimize && simple_scope {
            let rewritten = q
                .where_clause
                .clone()
                .map(|w| Rewriter { scope: &full, dialect: self.dialect, injection: self.injection }.rewrite(w));
            self.driving(q, rewritten, &full)?
        } else {
            (self.source(&q.from[0])?, q.where_clause.clone(), None)
        };
        for t in &q.from[1..] {
            let right = self.source(t)?;
            rel = self.cross(rel, right)?;
        }
        for j in &q.joins {
            let right = self.source(&j.right)?;
            rel = self.join(rel, j.kind, right, j.on.as_ref())?;
        }
        if let Some(p) = &predicate {
            self.charge(rel.rows.len())?;
            let mut kept = Vec::new();
            for row in rel.rows {
                if eval_expression(p, &rel.scope, &row, self.dialect)?.truth() == Some(true) {
                    kept.push(row);
                }
            }
            rel.rows = kept;
        }
        if let (Some(Access::IndexRange { index, column, .. }), Some(BugInjection::ValueCorruption)) =
            (&access, self.injection)
        {
            let coll = self.storage.indexes[*index].collations[0];
            for row in rel.rows.iter_mut() {
                row[*column] = SortKey::new(&row[*column], coll).to_value();
            }
        }
        self.project(q, rel)
    }

    #[allow(clippy::type_complexity)]
    fn project(
        &mut self,
        q: &SelectQuery,
        rel: Relation,
    ) -> Result<(Vec<String>, (Vec<Vec<SqlValue>>, Vec<(crate::schema::Affinity, Option<Collation>)>))> {
        let scope = &rel.scope;
        let items: Vec<SelectItem> = match &q.select_list {
            SelectList::Star => scope
                .columns
                .iter()
                .map(|c| SelectItem::Expr {
                    expr: Expression::Column(crate::ast::ColumnRef::new(c.table.clone(), c.name.clone())),
                    alias: Some(c.name.clone()),
                })
                .collect(),
            SelectList::Items(items) => items.clone(),
        };
        let names: Vec<String> = items
            .iter()
            .enumerate()
            .map(|(i, it)| match it {
                SelectItem::Expr { alias: Some(a), .. } | SelectItem::Sum { alias: Some(a), .. } => a.clone(),
                SelectItem::Expr { expr: Expression::Column(c), .. } => c.column.clone(),
                SelectItem::CountStar => "COUNT(*)".into(),
                _ => format!("column{}", i + 1),
            })
            .collect();
        let meta = items
            .iter()
            .map(|it| match it {
                SelectItem::Expr { expr, .. } => (
                    expr_affinity(expr, scope),
                    match expr_collation(expr, scope) {
                        Some(CollationSource::Explicit(c) | CollationSource::Column(c)) => Some(c),
                        None => None,
                    },
                ),
                _ => (crate::schema::Affinity::Blob, None),
            })
            .collect();

        let aggregate = !q.group_by.is_empty() || items.iter().any(|i| !matches!(i, SelectItem::Expr { .. }));
        // (sort source row, output row)
        let mut out: Vec<(Vec<SqlValue>, Vec<SqlValue>)> = Vec::new();
        if aggregate {
            let mut groups: BTreeMap<Vec<SortKey>, Vec<Vec<SqlValue>>> = BTreeMap::new();
            for row in rel.rows {
                let mut key = Vec::with_capacity(q.group_by.len());
                for g in &q.group_by {
                    let v = eval_expression(g, scope, &row, self.dialect)?;
                    let coll = match expr_collation(g, scope) {
                        Some(CollationSource::Explicit(c) | CollationSource::Column(c)) => c,
                        None => Collation::Binary,
                    };
                    key.push(SortKey::new(&v, coll));
                }
                groups.entry(key).or_default().push(row);
            }
            if groups.is_empty() && q.group_by.is_empty() {
                groups.insert(vec![], vec![]);
            }
            for rows in groups.into_values() {
                let first = rows.first().cloned().unwrap_or_else(|| vec![SqlValue::Null; scope.len()]);
                let mut output = Vec::with_capacity(items.len());
                for it in &items {
                    output.push(match it {
                        SelectItem::Expr { expr, .. } => eval_expression(expr, scope, &first, self.dialect)?,
                        SelectItem::CountStar => SqlValue::Integer(rows.len() as i64),
                        SelectItem::Sum { expr, .. } => {
                            let mut vals = Vec::with_capacity(rows.len());
                            for r in &rows {
                                vals.push(eval_expression(expr, scope, r, self.dialect)?);
                            }
                            sum(&vals)?
                        }
                    });
                }
                out.push((first, output));
            }
        } else {
            for row in rel.rows {
                let mut output = Vec::with_capacity(items.len());
                for it in &items {
                    if let SelectItem::Expr { expr, .. } = it {
                        output.push(eval_expression(expr, scope, &row, self.dialect)?);
                    }
                }
                out.push((row, output));
            }
        }

        if !q.order_by.is_empty() {
            let mut keyed = Vec::with_capacity(out.len());
            for (src, o) in out {
                let mut keys = Vec::with_capacity(q.order_by.len());
                for term in &q.order_by {
                    let v = eval_expression(&term.expr, scope, &src, self.dialect)?;
                    let coll = match expr_collation(&term.expr, scope) {
                        Some(CollationSource::Explicit(c) | CollationSource::Column(c)) => c,
                        None => Collation::Binary,
                    };
                    keys.push((v, coll));
                }
                keyed.push((keys, src, o));
            }
            keyed.sort_by(|a, b| {
                for ((va, coll), ((vb, _), term)) in a.0.iter().zip(b.0.iter().zip(&q.order_by)) {
                    let ord = compare_values(va, vb, *coll);
                    let ord = if term.direction == Direction::Desc { ord.reverse() } else { ord };
                    if ord != Ordering::Equal {
                        return ord;
                    }
                }
                Ordering::Equal
            });
            out = keyed.into_iter().map(|(_, s, o)| (s, o)).collect();
        }

        let mut rows: Vec<Vec<SqlValue>> = out.into_iter().map(|(_, o)| o).collect();
        if q.distinct {
            let mut seen = std::collections::BTreeSet::new();
            rows.retain(|r| seen.insert(r.iter().map(|v| SortKey::new(v, Collation::Binary)).collect::<Vec<_>>()));
        }
        Ok((names, (rows, meta)))
    }
}

/// `SUM` with integer-overflow detection; NULL over no non-NULL input.
pub fn sum(values: &[SqlValue]) -> Result<SqlValue> {
    let mut int_total: i64 = 0;
    let mut real_total = 0.0;
    let mut any = false;
    let mut real = false;
    for v in values {
        match v.to_number() {
            None => {}
            Some(n) => {
                any = true;
                match n {
                    Number::Int(i) if !real => {
                        int_total = int_total.checked_add(i).ok_or(EvalError::IntegerOverflow)?;
                    }
                    n => {
                        if !real {
                            real = true;
                            real_total = int_total as f64;
                        }
                        real_total += n.as_f64();
                    }
                }
            }
        }
    }
    Ok(match (any, real) {
        (false, _) => SqlValue::Null,
        (true, false) => SqlValue::Integer(int_total),
        (true, true) => SqlValue::real(real_total),
    })
}
