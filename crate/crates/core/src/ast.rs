//! Statement and expression trees.
//!
//! There is deliberately no subquery expression node: derived tables only
//! appear in `FROM`, where the oracle needs them for its aggregate wrapper.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::schema::{Collation, IndexDef, TableDef};
use crate::value::SqlValue;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table: Option<String>,
    pub column: String,
}

impl ColumnRef {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        ColumnRef { table: Some(table.into()), column: column.into() }
    }

    pub fn bare(column: impl Into<String>) -> Self {
        ColumnRef { table: None, column: column.into() }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.table {
            Some(t) => write!(f, "{t}.{}", self.column),
            None => f.write_str(&self.column),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnaryOp {
    Not,
    Neg,
    Plus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryOp {
    And,
    Or,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Concat,
    Like,
    Glob,
}

impl BinaryOp {
    pub fn is_comparison(self) -> bool {
        matches!(self, BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge)
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinaryOp::And | BinaryOp::Or)
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(self, BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div | BinaryOp::Rem)
    }

    /// The operator obtained by swapping the operands of a comparison.
    pub fn commuted(self) -> Option<BinaryOp> {
        Some(match self {
            BinaryOp::Eq => BinaryOp::Eq,
            BinaryOp::Ne => BinaryOp::Ne,
            BinaryOp::Lt => BinaryOp::Gt,
            BinaryOp::Le => BinaryOp::Ge,
            BinaryOp::Gt => BinaryOp::Lt,
            BinaryOp::Ge => BinaryOp::Le,
            _ => return None,
        })
    }

    pub fn sql(self) -> &'static str {
        match self {
            BinaryOp::And => "AND",
            BinaryOp::Or => "OR",
            BinaryOp::Eq => "=",
            BinaryOp::Ne => "<>",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Rem => "%",
            BinaryOp::Concat => "||",
            BinaryOp::Like => "LIKE",
            BinaryOp::Glob => "GLOB",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IsTest {
    True,
    False,
    Null,
    NotNull,
}

impl IsTest {
    pub fn sql(self) -> &'static str {
        match self {
            IsTest::True => "IS TRUE",
            IsTest::False => "IS FALSE",
            IsTest::Null => "IS NULL",
            IsTest::NotNull => "IS NOT NULL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CastType {
    Integer,
    /// Same semantics as `Integer`, spelled `INT` for strict dialects.
    Int,
    Real,
    Text,
    Numeric,
}

impl CastType {
    pub fn sql(self) -> &'static str {
        match self {
            CastType::Integer => "INTEGER",
            CastType::Int => "INT",
            CastType::Real => "REAL",
            CastType::Text => "TEXT",
            CastType::Numeric => "NUMERIC",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expression {
    Constant(SqlValue),
    Column(ColumnRef),
    Unary { op: UnaryOp, operand: Box<Expression> },
    Binary { op: BinaryOp, left: Box<Expression>, right: Box<Expression> },
    Between { symmetric: bool, value: Box<Expression>, low: Box<Expression>, high: Box<Expression> },
    InList { value: Box<Expression>, candidates: Vec<Expression> },
    Function { name: String, args: Vec<Expression> },
    Cast { operand: Box<Expression>, target: CastType },
    Collate { operand: Box<Expression>, collation: Collation },
    PostfixIs { operand: Box<Expression>, test: IsTest },
}

/// Shorthand constructors, mostly for tests and encoded scenarios.
impl Expression {
    pub fn null() -> Self {
        Expression::Constant(SqlValue::Null)
    }

    pub fn int(i: i64) -> Self {
        Expression::Constant(SqlValue::Integer(i))
    }

    pub fn real(r: f64) -> Self {
        Expression::Constant(SqlValue::Real(r))
    }

    pub fn text(s: impl Into<String>) -> Self {
        Expression::Constant(SqlValue::Text(s.into()))
    }

    pub fn boolean(b: bool) -> Self {
        Expression::Constant(SqlValue::Boolean(b))
    }

    pub fn col(table: &str, column: &str) -> Self {
        Expression::Column(ColumnRef::new(table, column))
    }

    pub fn binary(op: BinaryOp, left: Expression, right: Expression) -> Self {
        Expression::Binary { op, left: Box::new(left), right: Box::new(right) }
    }

    pub fn unary(op: UnaryOp, operand: Expression) -> Self {
        Expression::Unary { op, operand: Box::new(operand) }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(operand: Expression) -> Self {
        Self::unary(UnaryOp::Not, operand)
    }

    pub fn and(left: Expression, right: Expression) -> Self {
        Self::binary(BinaryOp::And, left, right)
    }

    pub fn or(left: Expression, right: Expression) -> Self {
        Self::binary(BinaryOp::Or, left, right)
    }

    pub fn is(operand: Expression, test: IsTest) -> Self {
        Expression::PostfixIs { operand: Box::new(operand), test }
    }

    pub fn between(value: Expression, low: Expression, high: Expression, symmetric: bool) -> Self {
        Expression::Between { symmetric, value: Box::new(value), low: Box::new(low), high: Box::new(high) }
    }

    pub fn in_list(value: Expression, candidates: Vec<Expression>) -> Self {
        Expression::InList { value: Box::new(value), candidates }
    }

    pub fn cast(operand: Expression, target: CastType) -> Self {
        Expression::Cast { operand: Box::new(operand), target }
    }

    pub fn collate(operand: Expression, collation: Collation) -> Self {
        Expression::Collate { operand: Box::new(operand), collation }
    }

    pub fn call(name: &str, args: Vec<Expression>) -> Self {
        Expression::Function { name: name.to_ascii_uppercase(), args }
    }
}

impl Expression {
    pub fn children(&self) -> Vec<&Expression> {
        match self {
            Expression::Constant(_) | Expression::Column(_) => vec![],
            Expression::Unary { operand, .. }
            | Expression::Cast { operand, .. }
            | Expression::Collate { operand, .. }
            | Expression::PostfixIs { operand, .. } => vec![operand],
            Expression::Binary { left, right, .. } => vec![left, right],
            Expression::Between { value, low, high, .. } => vec![value, low, high],
            Expression::InList { value, candidates } => {
                let mut v = vec![value.as_ref()];
                v.extend(candidates.iter());
                v
            }
            Expression::Function { args, .. } => args.iter().collect(),
        }
    }

    pub fn children_mut(&mut self) -> Vec<&mut Expression> {
        match self {
            Expression::Constant(_) | Expression::Column(_) => vec![],
            Expression::Unary { operand, .. }
            | Expression::Cast { operand, .. }
            | Expression::Collate { operand, .. }
            | Expression::PostfixIs { operand, .. } => vec![operand],
            Expression::Binary { left, right, .. } => vec![left, right],
            Expression::Between { value, low, high, .. } => vec![value, low, high],
            Expression::InList { value, candidates } => {
                let mut v = vec![value.as_mut()];
                v.extend(candidates.iter_mut());
                v
            }
            Expression::Function { args, .. } => args.iter_mut().collect(),
        }
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expression)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    pub fn has_columns(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| found |= matches!(e, Expression::Column(_)));
        found
    }

    pub fn columns(&self) -> Vec<&ColumnRef> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expression::Column(c) = e {
                out.push(c);
            }
        });
        out
    }

    pub fn function_names(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expression::Function { name, .. } = e {
                out.push(name.as_str());
            }
        });
        out
    }

    /// Name of the node kind, ignoring operands and literal values.
    pub fn kind_name(&self) -> String {
        match self {
            Expression::Constant(_) => "constant".into(),
            Expression::Column(_) => "column".into(),
            Expression::Unary { op, .. } => format!("unary:{op:?}"),
            Expression::Binary { op, .. } => format!("binary:{op:?}"),
            Expression::Between { symmetric, .. } => {
                if *symmetric {
                    "between-symmetric".into()
                } else {
                    "between".into()
                }
            }
            Expression::InList { .. } => "in".into(),
            Expression::Function { name, .. } => format!("fn:{}", name.to_ascii_lowercase()),
            Expression::Cast { target, .. } => format!("cast:{target:?}"),
            Expression::Collate { .. } => "collate".into(),
            Expression::PostfixIs { test, .. } => format!("is:{test:?}"),
        }
    }

    /// Flattens nested ANDs into their conjuncts.
    pub fn conjuncts(&self) -> Vec<&Expression> {
        match self {
            Expression::Binary { op: BinaryOp::And, left, right } => {
                let mut v = left.conjuncts();
                v.extend(right.conjuncts());
                v
            }
            e => vec![e],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JoinKind {
    Inner,
    Left,
    Cross,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TableRef {
    Named(String),
    Derived { query: Box<SelectQuery>, alias: Option<String> },
}

impl TableRef {
    pub fn named(name: impl Into<String>) -> Self {
        TableRef::Named(name.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinClause {
    pub kind: JoinKind,
    pub right: TableRef,
    /// Present iff `kind` is not `Cross`.
    pub on: Option<Expression>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SelectItem {
    Expr { expr: Expression, alias: Option<String> },
    CountStar,
    Sum { expr: Expression, alias: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SelectList {
    Star,
    Items(Vec<SelectItem>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderTerm {
    pub expr: Expression,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectQuery {
    pub select_list: SelectList,
    pub from: Vec<TableRef>,
    pub joins: Vec<JoinClause>,
    pub where_clause: Option<Expression>,
    pub group_by: Vec<Expression>,
    pub order_by: Vec<OrderTerm>,
    pub distinct: bool,
}

impl SelectQuery {
    /// `SELECT * FROM <tables> [WHERE predicate]`.
    pub fn star(tables: &[&str], predicate: Option<Expression>) -> Self {
        SelectQuery {
            select_list: SelectList::Star,
            from: tables.iter().map(|t| TableRef::named(*t)).collect(),
            joins: vec![],
            where_clause: predicate,
            group_by: vec![],
            order_by: vec![],
            distinct: false,
        }
    }

    /// Every expression the query evaluates, outermost query only.
    pub fn expressions(&self) -> Vec<&Expression> {
        let mut out = Vec::new();
        if let SelectList::Items(items) = &self.select_list {
            for item in items {
                match item {
                    SelectItem::Expr { expr, .. } | SelectItem::Sum { expr, .. } => out.push(expr),
                    SelectItem::CountStar => {}
                }
            }
        }
        out.extend(self.joins.iter().filter_map(|j| j.on.as_ref()));
        out.extend(self.where_clause.as_ref());
        out.extend(self.group_by.iter());
        out.extend(self.order_by.iter().map(|o| &o.expr));
        out
    }

    pub fn named_tables(&self) -> Vec<&str> {
        self.from
            .iter()
            .chain(self.joins.iter().map(|j| &j.right))
            .filter_map(|t| match t {
                TableRef::Named(n) => Some(n.as_str()),
                TableRef::Derived { .. } => None,
            })
            .collect()
    }

    pub fn has_derived_tables(&self) -> bool {
        self.from.iter().chain(self.joins.iter().map(|j| &j.right)).any(|t| matches!(t, TableRef::Derived { .. }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StatementKind {
    CreateTable,
    CreateIndex,
    Insert,
    Update,
    Delete,
    Select,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Statement {
    CreateTable(TableDef),
    CreateIndex(IndexDef),
    Insert { table: String, columns: Vec<String>, rows: Vec<Vec<SqlValue>> },
    Update { table: String, assignments: Vec<(String, Expression)>, predicate: Option<Expression> },
    Delete { table: String, predicate: Option<Expression> },
    Select(SelectQuery),
}

impl Statement {
    pub fn kind(&self) -> StatementKind {
        match self {
            Statement::CreateTable(_) => StatementKind::CreateTable,
            Statement::CreateIndex(_) => StatementKind::CreateIndex,
            Statement::Insert { .. } => StatementKind::Insert,
            Statement::Update { .. } => StatementKind::Update,
            Statement::Delete { .. } => StatementKind::Delete,
            Statement::Select(_) => StatementKind::Select,
        }
    }

    pub fn expressions(&self) -> Vec<&Expression> {
        match self {
            Statement::CreateTable(_) | Statement::Insert { .. } => vec![],
            Statement::CreateIndex(ix) => ix.keys.iter().chain(ix.partial_predicate.iter()).collect(),
            Statement::Update { assignments, predicate, .. } => {
                assignments.iter().map(|(_, e)| e).chain(predicate.iter()).collect()
            }
            Statement::Delete { predicate, .. } => predicate.iter().collect(),
            Statement::Select(q) => q.expressions(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conjunct_flattening() {
        let e = Expression::and(
            Expression::and(Expression::int(1), Expression::int(2)),
            Expression::or(Expression::int(3), Expression::int(4)),
        );
        assert_eq!(e.conjuncts().len(), 3);
    }

    #[test]
    fn commuted_ops() {
        assert_eq!(BinaryOp::Lt.commuted(), Some(BinaryOp::Gt));
        assert_eq!(BinaryOp::Ge.commuted(), Some(BinaryOp::Le));
        assert_eq!(BinaryOp::Like.commuted(), None);
    }
}
