//! Reference expression semantics.
//!
//! Three-valued logic for AND/OR/NOT, NULL-propagating comparisons, column
//! affinity on comparison operands, and collation resolution. Neither AND
//! nor OR short-circuits: both operands are always evaluated, so an error in
//! either one surfaces regardless of the other's value.

use std::cmp::Ordering;

use thiserror::Error;

use crate::ast::{BinaryOp, CastType, ColumnRef, Expression, IsTest, UnaryOp};
use crate::dialect::DialectProfile;
use crate::schema::{Affinity, Collation};
use crate::value::{apply_affinity, compare_values, numeric_prefix, Number, SqlValue};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("integer overflow")]
    IntegerOverflow,
    #[error("division by zero")]
    DivisionByZero,
    #[error("no such column: {0}")]
    NoSuchColumn(String),
    #[error("ambiguous column name: {0}")]
    AmbiguousColumn(String),
    #[error("no such function: {0}")]
    NoSuchFunction(String),
    #[error("wrong number of arguments to function {0}()")]
    WrongArgCount(String),
}

/// Metadata for one column visible to an expression.
#[derive(Debug, Clone, PartialEq)]
pub struct ScopeColumn {
    pub table: String,
    pub name: String,
    pub affinity: Affinity,
    /// `None` for computed columns of derived tables.
    pub collation: Option<Collation>,
}

/// The columns a row binding exposes, in row order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scope {
    pub columns: Vec<ScopeColumn>,
}

impl Scope {
    pub fn empty() -> Self {
        Scope::default()
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn extend(&mut self, other: &Scope) {
        self.columns.extend(other.columns.iter().cloned());
    }

    pub fn resolve(&self, r: &ColumnRef) -> Result<usize, EvalError> {
        let mut found = None;
        for (i, c) in self.columns.iter().enumerate() {
            let table_ok = match &r.table {
                Some(t) => c.table.eq_ignore_ascii_case(t),
                None => true,
            };
            if table_ok && c.name.eq_ignore_ascii_case(&r.column) {
                if found.is_some() {
                    return Err(EvalError::AmbiguousColumn(r.to_string()));
                }
                found = Some(i);
            }
        }
        found.ok_or_else(|| EvalError::NoSuchColumn(r.to_string()))
    }

    pub fn column(&self, r: &ColumnRef) -> Option<&ScopeColumn> {
        self.resolve(r).ok().map(|i| &self.columns[i])
    }
}

pub fn cast_affinity(t: CastType) -> Affinity {
    match t {
        CastType::Integer | CastType::Int => Affinity::Integer,
        CastType::Real => Affinity::Real,
        CastType::Text => Affinity::Text,
        CastType::Numeric => Affinity::Numeric,
    }
}

/// Affinity carried by an expression; BLOB stands for "none".
pub fn expr_affinity(e: &Expression, scope: &Scope) -> Affinity {
    match e {
        Expression::Column(c) => scope.column(c).map(|c| c.affinity).unwrap_or(Affinity::Blob),
        Expression::Cast { target, .. } => cast_affinity(*target),
        Expression::Collate { operand, .. } => expr_affinity(operand, scope),
        _ => Affinity::Blob,
    }
}

/// Where a comparison's collation comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollationSource {
    Explicit(Collation),
    Column(Collation),
}

pub fn expr_collation(e: &Expression, scope: &Scope) -> Option<CollationSource> {
    match e {
        Expression::Collate { collation, .. } => Some(CollationSource::Explicit(*collation)),
        Expression::Column(c) => scope.column(c).and_then(|c| c.collation).map(CollationSource::Column),
        Expression::Cast { operand, .. } | Expression::Unary { op: UnaryOp::Plus, operand } => {
            expr_collation(operand, scope)
        }
        _ => None,
    }
}

/// Explicit collations win (left first), then column collations (left
/// first), then BINARY.
pub fn comparison_collation(left: &Expression, right: &Expression, scope: &Scope) -> Collation {
    let l = expr_collation(left, scope);
    let r = expr_collation(right, scope);
    match (l, r) {
        (Some(CollationSource::Explicit(c)), _) => c,
        (_, Some(CollationSource::Explicit(c))) => c,
        (Some(CollationSource::Column(c)), _) => c,
        (_, Some(CollationSource::Column(c))) => c,
        _ => Collation::Binary,
    }
}

/// Collation used by `x IN (...)`: that of `x` alone.
pub fn in_collation(value: &Expression, scope: &Scope) -> Collation {
    match expr_collation(value, scope) {
        Some(CollationSource::Explicit(c) | CollationSource::Column(c)) => c,
        None => Collation::Binary,
    }
}

/// Which operand (if any) an affinity-aware comparison converts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coercion {
    None,
    NumericLeft,
    NumericRight,
    TextLeft,
    TextRight,
}

pub fn comparison_coercion(left: Affinity, right: Affinity) -> Coercion {
    if left.is_numeric() && !right.is_numeric() {
        Coercion::NumericRight
    } else if right.is_numeric() && !left.is_numeric() {
        Coercion::NumericLeft
    } else if left == Affinity::Text && right == Affinity::Blob {
        Coercion::TextRight
    } else if right == Affinity::Text && left == Affinity::Blob {
        Coercion::TextLeft
    } else {
        Coercion::None
    }
}

pub fn apply_coercion(c: Coercion, l: SqlValue, r: SqlValue) -> (SqlValue, SqlValue) {
    match c {
        Coercion::None => (l, r),
        Coercion::NumericLeft => (apply_affinity(l, Affinity::Numeric), r),
        Coercion::NumericRight => (l, apply_affinity(r, Affinity::Numeric)),
        Coercion::TextLeft => (apply_affinity(l, Affinity::Text), r),
        Coercion::TextRight => (l, apply_affinity(r, Affinity::Text)),
    }
}

pub fn bool_value(t: Option<bool>, dialect: &DialectProfile) -> SqlValue {
    match t {
        None => SqlValue::Null,
        Some(b) if dialect.has_native_boolean => SqlValue::Boolean(b),
        Some(b) => SqlValue::Integer(b as i64),
    }
}

pub fn and3(a: Option<bool>, b: Option<bool>) -> Option<bool> {
    match (a, b) {
        (Some(false), _) | (_, Some(false)) => Some(false),
        (Some(true), Some(true)) => Some(true),
        _ => None,
    }
}

pub fn or3(a: Option<bool>, b: Option<bool>) -> Option<bool> {
    match (a, b) {
        (Some(true), _) | (_, Some(true)) => Some(true),
        (Some(false), Some(false)) => Some(false),
        _ => None,
    }
}

/// Evaluates `expr` against one row whose layout is described by `scope`.
pub fn eval_expression(
    expr: &Expression,
    scope: &Scope,
    row: &[SqlValue],
    dialect: &DialectProfile,
) -> Result<SqlValue, EvalError> {
    Evaluator { scope, row, dialect }.eval(expr)
}

/// Evaluates an expression that references no columns.
pub fn eval_constant(expr: &Expression, dialect: &DialectProfile) -> Result<SqlValue, EvalError> {
    eval_expression(expr, &Scope::empty(), &[], dialect)
}

struct Evaluator<'a> {
    scope: &'a Scope,
    row: &'a [SqlValue],
    dialect: &'a DialectProfile,
}

impl Evaluator<'_> {
    fn boolean(&self, t: Option<bool>) -> SqlValue {
        bool_value(t, self.dialect)
    }

    fn eval(&self, e: &Expression) -> Result<SqlValue, EvalError> {
        match e {
            Expression::Constant(v) => Ok(v.clone().normalize_bool(self.dialect.has_native_boolean)),
            Expression::Column(c) => {
                let i = self.scope.resolve(c)?;
                Ok(self.row.get(i).cloned().unwrap_or(SqlValue::Null))
            }
            Expression::Unary { op, operand } => {
                let v = self.eval(operand)?;
                match op {
                    UnaryOp::Not => Ok(self.boolean(v.truth().map(|b| !b))),
                    UnaryOp::Plus => Ok(v),
                    UnaryOp::Neg => match v.to_number() {
                        None => Ok(SqlValue::Null),
                        Some(Number::Int(i)) => {
                            i.checked_neg().map(SqlValue::Integer).ok_or(EvalError::IntegerOverflow)
                        }
                        Some(Number::Real(r)) => Ok(SqlValue::real(-r)),
                    },
                }
            }
            Expression::Binary { op, left, right } => {
                let l = self.eval(left)?;
                let r = self.eval(right)?;
                self.binary(*op, left, right, l, r)
            }
            Expression::Between { symmetric, value, low, high } => {
                let v = self.eval(value)?;
                let lo = self.eval(low)?;
                let hi = self.eval(high)?;
                let forward = and3(
                    self.compare(BinaryOp::Ge, value, low, v.clone(), lo.clone()),
                    self.compare(BinaryOp::Le, value, high, v.clone(), hi.clone()),
                );
                let t = if *symmetric {
                    let backward = and3(
                        self.compare(BinaryOp::Ge, value, high, v.clone(), hi),
                        self.compare(BinaryOp::Le, value, low, v, lo),
                    );
                    or3(forward, backward)
                } else {
                    forward
                };
                Ok(self.boolean(t))
            }
            Expression::InList { value, candidates } => {
                let v = self.eval(value)?;
                let cands = candidates.iter().map(|c| self.eval(c)).collect::<Result<Vec<_>, _>>()?;
                if v.is_null() {
                    return Ok(SqlValue::Null);
                }
                let coll = in_collation(value, self.scope);
                let mut saw_null = false;
                for c in &cands {
                    if c.is_null() {
                        saw_null = true;
                    } else if compare_values(&v, c, coll) == Ordering::Equal {
                        return Ok(self.boolean(Some(true)));
                    }
                }
                Ok(self.boolean(if saw_null { None } else { Some(false) }))
            }
            Expression::Function { name, args } => {
                let vals = args.iter().map(|a| self.eval(a)).collect::<Result<Vec<_>, _>>()?;
                call_function(name, &vals)
            }
            Expression::Cast { operand, target } => Ok(cast_value(self.eval(operand)?, *target)),
            Expression::Collate { operand, .. } => self.eval(operand),
            Expression::PostfixIs { operand, test } => {
                let v = self.eval(operand)?;
                let b = match test {
                    IsTest::True => v.truth() == Some(true),
                    IsTest::False => v.truth() == Some(false),
                    IsTest::Null => v.is_null(),
                    IsTest::NotNull => !v.is_null(),
                };
                Ok(self.boolean(Some(b)))
            }
        }
    }

    fn compare(&self, op: BinaryOp, le: &Expression, re: &Expression, l: SqlValue, r: SqlValue) -> Option<bool> {
        compare_op(op, le, re, l, r, self.scope, self.dialect)
    }

    fn binary(
        &self,
        op: BinaryOp,
        le: &Expression,
        re: &Expression,
        l: SqlValue,
        r: SqlValue,
    ) -> Result<SqlValue, EvalError> {
        match op {
            BinaryOp::And => Ok(self.boolean(and3(l.truth(), r.truth()))),
            BinaryOp::Or => Ok(self.boolean(or3(l.truth(), r.truth()))),
            _ if op.is_comparison() => Ok(self.boolean(self.compare(op, le, re, l, r))),
            _ if op.is_arithmetic() => arithmetic(op, &l, &r, self.dialect),
            BinaryOp::Concat => match (l.to_text(), r.to_text()) {
                (Some(a), Some(b)) => Ok(SqlValue::Text(a + &b)),
                _ => Ok(SqlValue::Null),
            },
            BinaryOp::Like => Ok(self.boolean(match (l.to_text(), r.to_text()) {
                (Some(s), Some(p)) => Some(like_match(&s, &p)),
                _ => None,
            })),
            BinaryOp::Glob => Ok(self.boolean(match (l.to_text(), r.to_text()) {
                (Some(s), Some(p)) => Some(glob_match(&s, &p)),
                _ => None,
            })),
            _ => unreachable!("operator {op:?} handled above"),
        }
    }
}

/// Evaluates a comparison operator on already-computed operand values.
pub fn compare_op(
    op: BinaryOp,
    le: &Expression,
    re: &Expression,
    l: SqlValue,
    r: SqlValue,
    scope: &Scope,
    dialect: &DialectProfile,
) -> Option<bool> {
    if l.is_null() || r.is_null() {
        return None;
    }
    let (l, r) = if dialect.applies_column_affinity {
        let c = comparison_coercion(expr_affinity(le, scope), expr_affinity(re, scope));
        apply_coercion(c, l, r)
    } else {
        (l, r)
    };
    let ord = compare_values(&l, &r, comparison_collation(le, re, scope));
    Some(match op {
        BinaryOp::Eq => ord == Ordering::Equal,
        BinaryOp::Ne => ord != Ordering::Equal,
        BinaryOp::Lt => ord == Ordering::Less,
        BinaryOp::Le => ord != Ordering::Greater,
        BinaryOp::Gt => ord == Ordering::Greater,
        BinaryOp::Ge => ord != Ordering::Less,
        _ => unreachable!("not a comparison: {op:?}"),
    })
}

fn arithmetic(op: BinaryOp, l: &SqlValue, r: &SqlValue, dialect: &DialectProfile) -> Result<SqlValue, EvalError> {
    let (Some(a), Some(b)) = (l.to_number(), r.to_number()) else {
        return Ok(SqlValue::Null);
    };
    let zero_div = || {
        if dialect.div_by_zero_yields_null {
            Ok(SqlValue::Null)
        } else {
            Err(EvalError::DivisionByZero)
        }
    };
    match (a, b) {
        (Number::Int(x), Number::Int(y)) => {
            let res = match op {
                BinaryOp::Add => x.checked_add(y),
                BinaryOp::Sub => x.checked_sub(y),
                BinaryOp::Mul => x.checked_mul(y),
                BinaryOp::Div => {
                    if y == 0 {
                        return zero_div();
                    }
                    x.checked_div(y)
                }
                BinaryOp::Rem => {
                    if y == 0 {
                        return zero_div();
                    }
                    x.checked_rem(y)
                }
                _ => unreachable!(),
            };
            res.map(SqlValue::Integer).ok_or(EvalError::IntegerOverflow)
        }
        _ => {
            let (x, y) = (a.as_f64(), b.as_f64());
            let res = match op {
                BinaryOp::Add => x + y,
                BinaryOp::Sub => x - y,
                BinaryOp::Mul => x * y,
                BinaryOp::Div | BinaryOp::Rem if y == 0.0 => return zero_div(),
                BinaryOp::Div => x / y,
                BinaryOp::Rem => x % y,
                _ => unreachable!(),
            };
            Ok(SqlValue::real(res))
        }
    }
}

fn call_function(name: &str, args: &[SqlValue]) -> Result<SqlValue, EvalError> {
    let upper = name.to_ascii_uppercase();
    let one = |args: &[SqlValue]| -> Result<SqlValue, EvalError> {
        match args {
            [a] => Ok(a.clone()),
            _ => Err(EvalError::WrongArgCount(upper.clone())),
        }
    };
    match upper.as_str() {
        "LENGTH" => Ok(match one(args)? {
            SqlValue::Null => SqlValue::Null,
            v => SqlValue::Integer(v.to_text().unwrap_or_default().chars().count() as i64),
        }),
        "ABS" => match one(args)?.to_number() {
            None => Ok(SqlValue::Null),
            Some(Number::Int(i)) => i.checked_abs().map(SqlValue::Integer).ok_or(EvalError::IntegerOverflow),
            Some(Number::Real(r)) => Ok(SqlValue::Real(r.abs())),
        },
        "LOWER" => Ok(one(args)?.to_text().map(|s| SqlValue::Text(s.to_ascii_lowercase())).unwrap_or(SqlValue::Null)),
        "UPPER" => Ok(one(args)?.to_text().map(|s| SqlValue::Text(s.to_ascii_uppercase())).unwrap_or(SqlValue::Null)),
        _ => Err(EvalError::NoSuchFunction(upper)),
    }
}

fn real_to_int_saturating(r: f64) -> i64 {
    if r >= i64::MAX as f64 {
        i64::MAX
    } else if r <= i64::MIN as f64 {
        i64::MIN
    } else {
        r as i64
    }
}

pub fn cast_value(v: SqlValue, target: CastType) -> SqlValue {
    if v.is_null() {
        return SqlValue::Null;
    }
    match target {
        CastType::Integer | CastType::Int => match v {
            SqlValue::Text(s) => match numeric_prefix(&s).0 {
                Number::Int(i) => SqlValue::Integer(i),
                Number::Real(r) => SqlValue::Integer(real_to_int_saturating(r)),
            },
            SqlValue::Real(r) => SqlValue::Integer(real_to_int_saturating(r)),
            SqlValue::Boolean(b) => SqlValue::Integer(b as i64),
            v => v,
        },
        CastType::Real => SqlValue::real(v.to_number().map(Number::as_f64).unwrap_or(0.0)),
        CastType::Text => SqlValue::Text(v.to_text().unwrap_or_default()),
        CastType::Numeric => {
            let n = match &v {
                SqlValue::Text(s) => numeric_prefix(s).0,
                other => other.to_number().unwrap_or(Number::Int(0)),
            };
            match n {
                Number::Real(r) if r.fract() == 0.0 && r.abs() < 9.2e18 => SqlValue::Integer(r as i64),
                n => SqlValue::from(n),
            }
        }
    }
}

/// `LIKE`: `%` matches any run, `_` one character; ASCII case-insensitive.
pub fn like_match(s: &str, pattern: &str) -> bool {
    let s: Vec<char> = s.chars().map(|c| c.to_ascii_lowercase()).collect();
    let p: Vec<char> = pattern.chars().map(|c| c.to_ascii_lowercase()).collect();
    let (mut si, mut pi) = (0, 0);
    let mut backtrack: Option<(usize, usize)> = None;
    while si < s.len() {
        if pi < p.len() && p[pi] == '%' {
            backtrack = Some((pi, si));
            pi += 1;
        } else if pi < p.len() && (p[pi] == '_' || p[pi] == s[si]) {
            pi += 1;
            si += 1;
        } else if let Some((bp, bs)) = backtrack {
            pi = bp + 1;
            si = bs + 1;
            backtrack = Some((bp, bs + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|c| *c == '%')
}

/// `GLOB`: `*`, `?` and `[...]` classes; case-sensitive.
pub fn glob_match(s: &str, pattern: &str) -> bool {
    let s: Vec<char> = s.chars().collect();
    let p: Vec<char> = pattern.chars().collect();
    glob_at(&s, &p)
}

/// Parses a character class starting after `[`. Returns (matched, length of
/// the class body including the closing `]`), or `None` if unterminated.
fn glob_class(p: &[char], c: char) -> Option<(bool, usize)> {
    let mut i = 0;
    let negate = p.first() == Some(&'^');
    if negate {
        i += 1;
    }
    let mut matched = false;
    let mut first = true;
    while i < p.len() {
        if p[i] == ']' && !first {
            return Some((matched != negate, i + 1));
        }
        first = false;
        if i + 2 < p.len() && p[i + 1] == '-' && p[i + 2] != ']' {
            if p[i] <= c && c <= p[i + 2] {
                matched = true;
            }
            i += 3;
        } else {
            if p[i] == c {
                matched = true;
            }
            i += 1;
        }
    }
    None
}

fn glob_at(s: &[char], p: &[char]) -> bool {
    match p.first() {
        None => s.is_empty(),
        Some('*') => {
            let rest = &p[1..];
            (0..=s.len()).any(|k| glob_at(&s[k..], rest))
        }
        Some('?') => !s.is_empty() && glob_at(&s[1..], &p[1..]),
        Some('[') => {
            let Some(&c) = s.first() else { return false };
            match glob_class(&p[1..], c) {
                Some((true, len)) => glob_at(&s[1..], &p[1 + len..]),
                _ => false,
            }
        }
        Some(&lit) => s.first() == Some(&lit) && glob_at(&s[1..], &p[1..]),
    }
}
