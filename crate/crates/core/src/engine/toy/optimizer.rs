//! WHERE-clause rewrites and index access selection.
//!
//! Each rule has a sound form; a [`BugInjection`] swaps exactly one rule for
//! a faulty variant.

use std::ops::Bound;

use crate::ast::{BinaryOp, Expression, IsTest};
use crate::dialect::DialectProfile;
use crate::engine::eval::{
    apply_coercion, comparison_coercion, comparison_collation, eval_constant, expr_affinity, expr_collation,
    in_collation, Coercion, CollationSource, Scope,
};
use crate::schema::{Affinity, Collation};
use crate::value::{apply_affinity, numeric_prefix, parse_numeric_text, SortKey, SqlValue};

use super::storage::{IndexEntry, Storage};
use super::BugInjection;

pub struct Rewriter<'a> {
    pub scope: &'a Scope,
    pub dialect: &'a DialectProfile,
    pub injection: Option<BugInjection>,
}

impl Rewriter<'_> {
    fn injected(&self, b: BugInjection) -> bool {
        self.injection == Some(b)
    }

    pub fn rewrite(&self, e: Expression) -> Expression {
        let e = self.fold_constants(e);
        let e = self.fold_null_comparisons(e);
        let e = self.in_to_eq(e);
        self.commute(e)
    }

    fn map_children(e: Expression, f: &mut dyn FnMut(Expression) -> Expression) -> Expression {
        let mut e = e;
        for c in e.children_mut() {
            let taken = std::mem::replace(c, Expression::null());
            *c = f(taken);
        }
        e
    }

    /// Folds column-free subtrees to constants. `CAST` and `COLLATE` roots
    /// are kept because they carry affinity and collation.
    pub fn fold_constants(&self, e: Expression) -> Expression {
        let e = Self::map_children(e, &mut |c| self.fold_constants(c));
        let keeps_metadata = matches!(e, Expression::Cast { .. } | Expression::Collate { .. })
            || expr_collation(&e, self.scope).is_some();
        if matches!(e, Expression::Constant(_)) || keeps_metadata || e.has_columns() {
            return e;
        }
        match eval_constant(&e, self.dialect) {
            Ok(v) => Expression::Constant(v),
            Err(_) => e,
        }
    }

    fn fold_null_comparisons(&self, e: Expression) -> Expression {
        let e = match e {
            Expression::Between { symmetric, value, low, high } if is_null(&low) || is_null(&high) => {
                expand_between(symmetric, *value, *low, *high)
            }
            e => e,
        };
        let e = Self::map_children(e, &mut |c| self.fold_null_comparisons(c));
        match &e {
            Expression::Binary { op, left, right } if op.is_comparison() && (is_null(left) || is_null(right)) => {
                if self.injected(BugInjection::NullFilterAsFalse) {
                    Expression::Constant(SqlValue::Boolean(false).normalize_bool(self.dialect.has_native_boolean))
                } else {
                    Expression::null()
                }
            }
            _ => e,
        }
    }

    /// `x IN (y)` becomes `x = y` when that cannot change the comparison.
    fn in_to_eq(&self, e: Expression) -> Expression {
        let e = Self::map_children(e, &mut |c| self.in_to_eq(c));
        match e {
            Expression::InList { value, mut candidates } if candidates.len() == 1 => {
                let y = candidates.pop().unwrap();
                let no_coercion = !self.dialect.applies_column_affinity
                    || comparison_coercion(expr_affinity(&value, self.scope), expr_affinity(&y, self.scope))
                        == Coercion::None;
                let same_collation = comparison_collation(&value, &y, self.scope) == in_collation(&value, self.scope);
                if same_collation && (no_coercion || self.injected(BugInjection::InToEqAffinity)) {
                    Expression::binary(BinaryOp::Eq, *value, y)
                } else {
                    Expression::InList { value, candidates: vec![y] }
                }
            }
            e => e,
        }
    }

    fn column_order(&self, e: &Expression) -> Option<usize> {
        match e {
            Expression::Column(c) => self.scope.resolve(c).ok(),
            _ => None,
        }
    }

    /// Moves columns to the left of comparisons, ordering column pairs by
    /// their position in the row.
    fn commute(&self, e: Expression) -> Expression {
        let e = Self::map_children(e, &mut |c| self.commute(c));
        let Expression::Binary { op, left, right } = e else { return e };
        let Some(swapped) = op.commuted() else {
            return Expression::Binary { op, left, right };
        };
        let should_swap = match (self.column_order(&left), self.column_order(&right)) {
            (None, Some(_)) => !left.has_columns(),
            (Some(l), Some(r)) => r < l,
            _ => false,
        };
        if !should_swap {
            return Expression::Binary { op, left, right };
        }
        let original = comparison_collation(&left, &right, self.scope);
        let mut new_left = *right;
        let new_right = *left;
        if comparison_collation(&new_left, &new_right, self.scope) != original
            && !self.injected(BugInjection::CommuteDropsCollation)
        {
            new_left = Expression::collate(new_left, original);
        }
        Expression::binary(swapped, new_left, new_right)
    }
}

fn is_null(e: &Expression) -> bool {
    matches!(e, Expression::Constant(SqlValue::Null))
}

fn expand_between(symmetric: bool, v: Expression, lo: Expression, hi: Expression) -> Expression {
    let within = |a: &Expression, b: &Expression| {
        Expression::and(
            Expression::binary(BinaryOp::Ge, v.clone(), a.clone()),
            Expression::binary(BinaryOp::Le, v.clone(), b.clone()),
        )
    };
    if symmetric {
        Expression::or(within(&lo, &hi), within(&hi, &lo))
    } else {
        within(&lo, &hi)
    }
}

/// How the driving table's rows are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Access {
    FullScan,
    IndexRange {
        index: usize,
        /// Position of the key column within the table.
        column: usize,
        lo: Bound<IndexEntry>,
        hi: Bound<IndexEntry>,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Edge {
    key: SortKey,
    inclusive: bool,
}

#[derive(Debug, Clone, Default)]
struct KeyRange {
    lo: Option<Edge>,
    hi: Option<Edge>,
}

impl KeyRange {
    fn raise(&mut self, key: SortKey, inclusive: bool) {
        let tighter = match &self.lo {
            None => true,
            Some(cur) => key > cur.key || (key == cur.key && !inclusive),
        };
        if tighter {
            self.lo = Some(Edge { key, inclusive });
        }
    }

    fn lower(&mut self, key: SortKey, inclusive: bool) {
        let tighter = match &self.hi {
            None => true,
            Some(cur) => key < cur.key || (key == cur.key && !inclusive),
        };
        if tighter {
            self.hi = Some(Edge { key, inclusive });
        }
    }

    fn bounds(&self) -> (Bound<IndexEntry>, Bound<IndexEntry>) {
        let lo = match &self.lo {
            None => Bound::Unbounded,
            Some(Edge { key, inclusive: true }) => Bound::Included((vec![key.clone()], i64::MIN)),
            Some(Edge { key, inclusive: false }) => Bound::Included((vec![key.clone(), SortKey::Top], i64::MIN)),
        };
        let hi = match &self.hi {
            None => Bound::Unbounded,
            Some(Edge { key, inclusive: true }) => Bound::Excluded((vec![key.clone(), SortKey::Top], i64::MIN)),
            Some(Edge { key, inclusive: false }) => Bound::Excluded((vec![key.clone()], i64::MIN)),
        };
        (lo, hi)
    }
}

/// Whether a range is empty, so that `BTreeSet::range` is never handed
/// inverted bounds.
pub fn range_is_empty(lo: &Bound<IndexEntry>, hi: &Bound<IndexEntry>) -> bool {
    match (lo, hi) {
        (Bound::Included(a), Bound::Included(b)) => a > b,
        (Bound::Included(a), Bound::Excluded(b)) => a >= b,
        (Bound::Excluded(a), Bound::Included(b) | Bound::Excluded(b)) => a >= b,
        _ => false,
    }
}

pub struct AccessPlanner<'a> {
    pub storage: &'a Storage,
    pub dialect: &'a DialectProfile,
    pub injection: Option<BugInjection>,
    /// Scope of the whole query.
    pub scope: &'a Scope,
    /// Name of the driving table and the range of its columns in `scope`.
    pub table: &'a str,
    pub columns: std::ops::Range<usize>,
}

enum Usable {
    No,
    /// The conjunct is fully represented by the range.
    Consumed,
    /// The range is a superset; the conjunct stays as a filter.
    Narrowed,
}

impl AccessPlanner<'_> {
    fn injected(&self, b: BugInjection) -> bool {
        self.injection == Some(b)
    }

    /// Chooses an index for the driving table and returns the predicate left
    /// to evaluate per row.
    pub fn plan(&self, predicate: Option<Expression>) -> (Option<Expression>, Access) {
        let Some(pred) = predicate else { return (None, Access::FullScan) };
        let Some(table) = self.storage.table(self.table) else { return (Some(pred), Access::FullScan) };
        let conjuncts: Vec<Expression> = pred.conjuncts().into_iter().cloned().collect();
        for (ix, idx) in self.storage.indexes.iter().enumerate() {
            if !idx.def.table.eq_ignore_ascii_case(self.table) || idx.def.partial_predicate.is_some() {
                continue;
            }
            let Some(column) = idx.leading_column(&table.def) else { continue };
            let mut range = KeyRange::default();
            let mut residual = Vec::new();
            let mut used = false;
            for c in &conjuncts {
                match self.constrain(c, column, idx.collations[0], &mut range) {
                    Usable::No => residual.push(c.clone()),
                    Usable::Consumed => used = true,
                    Usable::Narrowed => {
                        used = true;
                        residual.push(c.clone());
                    }
                }
            }
            if used {
                let (lo, hi) = range.bounds();
                let rest = residual.into_iter().reduce(Expression::and);
                return (rest, Access::IndexRange { index: ix, column, lo, hi });
            }
        }
        (Some(pred), Access::FullScan)
    }

    fn is_key_column(&self, e: &Expression, column: usize) -> bool {
        match e {
            Expression::Column(c) => self.scope.resolve(c).is_ok_and(|i| i == self.columns.start + column),
            _ => false,
        }
    }

    fn constrain(&self, c: &Expression, column: usize, key_coll: Collation, range: &mut KeyRange) -> Usable {
        match c {
            Expression::PostfixIs { operand, test: IsTest::Null } if self.is_key_column(operand, column) => {
                range.raise(SortKey::Null, true);
                range.lower(SortKey::Null, true);
                Usable::Consumed
            }
            Expression::Between { symmetric: false, value, low, high } if self.is_key_column(value, column) => {
                let lo = self.bound(value, low, key_coll);
                let hi = self.bound(value, high, key_coll);
                match (lo, hi) {
                    (Some(lo), Some(hi)) => {
                        apply_comparison(range, BinaryOp::Ge, lo);
                        apply_comparison(range, BinaryOp::Le, hi);
                        Usable::Consumed
                    }
                    _ => Usable::No,
                }
            }
            Expression::Binary { op: op @ (BinaryOp::Like | BinaryOp::Glob), left, right }
                if self.is_key_column(left, column) =>
            {
                self.pattern_range(*op, left, right, key_coll, range)
            }
            Expression::Binary { op, left, right }
                if op.is_comparison() && *op != BinaryOp::Ne && self.is_key_column(left, column) =>
            {
                match self.bound(left, right, key_coll) {
                    Some(b) => {
                        apply_comparison(range, *op, b);
                        Usable::Consumed
                    }
                    None => Usable::No,
                }
            }
            _ => Usable::No,
        }
    }

    /// The key-space image of `rhs` when compared against the key column,
    /// or `None` if the comparison does not follow the index order.
    fn bound(&self, col: &Expression, rhs: &Expression, key_coll: Collation) -> Option<KeyBound> {
        if rhs.has_columns() || comparison_collation(col, rhs, self.scope) != key_coll {
            return None;
        }
        let v = eval_constant(rhs, self.dialect).ok()?;
        if v.is_null() {
            return Some(KeyBound { value: None, lossy: false });
        }
        let coercion = if self.dialect.applies_column_affinity {
            comparison_coercion(expr_affinity(col, self.scope), expr_affinity(rhs, self.scope))
        } else {
            Coercion::None
        };
        let (value, lossy) = match coercion {
            Coercion::NumericLeft | Coercion::TextLeft => return None,
            Coercion::NumericRight => match &v {
                SqlValue::Text(s) if self.injected(BugInjection::StringRangeBound) => unskipped_numeric(s),
                _ => (apply_affinity(v, Affinity::Numeric), false),
            },
            c => (apply_coercion(c, SqlValue::Null, v).1, false),
        };
        Some(KeyBound { value: Some(SortKey::new(&value, key_coll)), lossy })
    }

    fn pattern_range(
        &self,
        op: BinaryOp,
        col: &Expression,
        pattern: &Expression,
        key_coll: Collation,
        range: &mut KeyRange,
    ) -> Usable {
        if pattern.has_columns() {
            return Usable::No;
        }
        let text_affinity = expr_affinity(col, self.scope) == Affinity::Text;
        if !text_affinity && !self.injected(BugInjection::LikeRangeSkip) {
            return Usable::No;
        }
        let required = if op == BinaryOp::Glob { Collation::Binary } else { Collation::NoCase };
        if key_coll != required {
            return Usable::No;
        }
        let Some(p) = eval_constant(pattern, self.dialect).ok().and_then(|v| v.to_text()) else {
            return Usable::No;
        };
        let prefix: String = if op == BinaryOp::Glob {
            p.chars().take_while(|c| !matches!(c, '*' | '?' | '[')).collect()
        } else {
            p.chars().take_while(|c| !matches!(c, '%' | '_')).map(|c| c.to_ascii_lowercase()).collect()
        };
        if prefix.is_empty() {
            return Usable::No;
        }
        range.raise(SortKey::Text(prefix.clone()), true);
        if let Some(next) = successor(&prefix) {
            range.lower(SortKey::Text(next), false);
        }
        Usable::Narrowed
    }
}

struct KeyBound {
    /// `None` when the bound is NULL, which no row satisfies.
    value: Option<SortKey>,
    /// The faulty conversion lost information; the range is widened.
    lossy: bool,
}

fn apply_comparison(range: &mut KeyRange, op: BinaryOp, b: KeyBound) {
    let Some(k) = b.value else {
        // Nothing compares true against NULL: make the range empty.
        range.raise(SortKey::Top, true);
        range.lower(SortKey::Null, false);
        return;
    };
    range.raise(SortKey::Null, false);
    let op = match (op, b.lossy) {
        (BinaryOp::Lt, true) => BinaryOp::Le,
        (BinaryOp::Gt, true) => BinaryOp::Ge,
        (op, _) => op,
    };
    match op {
        BinaryOp::Eq => {
            range.raise(k.clone(), true);
            range.lower(k, true);
        }
        BinaryOp::Lt => range.lower(k, false),
        BinaryOp::Le => range.lower(k, true),
        BinaryOp::Gt => range.raise(k, false),
        BinaryOp::Ge => range.raise(k, true),
        _ => unreachable!(),
    }
}

/// Reads a number from the very first byte, without skipping whitespace,
/// and falls back to 0. Reports whether the text was not a clean number.
fn unskipped_numeric(s: &str) -> (SqlValue, bool) {
    let clean = !s.starts_with(|c: char| c.is_ascii_whitespace()) && parse_numeric_text(s).is_some();
    if clean {
        return (apply_affinity(SqlValue::text(s), Affinity::Numeric), false);
    }
    if s.starts_with(|c: char| c.is_ascii_whitespace()) {
        return (SqlValue::Integer(0), true);
    }
    (SqlValue::from(numeric_prefix(s).0), true)
}

fn successor(prefix: &str) -> Option<String> {
    let mut chars: Vec<char> = prefix.chars().collect();
    let last = chars.pop()?;
    let next = char::from_u32(last as u32 + 1)?;
    chars.push(next);
    Some(chars.into_iter().collect())
}

/// Collation carried by an expression on its own.
pub fn own_collation(e: &Expression, scope: &Scope) -> Option<Collation> {
    match expr_collation(e, scope) {
        Some(CollationSource::Explicit(c) | CollationSource::Column(c)) => Some(c),
        None => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::eval::ScopeColumn;

    fn scope() -> Scope {
        Scope {
            columns: vec![
                ScopeColumn {
                    table: "t0".into(),
                    name: "c0".into(),
                    affinity: Affinity::Blob,
                    collation: Some(Collation::NoCase),
                },
                ScopeColumn {
                    table: "t0".into(),
                    name: "c1".into(),
                    affinity: Affinity::Blob,
                    collation: Some(Collation::Binary),
                },
            ],
        }
    }

    fn rewriter(scope: &Scope, injection: Option<BugInjection>) -> Rewriter<'_> {
        Rewriter { scope, dialect: Box::leak(Box::new(DialectProfile::toy())), injection }
    }

    #[test]
    fn commute_preserves_collation() {
        let s = scope();
        let e = Expression::binary(BinaryOp::Le, Expression::col("t0", "c1"), Expression::col("t0", "c0"));
        let sound = rewriter(&s, None).rewrite(e.clone());
        assert_eq!(
            sound,
            Expression::binary(
                BinaryOp::Ge,
                Expression::collate(Expression::col("t0", "c0"), Collation::Binary),
                Expression::col("t0", "c1")
            )
        );
        let buggy = rewriter(&s, Some(BugInjection::CommuteDropsCollation)).rewrite(e);
        assert_eq!(buggy, Expression::binary(BinaryOp::Ge, Expression::col("t0", "c0"), Expression::col("t0", "c1")));
    }

    #[test]
    fn constants_move_right() {
        let s = scope();
        let e = Expression::binary(BinaryOp::Lt, Expression::int(3), Expression::col("t0", "c1"));
        let out = rewriter(&s, None).rewrite(e);
        assert_eq!(out, Expression::binary(BinaryOp::Gt, Expression::col("t0", "c1"), Expression::int(3)));
    }

    #[test]
    fn folding_keeps_cast_and_collate() {
        let s = scope();
        let e = Expression::collate(
            Expression::binary(BinaryOp::Add, Expression::int(1), Expression::int(2)),
            Collation::NoCase,
        );
        let out = rewriter(&s, None).fold_constants(e);
        assert_eq!(out, Expression::collate(Expression::int(3), Collation::NoCase));
    }

    #[test]
    fn folding_skips_errors() {
        let s = scope();
        let e = Expression::binary(BinaryOp::Mul, Expression::int(i64::MAX), Expression::int(2));
        assert_eq!(rewriter(&s, None).fold_constants(e.clone()), e);
    }

    #[test]
    fn null_comparison_folding() {
        let s = scope();
        let e = Expression::not(Expression::binary(BinaryOp::Eq, Expression::col("t0", "c1"), Expression::null()));
        assert_eq!(rewriter(&s, None).rewrite(e.clone()), Expression::not(Expression::null()));
        assert_eq!(rewriter(&s, Some(BugInjection::NullFilterAsFalse)).rewrite(e), Expression::not(Expression::int(0)));
    }

    #[test]
    fn range_emptiness() {
        let a = (vec![SortKey::Num(crate::value::Number::Int(2))], i64::MIN);
        let b = (vec![SortKey::Num(crate::value::Number::Int(1))], i64::MIN);
        assert!(range_is_empty(&Bound::Included(a.clone()), &Bound::Excluded(b.clone())));
        assert!(!range_is_empty(&Bound::Included(b), &Bound::Excluded(a)));
    }

    #[test]
    fn unskipped_parse() {
        assert_eq!(unskipped_numeric("\n2"), (SqlValue::Integer(0), true));
        assert_eq!(unskipped_numeric("12"), (SqlValue::Integer(12), false));
        assert_eq!(unskipped_numeric("12ab"), (SqlValue::Integer(12), true));
    }
}
