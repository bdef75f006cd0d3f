//! Deterministic SQL text for statements and expressions.
//!
//! Every compound expression is wrapped in its own parentheses, so the text
//! never depends on a dialect's operator precedence.

use std::fmt::Write;

use thiserror::Error;

use crate::ast::{Direction, Expression, JoinKind, SelectItem, SelectList, SelectQuery, Statement, TableRef, UnaryOp};
use crate::dialect::DialectProfile;
use crate::schema::{Collation, ColumnDef, IndexDef, TableDef};
use crate::value::SqlValue;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("unsupported feature for dialect {dialect}: {feature}")]
    UnsupportedFeature { dialect: String, feature: String },
}

type Result<T> = std::result::Result<T, RenderError>;

/// Renders one `;`-terminated statement.
pub fn render_statement(stmt: &Statement, dialect: &DialectProfile) -> Result<String> {
    let mut r = Renderer { dialect, out: String::new() };
    r.statement(stmt)?;
    r.out.push(';');
    Ok(r.out)
}

pub fn render_expression(expr: &Expression, dialect: &DialectProfile) -> Result<String> {
    let mut r = Renderer { dialect, out: String::new() };
    r.expr(expr)?;
    Ok(r.out)
}

pub fn render_query(q: &SelectQuery, dialect: &DialectProfile) -> Result<String> {
    render_statement(&Statement::Select(q.clone()), dialect)
}

pub fn render_value(v: &SqlValue, dialect: &DialectProfile) -> String {
    match v {
        SqlValue::Null => "NULL".into(),
        SqlValue::Integer(i) => i.to_string(),
        SqlValue::Real(r) if r.is_finite() => {
            let s = format!("{r:?}");
            if s.contains(['.', 'e', 'E']) {
                s
            } else {
                format!("{s}.0")
            }
        }
        // Out-of-range literals parse as infinities.
        SqlValue::Real(r) => {
            if *r > 0.0 {
                "1e999".into()
            } else {
                "-1e999".into()
            }
        }
        SqlValue::Text(s) => format!("'{}'", s.replace('\'', "''")),
        SqlValue::Boolean(b) if dialect.has_native_boolean => {
            if *b {
                "TRUE".into()
            } else {
                "FALSE".into()
            }
        }
        SqlValue::Boolean(b) => (*b as i64).to_string(),
    }
}

struct Renderer<'a> {
    dialect: &'a DialectProfile,
    out: String,
}

impl Renderer<'_> {
    fn unsupported(&self, feature: &str) -> RenderError {
        RenderError::UnsupportedFeature { dialect: self.dialect.name.clone(), feature: feature.into() }
    }

    fn check_collation(&self, c: Collation) -> Result<()> {
        if c != Collation::Binary && !self.dialect.has_collate_nocase {
            return Err(self.unsupported(&format!("COLLATE {}", c.sql_name())));
        }
        Ok(())
    }

    fn statement(&mut self, stmt: &Statement) -> Result<()> {
        match stmt {
            Statement::CreateTable(t) => self.create_table(t),
            Statement::CreateIndex(ix) => self.create_index(ix),
            Statement::Insert { table, columns, rows } => {
                write!(self.out, "INSERT INTO {table}").unwrap();
                if !columns.is_empty() {
                    write!(self.out, "({})", columns.join(", ")).unwrap();
                }
                self.out.push_str(" VALUES ");
                for (i, row) in rows.iter().enumerate() {
                    if i > 0 {
                        self.out.push_str(", ");
                    }
                    let vals: Vec<String> = row.iter().map(|v| render_value(v, self.dialect)).collect();
                    write!(self.out, "({})", vals.join(", ")).unwrap();
                }
                Ok(())
            }
            Statement::Update { table, assignments, predicate } => {
                write!(self.out, "UPDATE {table} SET ").unwrap();
                for (i, (col, e)) in assignments.iter().enumerate() {
                    if i > 0 {
                        self.out.push_str(", ");
                    }
                    write!(self.out, "{col} = ").unwrap();
                    self.expr(e)?;
                }
                if let Some(p) = predicate {
                    self.out.push_str(" WHERE ");
                    self.expr(p)?;
                }
                Ok(())
            }
            Statement::Delete { table, predicate } => {
                write!(self.out, "DELETE FROM {table}").unwrap();
                if let Some(p) = predicate {
                    self.out.push_str(" WHERE ");
                    self.expr(p)?;
                }
                Ok(())
            }
            Statement::Select(q) => self.select(q),
        }
    }

    fn column_def(&mut self, c: &ColumnDef) -> Result<()> {
        self.out.push_str(&c.name);
        if !c.declared_type.is_empty() {
            write!(self.out, " {}", c.declared_type).unwrap();
        }
        if c.primary_key {
            self.out.push_str(" PRIMARY KEY");
        }
        if c.unique {
            self.out.push_str(" UNIQUE");
        }
        if let Some(coll) = c.collation {
            self.check_collation(coll)?;
            write!(self.out, " COLLATE {}", coll.sql_name()).unwrap();
        }
        Ok(())
    }

    fn create_table(&mut self, t: &TableDef) -> Result<()> {
        write!(self.out, "CREATE TABLE {}(", t.name).unwrap();
        for (i, c) in t.columns.iter().enumerate() {
            if i > 0 {
                self.out.push_str(", ");
            }
            self.column_def(c)?;
        }
        self.out.push(')');
        Ok(())
    }

    fn create_index(&mut self, ix: &IndexDef) -> Result<()> {
        let unique = if ix.unique { "UNIQUE " } else { "" };
        write!(self.out, "CREATE {unique}INDEX {} ON {}(", ix.name, ix.table).unwrap();
        for (i, k) in ix.keys.iter().enumerate() {
            if i > 0 {
                self.out.push_str(", ");
            }
            // Index keys are written unqualified.
            match k {
                Expression::Column(c) => self.out.push_str(&c.column),
                other => self.expr(other)?,
            }
        }
        self.out.push(')');
        if let Some(p) = &ix.partial_predicate {
            if !self.dialect.has_partial_indexes {
                return Err(self.unsupported("partial index"));
            }
            self.out.push_str(" WHERE ");
            self.expr(p)?;
        }
        Ok(())
    }

    fn table_ref(&mut self, t: &TableRef) -> Result<()> {
        match t {
            TableRef::Named(n) => self.out.push_str(n),
            TableRef::Derived { query, alias } => {
                self.out.push('(');
                self.select(query)?;
                self.out.push(')');
                match alias {
                    Some(a) => write!(self.out, " AS {a}").unwrap(),
                    None if self.dialect.derived_table_needs_alias => self.out.push_str(" AS sub"),
                    None => {}
                }
            }
        }
        Ok(())
    }

    fn select(&mut self, q: &SelectQuery) -> Result<()> {
        self.out.push_str("SELECT ");
        if q.distinct {
            self.out.push_str("DISTINCT ");
        }
        match &q.select_list {
            SelectList::Star => self.out.push('*'),
            SelectList::Items(items) => {
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        self.out.push_str(", ");
                    }
                    match item {
                        SelectItem::Expr { expr, alias } => {
                            self.expr(expr)?;
                            if let Some(a) = alias {
                                write!(self.out, " AS {a}").unwrap();
                            }
                        }
                        SelectItem::CountStar => self.out.push_str("COUNT(*)"),
                        SelectItem::Sum { expr, alias } => {
                            self.out.push_str("SUM(");
                            self.expr(expr)?;
                            self.out.push(')');
                            if let Some(a) = alias {
                                write!(self.out, " AS {a}").unwrap();
                            }
                        }
                    }
                }
            }
        }
        if !q.from.is_empty() {
            self.out.push_str(" FROM ");
            for (i, t) in q.from.iter().enumerate() {
                if i > 0 {
                    self.out.push_str(", ");
                }
                self.table_ref(t)?;
            }
        }
        for j in &q.joins {
            self.out.push_str(match j.kind {
                JoinKind::Inner => " JOIN ",
                JoinKind::Left => " LEFT JOIN ",
                JoinKind::Cross => " CROSS JOIN ",
            });
            self.table_ref(&j.right)?;
            if let Some(on) = &j.on {
                self.out.push_str(" ON ");
                self.expr(on)?;
            }
        }
        if let Some(w) = &q.where_clause {
            self.out.push_str(" WHERE ");
            self.expr(w)?;
        }
        if !q.group_by.is_empty() {
            self.out.push_str(" GROUP BY ");
            for (i, g) in q.group_by.iter().enumerate() {
                if i > 0 {
                    self.out.push_str(", ");
                }
                self.expr(g)?;
            }
        }
        if !q.order_by.is_empty() {
            self.out.push_str(" ORDER BY ");
            for (i, o) in q.order_by.iter().enumerate() {
                if i > 0 {
                    self.out.push_str(", ");
                }
                self.expr(&o.expr)?;
                self.out.push_str(match o.direction {
                    Direction::Asc => " ASC",
                    Direction::Desc => " DESC",
                });
            }
        }
        Ok(())
    }

    fn expr(&mut self, e: &Expression) -> Result<()> {
        match e {
            Expression::Constant(v) => self.out.push_str(&render_value(v, self.dialect)),
            Expression::Column(c) => write!(self.out, "{c}").unwrap(),
            Expression::Unary { op, operand } => {
                // The space after '-' keeps "- -1" from turning into a comment.
                self.out.push_str(match op {
                    UnaryOp::Not => "(NOT ",
                    UnaryOp::Neg => "(- ",
                    UnaryOp::Plus => "(+ ",
                });
                self.expr(operand)?;
                self.out.push(')');
            }
            Expression::Binary { op, left, right } => {
                if *op == crate::ast::BinaryOp::Glob && !self.dialect.has_glob {
                    return Err(self.unsupported("GLOB"));
                }
                self.out.push('(');
                self.expr(left)?;
                write!(self.out, " {} ", op.sql()).unwrap();
                self.expr(right)?;
                self.out.push(')');
            }
            Expression::Between { symmetric, value, low, high } => {
                if *symmetric && !self.dialect.has_between_symmetric {
                    return Err(self.unsupported("BETWEEN SYMMETRIC"));
                }
                self.out.push('(');
                self.expr(value)?;
                self.out.push_str(if *symmetric { " BETWEEN SYMMETRIC " } else { " BETWEEN " });
                self.expr(low)?;
                self.out.push_str(" AND ");
                self.expr(high)?;
                self.out.push(')');
            }
            Expression::InList { value, candidates } => {
                self.out.push('(');
                self.expr(value)?;
                self.out.push_str(" IN (");
                for (i, c) in candidates.iter().enumerate() {
                    if i > 0 {
                        self.out.push_str(", ");
                    }
                    self.expr(c)?;
                }
                self.out.push_str("))");
            }
            Expression::Function { name, args } => {
                write!(self.out, "{name}(").unwrap();
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        self.out.push_str(", ");
                    }
                    self.expr(a)?;
                }
                self.out.push(')');
            }
            Expression::Cast { operand, target } => {
                self.out.push_str("CAST(");
                self.expr(operand)?;
                write!(self.out, " AS {})", target.sql()).unwrap();
            }
            Expression::Collate { operand, collation } => {
                self.check_collation(*collation)?;
                self.out.push('(');
                self.expr(operand)?;
                write!(self.out, " COLLATE {})", collation.sql_name()).unwrap();
            }
            Expression::PostfixIs { operand, test } => {
                self.out.push('(');
                self.expr(operand)?;
                write!(self.out, " {})", test.sql()).unwrap();
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{BinaryOp, IsTest};

    fn toy() -> DialectProfile {
        DialectProfile::toy()
    }

    #[test]
    fn null_literal() {
        for d in [DialectProfile::toy(), DialectProfile::sqlite(), DialectProfile::strict()] {
            assert_eq!(render_expression(&Expression::null(), &d).unwrap(), "NULL");
        }
    }

    #[test]
    fn optimized_glob_query() {
        let q = SelectQuery::star(
            &["t0"],
            Some(Expression::binary(BinaryOp::Glob, Expression::col("t0", "c0"), Expression::text("-*"))),
        );
        assert_eq!(render_query(&q, &toy()).unwrap(), "SELECT * FROM t0 WHERE (t0.c0 GLOB '-*');");
    }

    #[test]
    fn quotes_are_doubled() {
        assert_eq!(render_value(&SqlValue::text("it's"), &toy()), "'it''s'");
        assert_eq!(render_value(&SqlValue::text("\n2"), &toy()), "'\n2'");
    }

    #[test]
    fn booleans_follow_dialect() {
        assert_eq!(render_value(&SqlValue::Boolean(true), &toy()), "1");
        assert_eq!(render_value(&SqlValue::Boolean(false), &DialectProfile::strict()), "FALSE");
    }

    #[test]
    fn negation_never_forms_comment() {
        let e = Expression::unary(UnaryOp::Neg, Expression::int(-1));
        assert_eq!(render_expression(&e, &toy()).unwrap(), "(- -1)");
    }

    #[test]
    fn reals_always_look_real() {
        assert_eq!(render_value(&SqlValue::Real(1.0), &toy()), "1.0");
        assert_eq!(render_value(&SqlValue::Real(0.5), &toy()), "0.5");
        assert_eq!(render_value(&SqlValue::Real(1e20), &toy()), "1e20");
    }

    #[test]
    fn unsupported_features_are_rejected() {
        let sym = Expression::between(Expression::int(1), Expression::int(0), Expression::null(), true);
        assert!(render_expression(&sym, &DialectProfile::sqlite()).is_err());
        assert!(render_expression(&sym, &toy()).is_ok());
        let glob = Expression::binary(BinaryOp::Glob, Expression::text("a"), Expression::text("*"));
        assert!(render_expression(&glob, &DialectProfile::strict()).is_err());
    }

    #[test]
    fn ddl_rendering() {
        let t = TableDef::new(
            "t0",
            vec![ColumnDef::new("c0", "").unique(), ColumnDef::new("c1", "INT").collate(Collation::NoCase)],
        );
        assert_eq!(
            render_statement(&Statement::CreateTable(t), &toy()).unwrap(),
            "CREATE TABLE t0(c0 UNIQUE, c1 INT COLLATE NOCASE);"
        );
        let ix = IndexDef {
            name: "i0".into(),
            table: "t0".into(),
            keys: vec![Expression::int(0)],
            unique: false,
            partial_predicate: Some(Expression::binary(
                BinaryOp::Ge,
                Expression::Column(crate::ast::ColumnRef::bare("c0")),
                Expression::Column(crate::ast::ColumnRef::bare("c1")),
            )),
        };
        assert_eq!(
            render_statement(&Statement::CreateIndex(ix), &toy()).unwrap(),
            "CREATE INDEX i0 ON t0(0) WHERE (c0 >= c1);"
        );
    }

    #[test]
    fn postfix_is() {
        let e = Expression::is(Expression::col("t0", "c0"), IsTest::NotNull);
        assert_eq!(render_expression(&e, &toy()).unwrap(), "(t0.c0 IS NOT NULL)");
    }
}
