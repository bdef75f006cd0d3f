//! Row storage and ordered indexes.

use std::collections::BTreeSet;

use crate::ast::{Expression, Statement};
use crate::dialect::DialectProfile;
use crate::engine::eval::{eval_expression, expr_collation, CollationSource, EvalError, Scope, ScopeColumn};
use crate::schema::{Collation, IndexDef, TableDef};
use crate::value::{apply_affinity, SortKey, SqlValue};

#[derive(Debug, Clone)]
pub struct Row {
    pub rowid: i64,
    pub values: Vec<SqlValue>,
}

#[derive(Debug, Clone)]
pub struct StoredTable {
    pub def: TableDef,
    pub rows: Vec<Row>,
}

impl StoredTable {
    pub fn scope(&self) -> Scope {
        table_scope(&self.def)
    }
}

pub fn table_scope(def: &TableDef) -> Scope {
    Scope {
        columns: def
            .columns
            .iter()
            .map(|c| ScopeColumn {
                table: def.name.clone(),
                name: c.name.clone(),
                affinity: c.affinity(),
                collation: Some(c.effective_collation()),
            })
            .collect(),
    }
}

pub type IndexEntry = (Vec<SortKey>, i64);

#[derive(Debug, Clone)]
pub struct StoredIndex {
    pub def: IndexDef,
    /// Created implicitly for a UNIQUE or PRIMARY KEY column.
    pub automatic: bool,
    pub collations: Vec<Collation>,
    pub entries: BTreeSet<IndexEntry>,
}

impl StoredIndex {
    /// Position of the leading key column in its table, if the leading key
    /// is a plain column reference.
    pub fn leading_column(&self, table: &TableDef) -> Option<usize> {
        match self.def.keys.first()? {
            Expression::Column(c) => table.column_index(&c.column),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Storage {
    pub tables: Vec<StoredTable>,
    pub indexes: Vec<StoredIndex>,
    next_rowid: i64,
}

fn key_collation(e: &Expression, scope: &Scope) -> Collation {
    match expr_collation(e, scope) {
        Some(CollationSource::Explicit(c) | CollationSource::Column(c)) => c,
        None => Collation::Binary,
    }
}

fn eval_err(e: EvalError) -> String {
    e.to_string()
}

impl Storage {
    pub fn table(&self, name: &str) -> Option<&StoredTable> {
        self.tables.iter().find(|t| t.def.name.eq_ignore_ascii_case(name))
    }

    fn table_pos(&self, name: &str) -> Result<usize, String> {
        self.tables
            .iter()
            .position(|t| t.def.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| format!("no such table: {name}"))
    }

    /// Applies one DDL or DML statement atomically.
    pub fn apply(&mut self, stmt: &Statement, dialect: &DialectProfile) -> Result<(), String> {
        let mut work = self.clone();
        match stmt {
            Statement::CreateTable(def) => work.create_table(def, dialect)?,
            Statement::CreateIndex(def) => work.create_index(def, false, dialect)?,
            Statement::Insert { table, columns, rows } => work.insert(table, columns, rows, dialect)?,
            Statement::Update { table, assignments, predicate } => {
                work.update(table, assignments, predicate.as_ref(), dialect)?
            }
            Statement::Delete { table, predicate } => work.delete(table, predicate.as_ref(), dialect)?,
            Statement::Select(_) => return Err("not a mutation".into()),
        }
        *self = work;
        Ok(())
    }

    fn create_table(&mut self, def: &TableDef, dialect: &DialectProfile) -> Result<(), String> {
        if self.table(&def.name).is_some() {
            return Err(format!("table {} already exists", def.name));
        }
        if def.columns.is_empty() {
            return Err("a table needs at least one column".into());
        }
        self.tables.push(StoredTable { def: def.clone(), rows: vec![] });
        let mut n = 0;
        for c in &def.columns {
            if c.unique || c.primary_key {
                n += 1;
                let auto = IndexDef {
                    name: format!("autoindex_{}_{n}", def.name),
                    table: def.name.clone(),
                    keys: vec![Expression::Column(crate::ast::ColumnRef::bare(c.name.clone()))],
                    unique: true,
                    partial_predicate: None,
                };
                self.create_index(&auto, true, dialect)?;
            }
        }
        Ok(())
    }

    fn create_index(&mut self, def: &IndexDef, automatic: bool, dialect: &DialectProfile) -> Result<(), String> {
        if self.indexes.iter().any(|i| i.def.name.eq_ignore_ascii_case(&def.name)) {
            return Err(format!("index {} already exists", def.name));
        }
        let t = self.table_pos(&def.table)?;
        let scope = self.tables[t].scope();
        for c in def.keys.iter().chain(def.partial_predicate.iter()).flat_map(|e| e.columns()) {
            scope.resolve(c).map_err(eval_err)?;
        }
        let mut idx = StoredIndex {
            def: def.clone(),
            automatic,
            collations: def.keys.iter().map(|k| key_collation(k, &scope)).collect(),
            entries: BTreeSet::new(),
        };
        rebuild(&mut idx, &self.tables[t], dialect)?;
        self.indexes.push(idx);
        Ok(())
    }

    fn reindex(&mut self, table: usize, dialect: &DialectProfile) -> Result<(), String> {
        let t = &self.tables[table];
        for idx in self.indexes.iter_mut().filter(|i| i.def.table.eq_ignore_ascii_case(&t.def.name)) {
            rebuild(idx, t, dialect)?;
        }
        Ok(())
    }

    fn insert(
        &mut self,
        table: &str,
        columns: &[String],
        rows: &[Vec<SqlValue>],
        dialect: &DialectProfile,
    ) -> Result<(), String> {
        let t = self.table_pos(table)?;
        let def = self.tables[t].def.clone();
        let positions: Vec<usize> = if columns.is_empty() {
            (0..def.columns.len()).collect()
        } else {
            columns
                .iter()
                .map(|c| def.column_index(c).ok_or_else(|| format!("table {} has no column named {c}", def.name)))
                .collect::<Result<_, _>>()?
        };
        for row in rows {
            if row.len() != positions.len() {
                return Err(format!("{} values for {} columns", row.len(), positions.len()));
            }
            let mut values = vec![SqlValue::Null; def.columns.len()];
            for (v, &p) in row.iter().zip(&positions) {
                values[p] = store(v.clone(), &def, p, dialect);
            }
            self.next_rowid += 1;
            self.tables[t].rows.push(Row { rowid: self.next_rowid, values });
        }
        self.reindex(t, dialect)
    }

    fn update(
        &mut self,
        table: &str,
        assignments: &[(String, Expression)],
        predicate: Option<&Expression>,
        dialect: &DialectProfile,
    ) -> Result<(), String> {
        let t = self.table_pos(table)?;
        let def = self.tables[t].def.clone();
        let scope = table_scope(&def);
        let targets: Vec<usize> = assignments
            .iter()
            .map(|(c, _)| def.column_index(c).ok_or_else(|| format!("no such column: {c}")))
            .collect::<Result<_, _>>()?;
        for row in self.tables[t].rows.iter_mut() {
            if !matches_predicate(predicate, &scope, &row.values, dialect)? {
                continue;
            }
            let new: Vec<SqlValue> = assignments
                .iter()
                .map(|(_, e)| eval_expression(e, &scope, &row.values, dialect))
                .collect::<Result<_, _>>()
                .map_err(eval_err)?;
            for (v, &p) in new.into_iter().zip(&targets) {
                row.values[p] = store(v, &def, p, dialect);
            }
        }
        self.reindex(t, dialect)
    }

    fn delete(&mut self, table: &str, predicate: Option<&Expression>, dialect: &DialectProfile) -> Result<(), String> {
        let t = self.table_pos(table)?;
        let scope = self.tables[t].scope();
        let mut kept = Vec::new();
        for row in std::mem::take(&mut self.tables[t].rows) {
            if !matches_predicate(predicate, &scope, &row.values, dialect)? {
                kept.push(row);
            }
        }
        self.tables[t].rows = kept;
        self.reindex(t, dialect)
    }
}

fn store(v: SqlValue, def: &TableDef, column: usize, dialect: &DialectProfile) -> SqlValue {
    let v = v.normalize_bool(dialect.has_native_boolean);
    if dialect.applies_column_affinity {
        apply_affinity(v, def.columns[column].affinity())
    } else {
        v
    }
}

fn matches_predicate(
    predicate: Option<&Expression>,
    scope: &Scope,
    row: &[SqlValue],
    dialect: &DialectProfile,
) -> Result<bool, String> {
    match predicate {
        None => Ok(true),
        Some(p) => Ok(eval_expression(p, scope, row, dialect).map_err(eval_err)?.truth() == Some(true)),
    }
}

fn rebuild(idx: &mut StoredIndex, table: &StoredTable, dialect: &DialectProfile) -> Result<(), String> {
    let scope = table.scope();
    idx.entries.clear();
    for row in &table.rows {
        if !matches_predicate(idx.def.partial_predicate.as_ref(), &scope, &row.values, dialect)? {
            continue;
        }
        let mut key = Vec::with_capacity(idx.def.keys.len());
        let mut has_null = false;
        for (k, coll) in idx.def.keys.iter().zip(&idx.collations) {
            let v = eval_expression(k, &scope, &row.values, dialect).map_err(eval_err)?;
            has_null |= v.is_null();
            key.push(SortKey::new(&v, *coll));
        }
        if idx.def.unique && !has_null {
            let lo = (key.clone(), i64::MIN);
            let hi = (key.clone(), i64::MAX);
            if idx.entries.range(lo..=hi).next().is_some() {
                return Err(unique_message(idx, &table.def));
            }
        }
        idx.entries.insert((key, row.rowid));
    }
    Ok(())
}

fn unique_message(idx: &StoredIndex, table: &TableDef) -> String {
    let cols: Option<Vec<String>> = idx
        .def
        .keys
        .iter()
        .map(|k| match k {
            Expression::Column(c) => Some(format!("{}.{}", table.name, c.column)),
            _ => None,
        })
        .collect();
    match cols {
        Some(cols) => format!("UNIQUE constraint failed: {}", cols.join(", ")),
        None => format!("UNIQUE constraint failed: index '{}'", idx.def.name),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::ColumnDef;

    fn setup() -> (Storage, DialectProfile) {
        let d = DialectProfile::toy();
        let mut s = Storage::default();
        let t = TableDef::new("t0", vec![ColumnDef::new("c0", "INT").unique(), ColumnDef::new("c1", "")]);
        s.apply(&Statement::CreateTable(t), &d).unwrap();
        (s, d)
    }

    fn insert(vals: Vec<Vec<SqlValue>>) -> Statement {
        Statement::Insert { table: "t0".into(), columns: vec![], rows: vals }
    }

    #[test]
    fn affinity_applied_on_insert() {
        let (mut s, d) = setup();
        s.apply(&insert(vec![vec![SqlValue::text("7"), SqlValue::text("7")]]), &d).unwrap();
        let row = &s.table("t0").unwrap().rows[0].values;
        assert_eq!(row, &vec![SqlValue::Integer(7), SqlValue::text("7")]);
    }

    #[test]
    fn unique_violation_is_atomic() {
        let (mut s, d) = setup();
        let err = s
            .apply(
                &insert(vec![vec![SqlValue::Integer(1), SqlValue::Null], vec![SqlValue::Integer(1), SqlValue::Null]]),
                &d,
            )
            .unwrap_err();
        assert_eq!(err, "UNIQUE constraint failed: t0.c0");
        assert!(s.table("t0").unwrap().rows.is_empty());
        assert!(s.indexes[0].entries.is_empty());
    }

    #[test]
    fn unique_allows_multiple_nulls() {
        let (mut s, d) = setup();
        s.apply(&insert(vec![vec![SqlValue::Null, SqlValue::Null], vec![SqlValue::Null, SqlValue::Null]]), &d).unwrap();
        assert_eq!(s.indexes[0].entries.len(), 2);
    }

    #[test]
    fn partial_index_filters_rows() {
        let (mut s, d) = setup();
        s.apply(
            &insert(vec![vec![SqlValue::Integer(1), SqlValue::Null], vec![SqlValue::Integer(2), SqlValue::Null]]),
            &d,
        )
        .unwrap();
        let idx = IndexDef {
            name: "i0".into(),
            table: "t0".into(),
            keys: vec![Expression::Column(crate::ast::ColumnRef::bare("c1"))],
            unique: false,
            partial_predicate: Some(Expression::binary(
                crate::ast::BinaryOp::Gt,
                Expression::Column(crate::ast::ColumnRef::bare("c0")),
                Expression::int(1),
            )),
        };
        s.apply(&Statement::CreateIndex(idx), &d).unwrap();
        assert_eq!(s.indexes[1].entries.len(), 1);
    }
}
