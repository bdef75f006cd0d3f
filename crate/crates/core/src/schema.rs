//! Schema definitions, collations and declared-type affinity.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ast::Expression;

/// Type affinity derived from a column's declared type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Affinity {
    Integer,
    Text,
    Real,
    Numeric,
    /// Also stands for "no affinity" in comparisons.
    Blob,
}

impl Affinity {
    pub fn is_numeric(self) -> bool {
        matches!(self, Affinity::Integer | Affinity::Real | Affinity::Numeric)
    }
}

/// Maps a declared column type to its affinity class using the substring
/// rules of the embedded dialect. Unknown names fall through to NUMERIC.
pub fn column_affinity(declared_type: &str) -> Affinity {
    let t = declared_type.to_ascii_uppercase();
    if t.contains("INT") {
        Affinity::Integer
    } else if t.contains("CHAR") || t.contains("CLOB") || t.contains("TEXT") {
        Affinity::Text
    } else if t.contains("BLOB") || t.trim().is_empty() {
        Affinity::Blob
    } else if t.contains("REAL") || t.contains("FLOA") || t.contains("DOUB") {
        Affinity::Real
    } else {
        Affinity::Numeric
    }
}

/// Text comparison rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Collation {
    #[default]
    Binary,
    NoCase,
    RTrim,
}

impl Collation {
    pub fn normalize(self, s: &str) -> String {
        match self {
            Collation::Binary => s.to_owned(),
            Collation::NoCase => s.to_ascii_lowercase(),
            Collation::RTrim => s.trim_end_matches(' ').to_owned(),
        }
    }

    pub fn sql_name(self) -> &'static str {
        match self {
            Collation::Binary => "BINARY",
            Collation::NoCase => "NOCASE",
            Collation::RTrim => "RTRIM",
        }
    }
}

impl fmt::Display for Collation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.sql_name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    /// Declared type as written; empty for untyped columns.
    pub declared_type: String,
    pub unique: bool,
    pub primary_key: bool,
    /// Declared collation; `None` means the implicit BINARY.
    pub collation: Option<Collation>,
}

impl ColumnDef {
    pub fn new(name: impl Into<String>, declared_type: impl Into<String>) -> Self {
        ColumnDef {
            name: name.into(),
            declared_type: declared_type.into(),
            unique: false,
            primary_key: false,
            collation: None,
        }
    }

    pub fn unique(mut self) -> Self {
        self.unique = true;
        self
    }

    pub fn primary_key(mut self) -> Self {
        self.primary_key = true;
        self
    }

    pub fn collate(mut self, c: Collation) -> Self {
        self.collation = Some(c);
        self
    }

    pub fn affinity(&self) -> Affinity {
        column_affinity(&self.declared_type)
    }

    pub fn effective_collation(&self) -> Collation {
        self.collation.unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<ColumnDef>,
}

impl TableDef {
    pub fn new(name: impl Into<String>, columns: Vec<ColumnDef>) -> Self {
        TableDef { name: name.into(), columns }
    }

    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name.eq_ignore_ascii_case(name))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexDef {
    pub name: String,
    pub table: String,
    pub keys: Vec<Expression>,
    pub unique: bool,
    pub partial_predicate: Option<Expression>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SchemaDef {
    pub tables: Vec<TableDef>,
    pub indexes: Vec<IndexDef>,
}

impl SchemaDef {
    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    pub fn indexes_on<'a>(&'a self, table: &'a str) -> impl Iterator<Item = &'a IndexDef> + 'a {
        self.indexes.iter().filter(move |i| i.table.eq_ignore_ascii_case(table))
    }
}
