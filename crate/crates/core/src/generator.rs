//! Seeded random generation of schemas, data and queries.
//!
//! Everything is drawn from one [`ChaCha8Rng`], so a seed, a [`GenConfig`]
//! and a dialect fully determine the statement sequence. Generated
//! expressions never contain subqueries (there is no such node) and call
//! only functions the dialect whitelists.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ast::{
    BinaryOp, CastType, ColumnRef, Direction, Expression, IsTest, JoinClause, JoinKind, OrderTerm, SelectList,
    SelectQuery, Statement, TableRef, UnaryOp,
};
use crate::dialect::DialectProfile;
use crate::schema::{Affinity, Collation, ColumnDef, IndexDef, SchemaDef, TableDef};
use crate::value::SqlValue;

/// Relative weights of expression node kinds at inner positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExprWeights {
    pub comparison: u32,
    pub logical: u32,
    pub not: u32,
    pub is_test: u32,
    pub between: u32,
    pub in_list: u32,
    pub pattern: u32,
    pub arithmetic: u32,
    pub negate: u32,
    pub concat: u32,
    pub function: u32,
    pub cast: u32,
    pub collate: u32,
}

impl Default for ExprWeights {
    fn default() -> Self {
        ExprWeights {
            comparison: 30,
            logical: 22,
            not: 8,
            is_test: 6,
            between: 5,
            in_list: 6,
            pattern: 6,
            arithmetic: 5,
            negate: 2,
            concat: 2,
            function: 3,
            cast: 3,
            collate: 2,
        }
    }
}

impl ExprWeights {
    fn total(&self) -> u32 {
        self.comparison
            + self.logical
            + self.not
            + self.is_test
            + self.between
            + self.in_list
            + self.pattern
            + self.arithmetic
            + self.negate
            + self.concat
            + self.function
            + self.cast
            + self.collate
    }
}

/// Generation knobs. Defaults are tunables, not derived from any target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    pub max_tables: usize,
    pub max_columns_per_table: usize,
    /// Upper bound on rows inserted per table; 0 disables data generation.
    pub max_rows: usize,
    pub max_expr_depth: usize,
    pub max_joins: usize,
    pub max_indexes: usize,
    pub weights: ExprWeights,
    pub order_by_probability: f64,
    pub group_by_probability: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            max_tables: 3,
            max_columns_per_table: 3,
            max_rows: 20,
            max_expr_depth: 6,
            max_joins: 2,
            max_indexes: 3,
            weights: ExprWeights::default(),
            order_by_probability: 0.1,
            group_by_probability: 0.1,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("max_tables", self.max_tables),
            ("max_columns_per_table", self.max_columns_per_table),
            ("max_expr_depth", self.max_expr_depth),
        ] {
            if v < 1 {
                return Err(format!("{name} must be at least 1"));
            }
        }
        if self.weights.total() == 0 {
            return Err("expression weights must not all be zero".into());
        }
        for (name, p) in
            [("order_by_probability", self.order_by_probability), ("group_by_probability", self.group_by_probability)]
        {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// A statement together with the error substrings it may legitimately
/// raise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedStatement {
    pub stmt: Statement,
    pub expected_errors: Vec<String>,
}

impl GeneratedStatement {
    pub fn new(stmt: Statement, dialect: &DialectProfile) -> Self {
        let expected_errors = dialect.expected_errors_for(stmt.kind()).to_vec();
        GeneratedStatement { stmt, expected_errors }
    }

    pub fn tolerates(&self, message: &str) -> bool {
        self.expected_errors.iter().any(|p| message.contains(p.as_str()))
    }
}

/// A column visible to a generated expression.
pub type ScopeEntry = (String, ColumnDef);

const LIMIT: i64 = 1 << 40;

const TEXT_POOL: &[&str] = &[
    "", "a", "A", "b", "B", "ab", "Ab", "aB", "abc", "-1", "1", "0", "2", "12", "1.5", " 1", "\n2", "1 ", "a ", "A ",
    "x'y", "\\", "%", "-", "12abc", "1e3", "TRUE",
];

const GLOB_PATTERNS: &[&str] = &["-*", "1*", "0*", "a*", "A*", "*", "?", "[a-c]*", "-?", "1?", "*a", "ab*", "2*"];
const LIKE_PATTERNS: &[&str] = &["-%", "1%", "0%", "a%", "A%", "%", "_", "ab%", "%b", "-_", "1_", "2%", "B%"];

/// Deterministic statement generator for one worker.
#[derive(Debug, Clone)]
pub struct Generator {
    rng: ChaCha8Rng,
    config: GenConfig,
    dialect: DialectProfile,
    /// Values inserted so far, reused as comparison constants.
    pool: Vec<SqlValue>,
}

impl Generator {
    pub fn new(config: GenConfig, dialect: DialectProfile) -> Self {
        Generator { rng: ChaCha8Rng::seed_from_u64(config.seed), config, dialect, pool: Vec::new() }
    }

    pub fn with_seed(seed: u64, config: &GenConfig, dialect: &DialectProfile) -> Self {
        Self::new(GenConfig { seed, ..config.clone() }, dialect.clone())
    }

    pub fn config(&self) -> &GenConfig {
        &self.config
    }

    pub fn dialect(&self) -> &DialectProfile {
        &self.dialect
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p.clamp(0.0, 1.0))
    }

    fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        items.choose(&mut self.rng).expect("non-empty choice")
    }

    pub fn generate_schema(&mut self) -> (SchemaDef, Vec<GeneratedStatement>) {
        let mut schema = SchemaDef::default();
        let mut ddl = Vec::new();
        let n_tables = self.rng.gen_range(1..=self.config.max_tables);
        for t in 0..n_tables {
            let n_cols = self.rng.gen_range(1..=self.config.max_columns_per_table);
            let mut has_pk = false;
            let columns = (0..n_cols)
                .map(|c| {
                    let ty = *self.pick(&["", "", "", "INT", "INT", "INT", "TEXT", "TEXT", "REAL", "NUMERIC", "BOOL"]);
                    let mut col = ColumnDef::new(format!("c{c}"), ty);
                    if !has_pk && self.chance(0.1) {
                        has_pk = true;
                        col = col.primary_key();
                    } else if self.chance(0.3) {
                        col = col.unique();
                    }
                    if self.dialect.has_collate_nocase && self.chance(0.3) {
                        col = col.collate(if self.chance(0.85) { Collation::NoCase } else { Collation::RTrim });
                    }
                    col
                })
                .collect();
            let table = TableDef::new(format!("t{t}"), columns);
            ddl.push(GeneratedStatement::new(Statement::CreateTable(table.clone()), &self.dialect));
            schema.tables.push(table);
        }
        let n_indexes = self.rng.gen_range(0..=self.config.max_indexes);
        for i in 0..n_indexes {
            let table = self.pick(&schema.tables).clone();
            let scope: Vec<ScopeEntry> = table.columns.iter().map(|c| (table.name.clone(), c.clone())).collect();
            let n_keys = if self.chance(0.8) { 1 } else { 2 };
            let keys = (0..n_keys)
                .map(|_| {
                    let c = self.pick(&table.columns).clone();
                    let bare = Expression::Column(ColumnRef::bare(c.name));
                    match self.rng.gen_range(0..10) {
                        0 => Expression::int(0),
                        1 if self.dialect.has_collate_nocase => Expression::collate(bare, Collation::NoCase),
                        2 => Expression::binary(BinaryOp::Add, bare, Expression::int(1)),
                        _ => bare,
                    }
                })
                .collect();
            let partial = if self.dialect.has_partial_indexes && self.chance(0.2) {
                let p = self.gen_expr(&scope, 2, true);
                Some(unqualify(p))
            } else {
                None
            };
            let def = IndexDef {
                name: format!("i{i}"),
                table: table.name.clone(),
                keys,
                unique: self.chance(0.15),
                partial_predicate: partial,
            };
            ddl.push(GeneratedStatement::new(Statement::CreateIndex(def.clone()), &self.dialect));
            schema.indexes.push(def);
        }
        (schema, ddl)
    }

    pub fn populate(&mut self, schema: &SchemaDef) -> Vec<GeneratedStatement> {
        let mut out = Vec::new();
        if self.config.max_rows == 0 {
            return out;
        }
        for table in &schema.tables {
            let target = self.rng.gen_range(0..=self.config.max_rows);
            let mut inserted = 0;
            while inserted < target {
                let n = self.rng.gen_range(1..=4).min(target - inserted);
                let columns: Vec<&ColumnDef> = if self.chance(0.7) {
                    table.columns.iter().collect()
                } else {
                    let mut cs: Vec<&ColumnDef> = table.columns.iter().filter(|_| self.rng.gen_bool(0.6)).collect();
                    if cs.is_empty() {
                        cs.push(&table.columns[0]);
                    }
                    cs
                };
                let rows = (0..n).map(|_| columns.iter().map(|c| self.value_for(c)).collect()).collect();
                let names = if columns.len() == table.columns.len() && self.chance(0.5) {
                    vec![]
                } else {
                    columns.iter().map(|c| c.name.clone()).collect()
                };
                out.push(GeneratedStatement::new(
                    Statement::Insert { table: table.name.clone(), columns: names, rows },
                    &self.dialect,
                ));
                inserted += n;
            }
            let scope: Vec<ScopeEntry> = table.columns.iter().map(|c| (table.name.clone(), c.clone())).collect();
            if self.chance(0.15) {
                let col = self.pick(&table.columns).clone();
                let value = if self.chance(0.6) {
                    Expression::Constant(self.value_for(&col))
                } else {
                    self.gen_expr(&scope, 1, false)
                };
                let predicate = if self.chance(0.8) { Some(self.gen_expr(&scope, 2, true)) } else { None };
                out.push(GeneratedStatement::new(
                    Statement::Update { table: table.name.clone(), assignments: vec![(col.name, value)], predicate },
                    &self.dialect,
                ));
            }
            if self.chance(0.08) {
                let predicate = Some(self.gen_expr(&scope, 2, true));
                out.push(GeneratedStatement::new(
                    Statement::Delete { table: table.name.clone(), predicate },
                    &self.dialect,
                ));
            }
        }
        out
    }

    /// A value suited to a column, occasionally of another type.
    fn value_for(&mut self, c: &ColumnDef) -> SqlValue {
        let v = if self.chance(0.7) {
            match c.affinity() {
                Affinity::Integer | Affinity::Numeric => self.small_int_or_null(),
                Affinity::Real => {
                    if self.chance(0.5) {
                        self.small_int_or_null()
                    } else {
                        self.random_value()
                    }
                }
                Affinity::Text => self.text_or_null(),
                Affinity::Blob => self.random_value(),
            }
        } else {
            self.random_value()
        };
        if !v.is_null() && self.pool.len() < 64 {
            self.pool.push(v.clone());
        }
        v
    }

    fn small_int_or_null(&mut self) -> SqlValue {
        if self.chance(0.2) {
            SqlValue::Null
        } else {
            SqlValue::Integer(self.rng.gen_range(-3..=3))
        }
    }

    fn text_or_null(&mut self) -> SqlValue {
        if self.chance(0.2) {
            SqlValue::Null
        } else {
            SqlValue::text(*self.pick(TEXT_POOL))
        }
    }

    pub fn random_value(&mut self) -> SqlValue {
        match self.rng.gen_range(0..100) {
            0..=14 => SqlValue::Null,
            15..=49 => SqlValue::Integer(self.rng.gen_range(-3..=3)),
            50..=54 => SqlValue::Integer(*self.pick(&[LIMIT, -LIMIT, LIMIT - 1, 1 << 20, -(1 << 30)])),
            55..=64 => SqlValue::Real(*self.pick(&[0.5, -0.5, 1.0, 1.5, -2.5, 0.0, 1e10, 3.25])),
            65..=94 => SqlValue::text(*self.pick(TEXT_POOL)),
            _ => {
                let b = self.chance(0.5);
                SqlValue::Boolean(b).normalize_bool(self.dialect.has_native_boolean)
            }
        }
    }

    fn constant(&mut self) -> Expression {
        if !self.pool.is_empty() && self.chance(0.3) {
            let v = self.pick(&self.pool.clone()).clone();
            return Expression::Constant(v);
        }
        Expression::Constant(self.random_value())
    }

    fn column(&mut self, scope: &[ScopeEntry]) -> Expression {
        let (t, c) = self.pick(scope);
        Expression::col(t, &c.name)
    }

    fn leaf(&mut self, scope: &[ScopeEntry]) -> Expression {
        if !scope.is_empty() && self.chance(0.6) {
            self.column(scope)
        } else {
            self.constant()
        }
    }

    /// A predicate of depth at most `depth + 1` over `scope`.
    pub fn generate_predicate(&mut self, scope: &[ScopeEntry], depth: usize) -> Expression {
        self.gen_expr(scope, depth, true)
    }

    /// `boolean` biases the root toward predicates; any node may appear.
    fn gen_expr(&mut self, scope: &[ScopeEntry], depth: usize, boolean: bool) -> Expression {
        if depth == 0 || (!boolean && self.chance(0.4)) {
            return self.leaf(scope);
        }
        let w = self.config.weights.clone();
        let mut choices: Vec<(u32, u8)> = vec![
            (w.comparison, 0),
            (w.logical, 1),
            (w.not, 2),
            (w.is_test, 3),
            (w.between, 4),
            (w.in_list, 5),
            (w.pattern, 6),
        ];
        let value_weight = if boolean { 4 } else { 1 };
        choices.extend([
            (w.arithmetic / value_weight, 7),
            (w.negate / value_weight, 8),
            (w.concat / value_weight, 9),
            (w.function / value_weight, 10),
            (w.cast / value_weight, 11),
            (w.collate / value_weight, 12),
        ]);
        let total: u32 = choices.iter().map(|c| c.0).sum();
        if total == 0 {
            return self.leaf(scope);
        }
        let mut roll = self.rng.gen_range(0..total);
        let mut kind = 0;
        for (weight, k) in &choices {
            if roll < *weight {
                kind = *k;
                break;
            }
            roll -= weight;
        }
        let d = depth - 1;
        match kind {
            0 => self.comparison(scope, d),
            1 => {
                let op = if self.chance(0.5) { BinaryOp::And } else { BinaryOp::Or };
                Expression::binary(op, self.gen_expr(scope, d, true), self.gen_expr(scope, d, true))
            }
            2 => Expression::not(self.gen_expr(scope, d, true)),
            3 => {
                let test = *self.pick(&[IsTest::Null, IsTest::NotNull, IsTest::True, IsTest::False]);
                Expression::is(self.gen_expr(scope, d, false), test)
            }
            4 => {
                let symmetric = self.dialect.has_between_symmetric && self.chance(0.3);
                Expression::between(
                    self.operand(scope, d),
                    self.gen_expr(scope, d, false),
                    self.gen_expr(scope, d, false),
                    symmetric,
                )
            }
            5 => {
                let n = if self.chance(0.5) { 1 } else { self.rng.gen_range(2..=3) };
                let value = self.gen_expr(scope, d, false);
                let candidates = (0..n).map(|_| self.gen_expr(scope, d, false)).collect();
                Expression::in_list(value, candidates)
            }
            6 => self.pattern_match(scope, d),
            7 => {
                let op = *self.pick(&[BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div, BinaryOp::Rem]);
                Expression::binary(op, self.gen_expr(scope, d, false), self.gen_expr(scope, d, false))
            }
            8 => {
                let op = if self.chance(0.7) { UnaryOp::Neg } else { UnaryOp::Plus };
                Expression::unary(op, self.gen_expr(scope, d, false))
            }
            9 => Expression::binary(BinaryOp::Concat, self.gen_expr(scope, d, false), self.gen_expr(scope, d, false)),
            10 => {
                let names: Vec<String> = self.dialect.deterministic_functions.iter().cloned().collect();
                if names.is_empty() {
                    return self.leaf(scope);
                }
                let name = self.pick(&names).clone();
                Expression::call(&name, vec![self.gen_expr(scope, d, false)])
            }
            11 => {
                let target = *self.pick(&[CastType::Integer, CastType::Real, CastType::Text, CastType::Numeric]);
                Expression::cast(self.gen_expr(scope, d, false), target)
            }
            _ => {
                let c = self.collation();
                Expression::collate(self.gen_expr(scope, d, false), c)
            }
        }
    }

    fn collation(&mut self) -> Collation {
        if self.dialect.has_collate_nocase {
            *self.pick(&[Collation::NoCase, Collation::Binary, Collation::RTrim])
        } else {
            Collation::Binary
        }
    }

    /// Mostly a bare column, so comparisons often target index keys.
    fn operand(&mut self, scope: &[ScopeEntry], depth: usize) -> Expression {
        if !scope.is_empty() && self.chance(0.7) {
            self.column(scope)
        } else {
            self.gen_expr(scope, depth, false)
        }
    }

    /// A column: engines may read constant-valued terms as column positions.
    fn order_term(&mut self, scope: &[ScopeEntry]) -> Expression {
        self.column(scope)
    }

    fn comparison(&mut self, scope: &[ScopeEntry], depth: usize) -> Expression {
        let op = *self.pick(&[BinaryOp::Eq, BinaryOp::Ne, BinaryOp::Lt, BinaryOp::Le, BinaryOp::Gt, BinaryOp::Ge]);
        let (left, right) = match self.rng.gen_range(0..10) {
            0..=3 if !scope.is_empty() => (self.column(scope), self.constant()),
            4..=6 if !scope.is_empty() => (self.column(scope), self.column(scope)),
            7 if !scope.is_empty() => (self.constant(), self.column(scope)),
            _ => (self.gen_expr(scope, depth, false), self.gen_expr(scope, depth, false)),
        };
        Expression::binary(op, left, right)
    }

    fn pattern_match(&mut self, scope: &[ScopeEntry], depth: usize) -> Expression {
        let glob = self.dialect.has_glob && self.chance(0.5);
        let pattern = if glob { *self.pick(GLOB_PATTERNS) } else { *self.pick(LIKE_PATTERNS) };
        let value = self.operand(scope, depth);
        let right = if self.chance(0.9) { Expression::text(pattern) } else { self.gen_expr(scope, depth, false) };
        Expression::binary(if glob { BinaryOp::Glob } else { BinaryOp::Like }, value, right)
    }

    /// `SELECT * FROM … WHERE φ`, possibly with joins, ORDER BY or GROUP BY.
    pub fn generate_optimized_query(&mut self, schema: &SchemaDef) -> SelectQuery {
        let mut tables: Vec<&TableDef> = schema.tables.iter().collect();
        tables.shuffle(&mut self.rng);
        let n = self.rng.gen_range(1..=(self.config.max_joins + 1).min(tables.len()));
        let tables = &tables[..n];
        let mut scope: Vec<ScopeEntry> = Vec::new();
        let mut from = vec![TableRef::named(&tables[0].name)];
        let mut joins = Vec::new();
        add_scope(&mut scope, tables[0]);
        for t in &tables[1..] {
            let comma = joins.is_empty() && self.chance(0.4);
            add_scope(&mut scope, t);
            if comma {
                from.push(TableRef::named(&t.name));
                continue;
            }
            let kind = *self.pick(&[JoinKind::Inner, JoinKind::Left, JoinKind::Cross]);
            let on = match kind {
                JoinKind::Cross => None,
                _ => Some(self.gen_expr(&scope, 2, true)),
            };
            joins.push(JoinClause { kind, right: TableRef::named(&t.name), on });
        }
        let depth = self.config.max_expr_depth.saturating_sub(1);
        let where_clause = Some(self.gen_expr(&scope, depth, true));
        let order_by = if self.chance(self.config.order_by_probability) {
            (0..self.rng.gen_range(1..=2))
                .map(|_| OrderTerm {
                    expr: self.order_term(&scope),
                    direction: if self.chance(0.5) { Direction::Asc } else { Direction::Desc },
                })
                .collect()
        } else {
            vec![]
        };
        let group_by = if self.chance(self.config.group_by_probability) {
            (0..self.rng.gen_range(1..=2)).map(|_| self.column(&scope)).collect()
        } else {
            vec![]
        };
        SelectQuery { select_list: SelectList::Star, from, joins, where_clause, group_by, order_by, distinct: false }
    }
}

fn add_scope(scope: &mut Vec<ScopeEntry>, t: &TableDef) {
    scope.extend(t.columns.iter().map(|c| (t.name.clone(), c.clone())));
}

/// Strips table qualifiers, as index definitions require.
fn unqualify(mut e: Expression) -> Expression {
    fn go(e: &mut Expression) {
        if let Expression::Column(c) = e {
            c.table = None;
        }
        for c in e.children_mut() {
            go(c);
        }
    }
    go(&mut e);
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::render_statement;

    fn rendered(seed: u64) -> Vec<String> {
        let d = DialectProfile::toy();
        let mut g = Generator::with_seed(seed, &GenConfig::default(), &d);
        let (schema, mut stmts) = g.generate_schema();
        stmts.extend(g.populate(&schema));
        let mut out: Vec<String> = stmts.iter().map(|s| render_statement(&s.stmt, &d).unwrap()).collect();
        for _ in 0..20 {
            out.push(render_statement(&Statement::Select(g.generate_optimized_query(&schema)), &d).unwrap());
        }
        out
    }

    #[test]
    fn seed_determinism() {
        assert_eq!(rendered(7), rendered(7));
        assert_ne!(rendered(7), rendered(8));
    }

    #[test]
    fn depth_zero_without_scope_is_constant() {
        let mut g = Generator::new(GenConfig::default(), DialectProfile::toy());
        for _ in 0..100 {
            assert!(matches!(g.generate_predicate(&[], 0), Expression::Constant(_)));
        }
    }

    #[test]
    fn zero_rows_means_no_dml() {
        let config = GenConfig { max_rows: 0, ..GenConfig::default() };
        let mut g = Generator::new(config, DialectProfile::toy());
        let (schema, _) = g.generate_schema();
        assert!(g.populate(&schema).is_empty());
    }

    #[test]
    fn single_table_config() {
        let config = GenConfig { max_tables: 1, ..GenConfig::default() };
        let mut g = Generator::new(config, DialectProfile::toy());
        let (schema, _) = g.generate_schema();
        assert_eq!(schema.tables.len(), 1);
        let q = g.generate_optimized_query(&schema);
        assert_eq!(q.from.len(), 1);
        assert!(q.joins.is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(GenConfig::default().validate().is_ok());
        assert!(GenConfig { max_tables: 0, ..GenConfig::default() }.validate().is_err());
        let zero = ExprWeights {
            comparison: 0,
            logical: 0,
            not: 0,
            is_test: 0,
            between: 0,
            in_list: 0,
            pattern: 0,
            arithmetic: 0,
            negate: 0,
            concat: 0,
            function: 0,
            cast: 0,
            collate: 0,
        };
        assert!(GenConfig { weights: zero, ..GenConfig::default() }.validate().is_err());
    }

    #[test]
    fn strict_dialect_avoids_unsupported_features() {
        let d = DialectProfile::strict();
        let mut g = Generator::new(GenConfig::default(), d.clone());
        for _ in 0..50 {
            let (schema, ddl) = g.generate_schema();
            for s in ddl.iter().chain(g.populate(&schema).iter()) {
                render_statement(&s.stmt, &d).unwrap();
            }
            for _ in 0..20 {
                render_statement(&Statement::Select(g.generate_optimized_query(&schema)), &d).unwrap();
            }
        }
    }
}
