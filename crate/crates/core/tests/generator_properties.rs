use norec_core::ast::{Expression, JoinKind, SelectQuery, Statement, StatementKind, TableRef};
use norec_core::dialect::{is_deterministic, DialectProfile};
use norec_core::generator::{GenConfig, Generator, ScopeEntry};
use norec_core::render::{render_query, render_statement};
use norec_core::{EngineResult, Executor, ToyEngine};
use proptest::prelude::*;

fn scope_of(schema: &norec_core::schema::SchemaDef) -> Vec<ScopeEntry> {
    schema.tables.iter().flat_map(|t| t.columns.iter().map(move |c| (t.name.clone(), c.clone()))).collect()
}

fn assert_compliant(query: &SelectQuery, dialect: &DialectProfile) {
    assert!(!query.distinct);
    assert!(!query.has_derived_tables());
    for e in query.expressions() {
        assert!(is_deterministic(e, dialect), "{e:?}");
    }
}

#[test]
fn expressions_never_contain_forbidden_constructs() {
    for dialect in [DialectProfile::toy(), DialectProfile::sqlite(), DialectProfile::strict()] {
        let mut g = Generator::with_seed(11, &GenConfig::default(), &dialect);
        let (schema, _) = g.generate_schema();
        let scope = scope_of(&schema);
        let mut nodes = 0;
        for _ in 0..100_000 {
            let e = g.generate_predicate(&scope, 4);
            nodes += e.node_count();
            assert!(is_deterministic(&e, &dialect), "{e:?}");
        }
        assert!(nodes > 100_000);
        for _ in 0..2_000 {
            assert_compliant(&g.generate_optimized_query(&schema), &dialect);
        }
    }
}

#[test]
fn zero_probabilities_exclude_clauses() {
    let cfg = GenConfig { order_by_probability: 0.0, group_by_probability: 0.0, ..GenConfig::default() };
    let dialect = DialectProfile::sqlite();
    let mut g = Generator::with_seed(5, &cfg, &dialect);
    let (schema, _) = g.generate_schema();
    for _ in 0..10_000 {
        let q = g.generate_optimized_query(&schema);
        assert!(q.order_by.is_empty() && q.group_by.is_empty());
    }
}

#[test]
fn order_by_terms_reference_columns() {
    let cfg = GenConfig { order_by_probability: 1.0, ..GenConfig::default() };
    let dialect = DialectProfile::sqlite();
    let mut g = Generator::with_seed(9, &cfg, &dialect);
    let (schema, _) = g.generate_schema();
    for _ in 0..2_000 {
        let q = g.generate_optimized_query(&schema);
        assert!(!q.order_by.is_empty());
        assert!(q.order_by.iter().all(|o| o.expr.has_columns()));
    }
}

#[test]
fn left_then_inner_join_shape_is_reachable() {
    let cfg = GenConfig { max_tables: 3, max_joins: 2, ..GenConfig::default() };
    let dialect = DialectProfile::sqlite();
    let found = (0..200).any(|seed| {
        let mut g = Generator::with_seed(seed, &cfg, &dialect);
        let (schema, _) = g.generate_schema();
        (0..200).any(|_| {
            let q = g.generate_optimized_query(&schema);
            q.where_clause.is_some()
                && q.joins.len() == 2
                && q.joins[0].kind == JoinKind::Left
                && q.joins[1].kind == JoinKind::Inner
                && q.from.iter().all(|t| matches!(t, TableRef::Named(_)))
        })
    });
    assert!(found);
}

#[test]
fn generated_queries_are_valid_on_reference_engine() {
    let dialect = DialectProfile::toy();
    let (mut total, mut bad) = (0u64, 0u64);
    for seed in 0..50 {
        let mut g = Generator::with_seed(seed, &GenConfig::default(), &dialect);
        let mut engine = ToyEngine::new(None);
        let (schema, ddl) = g.generate_schema();
        let dml = g.populate(&schema);
        for s in ddl.iter().chain(&dml) {
            if let EngineResult::Error(m) = engine.execute(&s.stmt) {
                assert!(s.tolerates(&m), "setup error outside expected set: {m}");
            }
        }
        for _ in 0..100 {
            let q = g.generate_optimized_query(&schema);
            total += 1;
            if let EngineResult::Error(m) = engine.execute(&Statement::Select(q)) {
                assert!(dialect.match_expected(StatementKind::Select, &m).is_some(), "unexpected: {m}");
                bad += 1;
            }
        }
    }
    assert!(bad * 100 <= total, "{bad} of {total} queries failed");
}

fn rendered_stream(seed: u64, cfg: &GenConfig) -> Vec<String> {
    let dialect = DialectProfile::sqlite();
    let mut g = Generator::with_seed(seed, cfg, &dialect);
    let (schema, ddl) = g.generate_schema();
    let dml = g.populate(&schema);
    let mut out: Vec<String> = ddl.iter().chain(&dml).map(|s| render_statement(&s.stmt, &dialect).unwrap()).collect();
    for _ in 0..20 {
        out.push(render_query(&g.generate_optimized_query(&schema), &dialect).unwrap());
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn same_seed_same_sql(seed in any::<u64>(), tables in 1usize..4, depth in 1usize..7) {
        let cfg = GenConfig { max_tables: tables, max_expr_depth: depth, ..GenConfig::default() };
        prop_assert_eq!(rendered_stream(seed, &cfg), rendered_stream(seed, &cfg));
    }

    #[test]
    fn predicate_depth_is_bounded(seed in any::<u64>(), depth in 0usize..8) {
        let dialect = DialectProfile::toy();
        let mut g = Generator::with_seed(seed, &GenConfig::default(), &dialect);
        let (schema, _) = g.generate_schema();
        let scope = scope_of(&schema);
        let e: Expression = g.generate_predicate(&scope, depth);
        prop_assert!(e.depth() <= depth + 1);
    }
}
