use super::*;
use crate::scenarios::{self, Scenario};
use crate::value::SqlValue;

fn load(s: &Scenario, injection: Option<BugInjection>) -> ToyEngine {
    let mut e = ToyEngine::new(injection);
    for stmt in &s.setup {
        assert!(e.execute(stmt).is_ok(), "setup failed: {stmt:?}");
    }
    e
}

fn rows(r: EngineResult) -> Vec<Vec<SqlValue>> {
    match r {
        EngineResult::Rows { rows, .. } => rows,
        other => panic!("expected rows, got {other:?}"),
    }
}

#[test]
fn glob_range_skips_integer_only_when_injected() {
    let s = scenarios::glob_prefix_untyped();
    assert_eq!(rows(load(&s, None).execute_optimized(&s.query)), vec![vec![SqlValue::Integer(-1)]]);
    assert!(rows(load(&s, s.injection).execute_optimized(&s.query)).is_empty());
    assert_eq!(rows(load(&s, s.injection).execute_naive(&s.query)).len(), 1);
}

#[test]
fn whitespace_bound_narrows_range() {
    let s = scenarios::whitespace_text_bound();
    let mut sound = rows(load(&s, None).execute_optimized(&s.query));
    sound.sort_by_key(|r| format!("{r:?}"));
    assert_eq!(sound, vec![vec![SqlValue::Integer(0)], vec![SqlValue::Integer(1)]]);
    assert_eq!(rows(load(&s, s.injection).execute_optimized(&s.query)), vec![vec![SqlValue::Integer(0)]]);
}

#[test]
fn in_list_rewrite() {
    let s = scenarios::in_list_affinity();
    assert!(rows(load(&s, None).execute_optimized(&s.query)).is_empty());
    assert_eq!(rows(load(&s, s.injection).execute_optimized(&s.query)), vec![vec![SqlValue::Integer(1)]]);
}

#[test]
fn commute_collation_rows() {
    let s = scenarios::commute_collation();
    let want = vec![vec![SqlValue::text("a"), SqlValue::text("B")]];
    assert_eq!(rows(load(&s, None).execute_optimized(&s.query)), want);
    assert!(rows(load(&s, s.injection).execute_optimized(&s.query)).is_empty());
}

#[test]
fn cross_product_keeps_both_rows() {
    let s = scenarios::cross_product_is_null();
    let e = load(&s, None);
    assert_eq!(rows(e.execute_optimized(&s.query)).len(), 2);
    assert_eq!(rows(e.execute_naive(&s.query)).len(), 2);
}

#[test]
fn real_int_equality_is_false() {
    let s = scenarios::real_int_equality();
    assert!(rows(load(&s, None).execute_optimized(&s.query)).is_empty());
}

#[test]
fn symmetric_between_null_fetches_only_when_injected() {
    let s = scenarios::symmetric_between_null();
    assert!(rows(load(&s, None).execute_optimized(&s.query)).is_empty());
    assert_eq!(rows(load(&s, s.injection).execute_optimized(&s.query)).len(), 1);
}

#[test]
fn value_corruption_preserves_cardinality() {
    use crate::ast::{BinaryOp, Expression, SelectQuery, Statement};
    use crate::schema::{Collation, ColumnDef, TableDef};
    let setup = vec![
        Statement::CreateTable(TableDef::new(
            "t0",
            vec![ColumnDef::new("c0", "TEXT").unique().collate(Collation::NoCase)],
        )),
        Statement::Insert { table: "t0".into(), columns: vec![], rows: vec![vec![SqlValue::text("Ab")]] },
    ];
    let q = SelectQuery::star(
        &["t0"],
        Some(Expression::binary(BinaryOp::Ge, Expression::col("t0", "c0"), Expression::text("a"))),
    );
    let mut e = ToyEngine::new(Some(BugInjection::ValueCorruption));
    for s in &setup {
        e.execute(s);
    }
    assert_eq!(rows(e.execute_optimized(&q)), vec![vec![SqlValue::text("ab")]]);
    assert_eq!(rows(e.execute_naive(&q)), vec![vec![SqlValue::text("Ab")]]);
}

#[test]
fn select_one() {
    use crate::ast::{Expression, SelectItem, SelectList, SelectQuery, Statement};
    use crate::schema::{ColumnDef, TableDef};
    let mut e = ToyEngine::reference();
    e.execute(&Statement::CreateTable(TableDef::new("t0", vec![ColumnDef::new("c0", "")])));
    e.execute(&Statement::Insert { table: "t0".into(), columns: vec![], rows: vec![vec![SqlValue::Null]] });
    let mut q = SelectQuery::star(&["t0"], None);
    q.select_list = SelectList::Items(vec![SelectItem::Expr { expr: Expression::int(1), alias: None }]);
    assert_eq!(rows(e.execute(&Statement::Select(q))), vec![vec![SqlValue::Integer(1)]]);
}

#[test]
fn row_budget_times_out() {
    let s = scenarios::cross_product_is_null();
    let e = load(&s, None).with_row_budget(1);
    assert_eq!(e.execute_naive(&s.query), EngineResult::Timeout);
}

#[test]
fn injection_names_round_trip() {
    for b in BugInjection::ALL {
        assert_eq!(b.name().parse::<BugInjection>().unwrap(), b);
    }
    assert_eq!("LikeRangeSkip".parse::<BugInjection>().unwrap(), BugInjection::LikeRangeSkip);
}
