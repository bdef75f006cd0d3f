//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Positional arguments select criteria by number (`cargo test --test
//! acceptance -- 3 5`). `NOREC_SMOKE_SECS` shortens the SQLite campaign of
//! criterion 8 (default 600).

use std::path::Path;
use std::time::{Duration, Instant};

use norec_cli::{run_campaign, Backend, CampaignConfig, OracleArg};
use norec_core::ast::{Expression, IsTest, SelectItem, SelectList, SelectQuery, Statement};
use norec_core::dialect::{is_deterministic, DialectProfile};
use norec_core::engine::eval::eval_constant;
use norec_core::generator::{GenConfig, Generator};
use norec_core::oracle::{run_check, CountStrategy, OracleMode, OracleVerdict};
use norec_core::reducer::{reduce, ReduceBudget, TestCase, VerdictClass};
use norec_core::schema::{ColumnDef, TableDef};
use norec_core::session::{run_database, SessionConfig};
use norec_core::{scenarios, BugInjection, EngineResult, Executor, FindingKind, SqlValue, ToyEngine};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn campaign(out: &Path, seed: u64, injection: Option<BugInjection>, databases: u64, queries: usize) -> CampaignConfig {
    CampaignConfig {
        backend: Backend::Toy,
        injection,
        oracle: OracleArg::Count,
        seed,
        queries,
        databases,
        workers: 4,
        out: out.join(format!("{}-{seed}", injection.map(|i| i.name()).unwrap_or("none"))),
        ..CampaignConfig::default()
    }
}

fn oracle_soundness(dir: &Path) -> Outcome {
    let start = Instant::now();
    let (mut checks, mut discrepancies, mut errors, mut skipped) = (0, 0, 0, 0);
    for seed in 0..10 {
        let s = match run_campaign(&campaign(dir, seed, None, 100, 100)) {
            Ok(s) => s,
            Err(e) => return outcome(false, format!("seed {seed}: {e:#}")),
        };
        checks += s.tally.checks;
        discrepancies += s.tally.discrepancies;
        errors += s.tally.unexpected_errors + s.tally.crashes;
        skipped += s.tally.skipped_expected_error + s.tally.skipped_timeout;
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        checks == 100_000 && discrepancies == 0 && errors == 0 && secs < 600.0,
        format!(
            "{checks} checks, {discrepancies} discrepancies, {errors} unexpected errors, {skipped} skipped, {secs:.0}s"
        ),
    )
}

fn injected_sensitivity(dir: &Path) -> Outcome {
    let injections = [
        BugInjection::LikeRangeSkip,
        BugInjection::InToEqAffinity,
        BugInjection::CommuteDropsCollation,
        BugInjection::NullFilterAsFalse,
        BugInjection::StringRangeBound,
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for inj in injections {
        let start = Instant::now();
        let mut hits = 0;
        for seed in 0..5 {
            match run_campaign(&campaign(dir, seed, Some(inj), 100, 100)) {
                Ok(s) if s.count(FindingKind::OptimizationBug) > 0 => hits += 1,
                Ok(_) => {}
                Err(e) => return outcome(false, format!("{inj} seed {seed}: {e:#}")),
            }
        }
        let secs = start.elapsed().as_secs_f64();
        pass &= hits >= 4 && secs < 300.0;
        parts.push(format!("{inj} {hits}/5 in {secs:.0}s"));
    }
    outcome(pass, parts.join(", "))
}

fn scenario_regressions() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for s in scenarios::all() {
        let mut e = ToyEngine::new(s.injection);
        let setup_ok = s.setup.iter().all(|st| e.execute(st).is_ok());
        let counts = run_check(&mut e, &s.query, CountStrategy::NaiveIteration, &DialectProfile::toy())
            .ok()
            .and_then(|v| v.counts());
        let agg = run_check(&mut e, &s.query, CountStrategy::AggregateCount, &DialectProfile::toy())
            .ok()
            .and_then(|v| v.counts());
        let want = Some((s.expected_optimized, s.expected_unoptimized));
        let ok = setup_ok && counts == want && agg == want;
        pass &= ok;
        match counts {
            Some((o, u)) => parts.push(format!("{} {o}/{u}{}", s.name, if ok { "" } else { " (unexpected)" })),
            None => parts.push(format!("{} no counts", s.name)),
        }
    }
    outcome(pass, parts.join(", "))
}

fn strategy_agreement() -> Outcome {
    let d = DialectProfile::toy();
    let mut g = Generator::with_seed(4242, &GenConfig::default(), &d);
    let (mut compared, mut skipped, mut disagreements) = (0, 0, 0);
    let mut queries = 0;
    while queries < 10_000 {
        let mut e = ToyEngine::reference();
        let (schema, mut stmts) = g.generate_schema();
        stmts.extend(g.populate(&schema));
        for s in &stmts {
            e.execute(&s.stmt);
        }
        for _ in 0..100 {
            queries += 1;
            let q = g.generate_optimized_query(&schema);
            let naive = run_check(&mut e, &q, CountStrategy::NaiveIteration, &d);
            let agg = run_check(&mut e, &q, CountStrategy::AggregateCount, &d);
            match (naive, agg) {
                (Ok(a), Ok(b)) => match (a.counts(), b.counts()) {
                    (Some((a, _)), Some((b, _))) => {
                        compared += 1;
                        disagreements += u32::from(a != b);
                    }
                    _ => skipped += 1,
                },
                _ => disagreements += 1,
            }
        }
    }
    outcome(
        disagreements == 0 && compared > 0,
        format!("{queries} queries, {compared} compared, {skipped} skipped, {disagreements} disagreements"),
    )
}

/// Kleene logic over `Option<bool>`, independent of the engine.
fn kleene_and(a: Option<bool>, b: Option<bool>) -> Option<bool> {
    match (a, b) {
        (Some(false), _) | (_, Some(false)) => Some(false),
        (Some(true), Some(true)) => Some(true),
        _ => None,
    }
}

fn kleene_or(a: Option<bool>, b: Option<bool>) -> Option<bool> {
    kleene_and(a.map(|x| !x), b.map(|x| !x)).map(|x| !x)
}

fn literal(v: Option<bool>) -> Expression {
    v.map(Expression::boolean).unwrap_or_else(Expression::null)
}

fn truth(e: &Expression, engine: &mut ToyEngine) -> Result<(Option<bool>, Option<bool>), String> {
    let direct = eval_constant(e, &DialectProfile::toy()).map_err(|e| e.to_string())?.truth();
    let mut q = SelectQuery::star(&["t0"], None);
    q.select_list = SelectList::Items(vec![SelectItem::Expr { expr: e.clone(), alias: None }]);
    let via_engine = match engine.execute(&Statement::Select(q)) {
        EngineResult::Rows { rows, .. } if rows.len() == 1 => rows[0][0].truth(),
        other => return Err(format!("{other:?}")),
    };
    Ok((direct, via_engine))
}

fn three_valued_logic() -> Outcome {
    let values = [Some(true), Some(false), None];
    let mut engine = ToyEngine::reference();
    engine.execute(&Statement::CreateTable(TableDef::new("t0", vec![ColumnDef::new("c0", "")])));
    engine.execute(&Statement::Insert { table: "t0".into(), columns: vec![], rows: vec![vec![SqlValue::Null]] });
    let mut cells: Vec<(String, Expression, Option<bool>)> = Vec::new();
    for a in values {
        for b in values {
            cells.push((format!("{a:?} AND {b:?}"), Expression::and(literal(a), literal(b)), kleene_and(a, b)));
            cells.push((format!("{a:?} OR {b:?}"), Expression::or(literal(a), literal(b)), kleene_or(a, b)));
        }
        cells.push((format!("NOT {a:?}"), Expression::not(literal(a)), a.map(|x| !x)));
        cells.push((format!("{a:?} IS TRUE"), Expression::is(literal(a), IsTest::True), Some(a == Some(true))));
        cells.push((format!("{a:?} IS FALSE"), Expression::is(literal(a), IsTest::False), Some(a == Some(false))));
        cells.push((format!("{a:?} IS NULL"), Expression::is(literal(a), IsTest::Null), Some(a.is_none())));
    }
    let mut wrong = Vec::new();
    for (name, e, want) in &cells {
        match truth(e, &mut engine) {
            Ok((a, b)) if a == *want && b == *want => {}
            other => wrong.push(format!("{name}: {other:?}")),
        }
    }
    outcome(wrong.is_empty(), format!("{}/{} cells exact {}", cells.len() - wrong.len(), cells.len(), wrong.join("; ")))
}

fn content_mode() -> Outcome {
    let config = SessionConfig { mode: OracleMode::Content, ..SessionConfig::default() };
    let mut checks = 0;
    let mut index = 0;
    while checks < 10_000 {
        let mut found = None;
        let mut e = ToyEngine::new(Some(BugInjection::ValueCorruption));
        let t = run_database(&mut e, &config, 77, index, &mut |c| {
            if c.kind == FindingKind::OptimizationBug && found.is_none() {
                found = Some(c);
            }
        });
        index += 1;
        let Some(c) = found else {
            checks += t.checks;
            continue;
        };
        let mut tc = c.test_case.clone();
        let mut count_verdicts = Vec::new();
        for strategy in [CountStrategy::NaiveIteration, CountStrategy::AggregateCount] {
            tc.mode = OracleMode::Count;
            tc.strategy = strategy;
            let mut e = ToyEngine::new(Some(BugInjection::ValueCorruption));
            count_verdicts.push(tc.replay(&mut e).verdict);
        }
        let consistent = count_verdicts.iter().all(|v| matches!(v, Some(OracleVerdict::Consistent { .. })));
        let row = match &c.verdict {
            Some(OracleVerdict::Discrepancy(d)) => format!("{:?}", d.differing_row),
            _ => String::new(),
        };
        return outcome(
            consistent,
            format!(
                "content discrepancy within {} checks (differing row {row}); count mode consistent: {consistent}",
                checks + t.checks
            ),
        );
    }
    outcome(false, format!("no content discrepancy in {checks} checks"))
}

fn reducer() -> Outcome {
    let s = scenarios::glob_prefix_untyped();
    let mut setup = vec![Statement::CreateTable(TableDef::new(
        "t5",
        vec![ColumnDef::new("c0", "INT"), ColumnDef::new("c1", "TEXT")],
    ))];
    setup.extend(s.setup.clone());
    for i in 0..19 {
        setup.push(Statement::Insert {
            table: "t5".into(),
            columns: vec![],
            rows: vec![vec![SqlValue::Integer(i), SqlValue::text(format!("pad{i}"))]],
        });
    }
    let tc = TestCase {
        setup,
        query: Some(s.query.clone()),
        dialect: DialectProfile::toy(),
        seed: 0,
        verdict_class: VerdictClass::Discrepancy,
        mode: OracleMode::Count,
        strategy: CountStrategy::NaiveIteration,
    };
    let padding = tc.setup.len() - s.setup.len();
    let start = Instant::now();
    let inj = s.injection;
    let r = match reduce(
        &tc,
        || ToyEngine::new(inj),
        ReduceBudget { max_replays: 5000, time_limit: Some(Duration::from_secs(60)) },
    ) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let secs = start.elapsed().as_secs_f64();
    let replay = r.test_case.replay(&mut ToyEngine::new(inj));
    let n = r.test_case.setup.len();
    outcome(
        n <= 3 && replay.class == Some(VerdictClass::Discrepancy) && secs < 60.0,
        format!("{} setup statements ({padding} padding) -> {n}, {} replays, {secs:.2}s", tc.setup.len(), r.replays),
    )
}

fn sqlite_smoke(dir: &Path) -> Outcome {
    let secs: u64 = std::env::var("NOREC_SMOKE_SECS").ok().and_then(|s| s.parse().ok()).unwrap_or(600);
    let config = CampaignConfig {
        backend: Backend::Embedded,
        oracle: OracleArg::Count,
        seed: 8,
        queries: 100,
        databases: 0,
        duration_secs: Some(secs),
        workers: 4,
        timeout_ms: 10_000,
        out: dir.join("sqlite"),
        engine_program: Some(env!("CARGO_BIN_EXE_norec").into()),
        ..CampaignConfig::default()
    };
    let s = match run_campaign(&config) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("harness failure: {e:#}")),
    };
    // Audit every persisted discrepancy for excluded constructs.
    let d = DialectProfile::sqlite();
    let mut audit_failures = 0;
    for f in s.findings.iter().filter(|f| f.kind == FindingKind::OptimizationBug) {
        let Ok(bytes) = std::fs::read(f.path.join("testcase.json")) else {
            audit_failures += 1;
            continue;
        };
        let finding: norec_core::Finding = serde_json::from_slice(&bytes).expect("testcase.json");
        let tc = &finding.test_case;
        let q = tc.query.as_ref();
        let excluded = q.is_some_and(|q| q.distinct || q.has_derived_tables())
            || tc
                .setup
                .iter()
                .chain(q.map(|q| Statement::Select(q.clone())).iter())
                .any(|st| st.expressions().iter().any(|e| !is_deterministic(e, &d)));
        audit_failures += usize::from(excluded);
    }
    let t = &s.tally;
    outcome(
        s.harness_errors.is_empty() && audit_failures == 0 && s.validity_rate >= 0.99,
        format!(
            "{}s, {} databases, {} checks, {} discrepancies ({} unique), {} unexpected errors, {} crashes, validity {:.4}, {} audit failures, {} harness errors",
            secs,
            t.databases,
            t.checks,
            t.discrepancies,
            s.count(FindingKind::OptimizationBug),
            t.unexpected_errors,
            t.crashes,
            s.validity_rate,
            audit_failures,
            s.harness_errors.len()
        ),
    )
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: usize| selected.is_empty() || selected.contains(&n);
    let dir = std::env::temp_dir().join(format!("norec-acceptance-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);

    type Check<'a> = (usize, &'a str, Box<dyn Fn() -> Outcome + Send + Sync + 'a>);
    let checks: Vec<Check> = vec![
        (1, "oracle soundness on the fault-free toy engine", Box::new(|| oracle_soundness(&dir))),
        (2, "injected-bug sensitivity", Box::new(|| injected_sensitivity(&dir))),
        (3, "scenario regressions with exact counts", Box::new(scenario_regressions)),
        (4, "counting strategy agreement", Box::new(strategy_agreement)),
        (5, "three-valued logic truth tables", Box::new(three_valued_logic)),
        (6, "content mode catches value corruption", Box::new(content_mode)),
        (7, "reducer shrinks a padded GLOB case", Box::new(reducer)),
        (8, "embedded SQLite smoke campaign", Box::new(|| sqlite_smoke(&dir))),
    ];
    let results: Vec<(usize, &str, Outcome)> = std::thread::scope(|s| {
        let handles: Vec<_> =
            checks.iter().filter(|(n, _, _)| wanted(*n)).map(|(n, name, f)| (*n, *name, s.spawn(f))).collect();
        handles
            .into_iter()
            .map(|(n, name, h)| (n, name, h.join().unwrap_or_else(|_| outcome(false, "panicked"))))
            .collect()
    });
    let mut failed = 0;
    for (n, name, o) in &results {
        failed += usize::from(!o.pass);
        println!("criterion {n}: {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let _ = std::fs::remove_dir_all(&dir);
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
