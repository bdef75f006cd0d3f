//! Browser bindings. Every export returns a JSON string; errors become
//! JavaScript exceptions carrying a message.

use norec_core::generator::{GenConfig, Generator};
use norec_core::oracle::{build_optimized_count_query, build_unoptimized_sum_query, run_check, translate, OracleMode};
use norec_core::reducer::{ReduceBudget, TestCase};
use norec_core::render::{render_query, render_statement};
use norec_core::session::{run_database, Candidate, SessionConfig, Tally};
use norec_core::{
    reduce, scenarios, BugInjection, CountStrategy, EngineResult, Executor, Finding, OracleVerdict, SelectQuery,
    Statement, ToyEngine,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct ScenarioInfo {
    pub name: &'static str,
    pub summary: &'static str,
    pub injection: Option<&'static str>,
}

#[derive(Debug, Serialize)]
pub struct EngineRun {
    pub engine: String,
    pub strategy: String,
    pub optimized: Option<u64>,
    pub unoptimized: Option<u64>,
    pub verdict: String,
}

#[derive(Debug, Serialize)]
pub struct ScenarioReport {
    pub name: &'static str,
    pub setup: Vec<String>,
    pub query: String,
    pub optimized_sql: String,
    pub unoptimized_sql: String,
    pub runs: Vec<EngineRun>,
}

#[derive(Debug, Serialize)]
pub struct Translation {
    pub seed: u64,
    pub setup: Vec<String>,
    pub query: String,
    pub translated: String,
    pub optimized_sql: String,
    pub unoptimized_sql: String,
    pub run: EngineRun,
}

#[derive(Debug, Serialize)]
pub struct FuzzReport {
    pub tally: Tally,
    pub found: bool,
    pub kind: Option<String>,
    pub fingerprint: Option<String>,
    pub original_statements: usize,
    pub reduced_statements: usize,
    pub replays: usize,
    pub reproducer: Option<String>,
}

fn parse_injection(name: &str) -> Result<Option<BugInjection>, String> {
    match name.trim() {
        "" | "none" => Ok(None),
        n => n.parse().map(Some).map_err(|_| format!("unknown injection `{n}`")),
    }
}

fn engine_label(injection: Option<BugInjection>) -> String {
    injection.map_or_else(|| "reference".to_string(), |i| i.name().to_string())
}

fn check(engine: &mut ToyEngine, q: &SelectQuery, strategy: CountStrategy) -> EngineRun {
    let dialect = engine.dialect().clone();
    let engine_name = engine_label(engine.injection());
    let (optimized, unoptimized, verdict) = match run_check(engine, q, strategy, &dialect) {
        Ok(v) => {
            let (o, u) = v.counts().unzip();
            let verdict = match v {
                OracleVerdict::Consistent { .. } => "consistent".to_string(),
                OracleVerdict::Discrepancy(_) => "discrepancy".to_string(),
                OracleVerdict::Skipped(r) => format!("skipped: {r:?}"),
            };
            (o, u, verdict)
        }
        Err(e) => (None, None, e.to_string()),
    };
    EngineRun { engine: engine_name, strategy: strategy.to_string(), optimized, unoptimized, verdict }
}

fn render_all(stmts: &[Statement], engine: &ToyEngine) -> Vec<String> {
    stmts.iter().filter_map(|s| render_statement(s, engine.dialect()).ok()).collect()
}

fn oracle_sql(q: &SelectQuery, engine: &ToyEngine) -> Result<(String, String), String> {
    let dialect = engine.dialect();
    let (opt, _) = build_optimized_count_query(q, CountStrategy::NaiveIteration);
    let unopt = build_unoptimized_sum_query(&translate(q), dialect);
    Ok((
        render_statement(&opt, dialect).map_err(|e| e.to_string())?,
        render_statement(&unopt, dialect).map_err(|e| e.to_string())?,
    ))
}

pub fn scenario_list() -> Vec<ScenarioInfo> {
    scenarios::all()
        .into_iter()
        .map(|s| ScenarioInfo { name: s.name, summary: s.summary, injection: s.injection.map(|i| i.name()) })
        .collect()
}

/// Runs a scenario on the reference engine and, if it has one, on its faulty
/// engine, with both counting strategies.
pub fn scenario_report(name: &str) -> Result<ScenarioReport, String> {
    let s = scenarios::by_name(name).ok_or_else(|| format!("unknown scenario `{name}`"))?;
    let mut engines = vec![None];
    engines.extend(s.injection.map(Some));
    let mut runs = Vec::new();
    for injection in engines {
        for strategy in [CountStrategy::NaiveIteration, CountStrategy::AggregateCount] {
            let mut engine = ToyEngine::new(injection);
            for st in &s.setup {
                if let EngineResult::Error(e) | EngineResult::Crash(e) = engine.execute(st) {
                    return Err(format!("setup failed: {e}"));
                }
            }
            runs.push(check(&mut engine, &s.query, strategy));
        }
    }
    let engine = ToyEngine::new(None);
    let (optimized_sql, unoptimized_sql) = oracle_sql(&s.query, &engine)?;
    Ok(ScenarioReport {
        name: s.name,
        setup: render_all(&s.setup, &engine),
        query: render_query(&s.query, engine.dialect()).map_err(|e| e.to_string())?,
        optimized_sql,
        unoptimized_sql,
        runs,
    })
}

/// Generates one database and one query, shows its translation and checks it.
pub fn random_translation(seed: u64, injection: &str) -> Result<Translation, String> {
    let injection = parse_injection(injection)?;
    let mut engine = ToyEngine::new(injection);
    let cfg = GenConfig { max_rows: 8, max_expr_depth: 4, ..GenConfig::default() };
    let mut g = Generator::with_seed(seed, &cfg, engine.dialect());
    let (schema, ddl) = g.generate_schema();
    let dml = g.populate(&schema);
    let setup: Vec<Statement> = ddl.into_iter().chain(dml).map(|s| s.stmt).collect();
    for st in &setup {
        engine.execute(st);
    }
    let q = g.generate_optimized_query(&schema);
    let (optimized_sql, unoptimized_sql) = oracle_sql(&q, &engine)?;
    let dialect = engine.dialect().clone();
    Ok(Translation {
        seed,
        setup: render_all(&setup, &engine),
        query: render_query(&q, &dialect).map_err(|e| e.to_string())?,
        translated: render_query(&translate(&q), &dialect).map_err(|e| e.to_string())?,
        optimized_sql,
        unoptimized_sql,
        run: check(&mut engine, &q, CountStrategy::NaiveIteration),
    })
}

/// Runs databases until the first finding or `max_databases`, then reduces it.
pub fn fuzz_report(seed: u64, injection: &str, max_databases: u64, content: bool) -> Result<FuzzReport, String> {
    let injection = parse_injection(injection)?;
    let session = SessionConfig {
        generator: GenConfig::default(),
        queries_per_database: 100,
        mode: if content { OracleMode::Content } else { OracleMode::Count },
    };
    let mut tally = Tally::default();
    let mut found: Option<Candidate> = None;
    for index in 0..max_databases {
        let mut engine = ToyEngine::new(injection);
        let t = run_database(&mut engine, &session, seed, index, &mut |c| {
            found.get_or_insert(c);
        });
        tally.merge(&t);
        if found.is_some() {
            break;
        }
    }
    let Some(c) = found else {
        return Ok(FuzzReport {
            tally,
            found: false,
            kind: None,
            fingerprint: None,
            original_statements: 0,
            reduced_statements: 0,
            replays: 0,
            reproducer: None,
        });
    };
    let original_statements = c.test_case.setup.len();
    let budget = ReduceBudget { max_replays: 2000, time_limit: None };
    let (test_case, replays): (TestCase, usize) = match reduce(&c.test_case, || ToyEngine::new(injection), budget) {
        Ok(r) => (r.test_case, r.replays),
        Err(_) => (c.test_case, 0),
    };
    let replay = test_case.replay(&mut ToyEngine::new(injection));
    let error =
        replay.error.map(|(statement, message)| norec_core::finding::ErrorRecord { statement, message }).or(c.error);
    let finding = Finding::new(c.kind, test_case, replay.verdict.or(c.verdict), error, injection, 0);
    Ok(FuzzReport {
        tally,
        found: true,
        kind: Some(finding.kind.name().to_string()),
        fingerprint: Some(finding.fingerprint.clone()),
        original_statements,
        reduced_statements: finding.test_case.setup.len(),
        replays,
        reproducer: Some(norec_core::finding::reproduce_sql(&finding)),
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string())).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn scenarios() -> Result<String, JsValue> {
    to_js(Ok(scenario_list()))
}

#[wasm_bindgen]
pub fn injections() -> String {
    let names: Vec<&str> = BugInjection::ALL.iter().map(|i| i.name()).collect();
    serde_json::to_string(&names).unwrap_or_default()
}

#[wasm_bindgen]
pub fn run_scenario(name: &str) -> Result<String, JsValue> {
    to_js(scenario_report(name))
}

#[wasm_bindgen]
pub fn translate_random(seed: u32, injection: &str) -> Result<String, JsValue> {
    to_js(random_translation(u64::from(seed), injection))
}

#[wasm_bindgen]
pub fn fuzz(seed: u32, injection: &str, max_databases: u32, content: bool) -> Result<String, JsValue> {
    to_js(fuzz_report(u64::from(seed), injection, u64::from(max_databases), content))
}
