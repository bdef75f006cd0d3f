//! One database iteration: generate, populate, then run oracle checks.

use serde::{Deserialize, Serialize};

use crate::ast::Statement;
use crate::engine::{EngineResult, Executor};
use crate::finding::{ErrorRecord, FindingKind};
use crate::generator::{GenConfig, Generator};
use crate::oracle::{run_check, run_content_check, CheckError, CountStrategy, OracleMode, OracleVerdict, SkipReason};
use crate::reducer::{error_class, TestCase, VerdictClass};
use crate::render::render_statement;

/// Counters for a stretch of work; [`Tally::merge`] adds them up.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub databases: u64,
    pub checks: u64,
    pub consistent: u64,
    pub discrepancies: u64,
    pub skipped_expected_error: u64,
    pub skipped_timeout: u64,
    pub unexpected_errors: u64,
    pub crashes: u64,
    /// Statements sent to the engine, setup and oracle queries alike.
    pub statements: u64,
    /// Statements rejected as syntactically or semantically malformed.
    pub invalid_statements: u64,
    /// Queries that could not be rendered for the dialect.
    pub render_failures: u64,
}

impl Tally {
    pub fn merge(&mut self, o: &Tally) {
        self.databases += o.databases;
        self.checks += o.checks;
        self.consistent += o.consistent;
        self.discrepancies += o.discrepancies;
        self.skipped_expected_error += o.skipped_expected_error;
        self.skipped_timeout += o.skipped_timeout;
        self.unexpected_errors += o.unexpected_errors;
        self.crashes += o.crashes;
        self.statements += o.statements;
        self.invalid_statements += o.invalid_statements;
        self.render_failures += o.render_failures;
    }

    /// Fraction of issued statements the engine accepted as well-formed.
    pub fn validity_rate(&self) -> f64 {
        if self.statements == 0 {
            1.0
        } else {
            1.0 - self.invalid_statements as f64 / self.statements as f64
        }
    }
}

/// Errors that mean the statement itself was malformed.
pub fn is_invalid_statement_error(message: &str) -> bool {
    let m = message.to_ascii_lowercase();
    [
        "syntax error",
        "no such column",
        "no such table",
        "no such function",
        "ambiguous column",
        "wrong number of arguments",
        "unrecognized token",
    ]
    .iter()
    .any(|p| m.contains(p))
}

/// An unreduced failure.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub kind: FindingKind,
    pub test_case: TestCase,
    pub verdict: Option<OracleVerdict>,
    pub error: Option<ErrorRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub generator: GenConfig,
    pub queries_per_database: usize,
    pub mode: OracleMode,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig { generator: GenConfig::default(), queries_per_database: 100, mode: OracleMode::Count }
    }
}

/// Seed of database `index` in a campaign seeded with `seed`.
pub fn database_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs database iteration `index` on a fresh `executor`, reporting each
/// failure through `on_candidate`. Stops early after a crash.
pub fn run_database<E: Executor + ?Sized>(
    executor: &mut E,
    config: &SessionConfig,
    campaign_seed: u64,
    index: u64,
    on_candidate: &mut dyn FnMut(Candidate),
) -> Tally {
    let dialect = executor.dialect().clone();
    let seed = database_seed(campaign_seed, index);
    let mut generator = Generator::with_seed(seed, &config.generator, &dialect);
    let mut tally = Tally { databases: 1, ..Tally::default() };
    let (schema, mut statements) = generator.generate_schema();
    statements.extend(generator.populate(&schema));

    let mut setup: Vec<Statement> = Vec::with_capacity(statements.len());
    for g in statements {
        tally.statements += 1;
        let result = executor.execute(&g.stmt);
        setup.push(g.stmt);
        let (message, crashed) = match result {
            EngineResult::Rows { .. } | EngineResult::Timeout => continue,
            EngineResult::Error(m) if g.expected_errors.iter().any(|p| m.contains(p.as_str())) => continue,
            EngineResult::Error(m) => (m, false),
            EngineResult::Crash(m) => (m, true),
        };
        if is_invalid_statement_error(&message) {
            tally.invalid_statements += 1;
        }
        let last = setup.last().expect("just pushed");
        let statement = render_statement(last, &dialect).unwrap_or_default();
        let class = if crashed {
            tally.crashes += 1;
            VerdictClass::Crash
        } else {
            tally.unexpected_errors += 1;
            VerdictClass::UnexpectedError { pattern: error_class(&message) }
        };
        on_candidate(Candidate {
            kind: FindingKind::for_class(&class),
            test_case: TestCase {
                setup: setup.clone(),
                query: None,
                dialect: dialect.clone(),
                seed,
                verdict_class: class,
                mode: config.mode,
                strategy: CountStrategy::NaiveIteration,
            },
            verdict: None,
            error: Some(ErrorRecord { statement, message }),
        });
        if crashed {
            return tally;
        }
    }

    for i in 0..config.queries_per_database {
        let q = generator.generate_optimized_query(&schema);
        let check_index = index.wrapping_mul(config.queries_per_database as u64).wrapping_add(i as u64);
        let strategy = CountStrategy::for_check(check_index);
        tally.checks += 1;
        tally.statements += 2;
        let result = match config.mode {
            OracleMode::Count => run_check(executor, &q, strategy, &dialect),
            OracleMode::Content => run_content_check(executor, &q, &schema, &dialect),
        };
        let test_case = |class: VerdictClass| TestCase {
            setup: setup.clone(),
            query: Some(q.clone()),
            dialect: dialect.clone(),
            seed,
            verdict_class: class,
            mode: config.mode,
            strategy,
        };
        match result {
            Ok(OracleVerdict::Consistent { .. }) => tally.consistent += 1,
            Ok(OracleVerdict::Skipped(SkipReason::Timeout { .. })) => tally.skipped_timeout += 1,
            Ok(OracleVerdict::Skipped(SkipReason::ExpectedError { .. })) => tally.skipped_expected_error += 1,
            Ok(v @ OracleVerdict::Discrepancy(_)) => {
                tally.discrepancies += 1;
                on_candidate(Candidate {
                    kind: FindingKind::OptimizationBug,
                    test_case: test_case(VerdictClass::Discrepancy),
                    verdict: Some(v.with_seed(seed)),
                    error: None,
                });
            }
            Err(CheckError::UnexpectedEngineError { statement, message, .. }) => {
                tally.unexpected_errors += 1;
                if is_invalid_statement_error(&message) {
                    tally.invalid_statements += 1;
                }
                let class = VerdictClass::UnexpectedError { pattern: error_class(&message) };
                on_candidate(Candidate {
                    kind: FindingKind::ErrorBug,
                    test_case: test_case(class),
                    verdict: None,
                    error: Some(ErrorRecord { statement, message }),
                });
            }
            Err(CheckError::EngineCrash { statement, message }) => {
                tally.crashes += 1;
                on_candidate(Candidate {
                    kind: FindingKind::CrashBug,
                    test_case: test_case(VerdictClass::Crash),
                    verdict: None,
                    error: Some(ErrorRecord { statement, message }),
                });
                return tally;
            }
            Err(CheckError::Unsupported(_)) => {
                tally.statements -= 2;
                tally.render_failures += 1;
            }
        }
    }
    tally
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::toy::{BugInjection, ToyEngine};

    fn run(injection: Option<BugInjection>, databases: u64) -> (Tally, Vec<Candidate>) {
        let config = SessionConfig::default();
        let mut found = Vec::new();
        let mut total = Tally::default();
        for d in 0..databases {
            let mut e = ToyEngine::new(injection);
            total.merge(&run_database(&mut e, &config, 3, d, &mut |c| found.push(c)));
        }
        (total, found)
    }

    #[test]
    fn reference_engine_yields_nothing() {
        let (t, found) = run(None, 20);
        assert!(found.is_empty(), "{:?}", found.first());
        assert_eq!(t.checks, 2000);
        assert_eq!(t.consistent + t.skipped_expected_error + t.skipped_timeout, t.checks);
    }

    #[test]
    fn deterministic_per_database() {
        let (a, fa) = run(Some(BugInjection::LikeRangeSkip), 10);
        let (b, fb) = run(Some(BugInjection::LikeRangeSkip), 10);
        assert_eq!(a, b);
        assert_eq!(fa, fb);
    }

    #[test]
    fn zero_queries() {
        let config = SessionConfig { queries_per_database: 0, ..SessionConfig::default() };
        let mut e = ToyEngine::reference();
        let t = run_database(&mut e, &config, 1, 0, &mut |_| panic!("no candidates expected"));
        assert_eq!(t.checks, 0);
    }

    #[test]
    fn database_seeds_differ() {
        assert_ne!(database_seed(1, 0), database_seed(1, 1));
        assert_ne!(database_seed(1, 0), database_seed(2, 0));
    }
}
