//! AST-level test-case reduction.
//!
//! A candidate is accepted only if it replays to the same [`VerdictClass`]
//! on a fresh executor and is strictly smaller by [`TestCase::size`].

use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::ast::{Expression, JoinKind, SelectQuery, Statement, TableRef};
use crate::dialect::DialectProfile;
use crate::engine::{EngineResult, Executor};
use crate::oracle::{run_check, run_content_check, CheckError, CountStrategy, OracleMode, OracleVerdict};
use crate::render::{render_query, render_statement};
use crate::schema::SchemaDef;
use crate::value::SqlValue;

/// What kind of failure a test case reproduces.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerdictClass {
    Discrepancy,
    /// `pattern` is the normalized message, see [`error_class`].
    UnexpectedError {
        pattern: String,
    },
    Crash,
}

impl fmt::Display for VerdictClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerdictClass::Discrepancy => f.write_str("discrepancy"),
            VerdictClass::UnexpectedError { pattern } => write!(f, "unexpected error ({pattern})"),
            VerdictClass::Crash => f.write_str("crash"),
        }
    }
}

/// Normalizes an engine error message: quoted text, identifiers containing
/// digits and numbers become `?`.
pub fn error_class(message: &str) -> String {
    let mut out = String::new();
    let mut chars = message.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\'' || c == '"' {
            for d in chars.by_ref() {
                if d == c {
                    break;
                }
            }
            out.push('?');
        } else if c.is_alphanumeric() || c == '_' || c == '.' {
            let mut word = String::from(c);
            while let Some(&d) = chars.peek() {
                if d.is_alphanumeric() || d == '_' || d == '.' {
                    word.push(d);
                    chars.next();
                } else {
                    break;
                }
            }
            if word.chars().any(|d| d.is_ascii_digit()) {
                out.push('?');
            } else {
                out.push_str(&word.to_ascii_lowercase());
            }
        } else {
            out.push(c);
        }
    }
    out.trim().to_string()
}

/// A replayable failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub setup: Vec<Statement>,
    /// Absent when a setup statement itself fails.
    pub query: Option<SelectQuery>,
    pub dialect: DialectProfile,
    pub seed: u64,
    pub verdict_class: VerdictClass,
    pub mode: OracleMode,
    pub strategy: CountStrategy,
}

/// The first failure observed while replaying a test case.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub class: Option<VerdictClass>,
    pub verdict: Option<OracleVerdict>,
    /// `(statement, message)` of an unexpected error or crash.
    pub error: Option<(String, String)>,
}

impl TestCase {
    /// Tables and indexes created by the setup statements.
    pub fn schema(&self) -> SchemaDef {
        let mut schema = SchemaDef::default();
        for s in &self.setup {
            match s {
                Statement::CreateTable(t) => schema.tables.push(t.clone()),
                Statement::CreateIndex(i) => schema.indexes.push(i.clone()),
                _ => {}
            }
        }
        schema
    }

    /// Rendered length, then the number of unusual constants.
    pub fn size(&self) -> (usize, usize) {
        let mut len = 0;
        let mut odd = 0;
        for s in &self.setup {
            len += render_statement(s, &self.dialect).map(|t| t.len()).unwrap_or(usize::MAX / 4);
            odd += statement_oddness(s);
        }
        if let Some(q) = &self.query {
            len += render_query(q, &self.dialect).map(|t| t.len()).unwrap_or(usize::MAX / 4);
            odd += q.expressions().iter().map(|e| expr_oddness(e)).sum::<usize>();
        }
        (len, odd)
    }

    /// Runs the setup and the check on `executor`.
    pub fn replay<E: Executor + ?Sized>(&self, executor: &mut E) -> Replay {
        for s in &self.setup {
            let sql = render_statement(s, &self.dialect).unwrap_or_default();
            match executor.execute(s) {
                EngineResult::Rows { .. } | EngineResult::Timeout => {}
                EngineResult::Error(m) => {
                    if self.dialect.match_expected(s.kind(), &m).is_none() {
                        return Replay {
                            class: Some(VerdictClass::UnexpectedError { pattern: error_class(&m) }),
                            verdict: None,
                            error: Some((sql, m)),
                        };
                    }
                }
                EngineResult::Crash(m) => {
                    return Replay { class: Some(VerdictClass::Crash), verdict: None, error: Some((sql, m)) };
                }
            }
        }
        let Some(q) = &self.query else {
            return Replay { class: None, verdict: None, error: None };
        };
        let result = match self.mode {
            OracleMode::Count => run_check(executor, q, self.strategy, &self.dialect),
            OracleMode::Content => run_content_check(executor, q, &self.schema(), &self.dialect),
        };
        match result {
            Ok(v) => {
                Replay { class: v.is_discrepancy().then_some(VerdictClass::Discrepancy), verdict: Some(v), error: None }
            }
            Err(CheckError::UnexpectedEngineError { statement, message, .. }) => Replay {
                class: Some(VerdictClass::UnexpectedError { pattern: error_class(&message) }),
                verdict: None,
                error: Some((statement, message)),
            },
            Err(CheckError::EngineCrash { statement, message }) => {
                Replay { class: Some(VerdictClass::Crash), verdict: None, error: Some((statement, message)) }
            }
            Err(CheckError::Unsupported(_)) => Replay { class: None, verdict: None, error: None },
        }
    }
}

fn is_simple(v: &SqlValue) -> bool {
    match v {
        SqlValue::Null => true,
        SqlValue::Integer(i) => *i == 0 || *i == 1,
        SqlValue::Text(s) => s.is_empty() || s == "a",
        _ => false,
    }
}

fn expr_oddness(e: &Expression) -> usize {
    let mut n = 0;
    e.walk(&mut |x| {
        if let Expression::Constant(v) = x {
            n += usize::from(!is_simple(v));
        }
    });
    n
}

fn statement_oddness(s: &Statement) -> usize {
    let values = match s {
        Statement::Insert { rows, .. } => rows.iter().flatten().filter(|v| !is_simple(v)).count(),
        _ => 0,
    };
    values + s.expressions().iter().map(|e| expr_oddness(e)).sum::<usize>()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReduceError {
    /// The initial replay did not show the recorded verdict class.
    NotReproducible { observed: Option<VerdictClass> },
}

impl fmt::Display for ReduceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReduceError::NotReproducible { observed: Some(c) } => write!(f, "not reproducible: replay showed {c}"),
            ReduceError::NotReproducible { observed: None } => f.write_str("not reproducible: replay passed"),
        }
    }
}

impl std::error::Error for ReduceError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReduceBudget {
    pub max_replays: usize,
    /// Wall-clock limit; `None` on targets without a clock.
    pub time_limit: Option<Duration>,
}

impl Default for ReduceBudget {
    fn default() -> Self {
        ReduceBudget { max_replays: 5000, time_limit: Some(Duration::from_secs(60)) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub test_case: TestCase,
    pub replays: usize,
    /// False when the budget ran out before a fixpoint.
    pub complete: bool,
}

struct Reducer<F> {
    factory: F,
    budget: ReduceBudget,
    started: Option<Instant>,
    replays: usize,
    exhausted: bool,
    best: TestCase,
}

impl<E: Executor, F: FnMut() -> E> Reducer<F> {
    fn out_of_budget(&mut self) -> bool {
        if self.replays >= self.budget.max_replays {
            self.exhausted = true;
        }
        if let (Some(limit), Some(start)) = (self.budget.time_limit, self.started) {
            if start.elapsed() >= limit {
                self.exhausted = true;
            }
        }
        self.exhausted
    }

    fn reproduces(&mut self, tc: &TestCase) -> bool {
        self.replays += 1;
        let mut e = (self.factory)();
        tc.replay(&mut e).class.as_ref() == Some(&tc.verdict_class)
    }

    /// Adopts `candidate` if it is smaller and still reproduces.
    fn try_accept(&mut self, candidate: TestCase) -> bool {
        if self.out_of_budget() || candidate.size() >= self.best.size() {
            return false;
        }
        if self.reproduces(&candidate) {
            self.best = candidate;
            true
        } else {
            false
        }
    }

    /// Delta debugging over the setup statements.
    fn statements(&mut self) -> bool {
        let mut changed = false;
        let mut chunk = self.best.setup.len().div_ceil(2).max(1);
        loop {
            let mut start = 0;
            while start < self.best.setup.len() && !self.exhausted {
                let mut c = self.best.clone();
                let end = (start + chunk).min(c.setup.len());
                c.setup.drain(start..end);
                if self.try_accept(c) {
                    changed = true;
                } else {
                    start += chunk;
                }
            }
            if chunk == 1 || self.exhausted {
                break;
            }
            chunk = chunk.div_ceil(2);
        }
        // Individual INSERT rows.
        let mut i = 0;
        while i < self.best.setup.len() && !self.exhausted {
            let mut r = 0;
            while !self.exhausted {
                let Statement::Insert { rows, .. } = &self.best.setup[i] else { break };
                if rows.len() <= 1 || r >= rows.len() {
                    break;
                }
                let mut c = self.best.clone();
                if let Statement::Insert { rows, .. } = &mut c.setup[i] {
                    rows.remove(r);
                }
                if self.try_accept(c) {
                    changed = true;
                } else {
                    r += 1;
                }
            }
            i += 1;
        }
        changed
    }

    /// Replaces expression nodes by one of their children and drops
    /// optional query clauses.
    fn hoist(&mut self) -> bool {
        let mut changed = false;
        if let Some(q) = self.best.query.clone() {
            let mut clause_variants = Vec::new();
            if !q.order_by.is_empty() {
                clause_variants.push(SelectQuery { order_by: vec![], ..q.clone() });
            }
            if !q.group_by.is_empty() {
                clause_variants.push(SelectQuery { group_by: vec![], ..q.clone() });
            }
            if q.where_clause.is_some() {
                clause_variants.push(SelectQuery { where_clause: None, ..q.clone() });
            }
            for j in 0..q.joins.len() {
                let mut v = q.clone();
                v.joins.remove(j);
                clause_variants.push(v);
                if let Some(on) = &q.joins[j].on {
                    let mut v = q.clone();
                    v.joins[j].on = None;
                    v.joins[j].kind = JoinKind::Cross;
                    if matches!(q.joins[j].kind, JoinKind::Inner) {
                        v.where_clause = Some(match v.where_clause.take() {
                            Some(w) => Expression::and(on.clone(), w),
                            None => on.clone(),
                        });
                    }
                    clause_variants.push(v);
                }
            }
            for j in 1..q.from.len() {
                if matches!(q.from[j], TableRef::Named(_)) {
                    let mut v = q.clone();
                    v.from.remove(j);
                    clause_variants.push(v);
                }
            }
            for v in clause_variants {
                let mut c = self.best.clone();
                c.query = Some(v);
                if self.try_accept(c) {
                    changed = true;
                    break;
                }
            }
        }
        changed |= self.rewrite_nodes(|e| e.children().into_iter().cloned().collect());
        changed
    }

    /// Tries every replacement `variants` offers for every expression node
    /// of the query and the setup statements.
    fn rewrite_nodes(&mut self, variants: impl Fn(&Expression) -> Vec<Expression>) -> bool {
        let mut changed = false;
        let mut slot = 0;
        while let Some(current) = nth_node(&mut self.best.clone(), slot).map(|e| e.clone()) {
            let mut accepted = false;
            for v in variants(&current) {
                if self.exhausted {
                    return changed;
                }
                let mut c = self.best.clone();
                if let Some(node) = nth_node(&mut c, slot) {
                    *node = v;
                }
                if self.try_accept(c) {
                    accepted = true;
                    changed = true;
                    break;
                }
            }
            if !accepted {
                slot += 1;
            }
        }
        changed
    }

    fn constants(&mut self) -> bool {
        let simple =
            [SqlValue::Null, SqlValue::Integer(0), SqlValue::Integer(1), SqlValue::text(""), SqlValue::text("a")];
        let mut changed = self.rewrite_nodes(|e| match e {
            Expression::Constant(v) if !is_simple(v) => simple.iter().cloned().map(Expression::Constant).collect(),
            Expression::Constant(_) => vec![],
            _ => simple.iter().cloned().map(Expression::Constant).collect(),
        });
        for i in 0..self.best.setup.len() {
            let Statement::Insert { rows, .. } = &self.best.setup[i] else { continue };
            let cells: Vec<(usize, usize)> =
                rows.iter().enumerate().flat_map(|(r, row)| (0..row.len()).map(move |c| (r, c))).collect();
            for (r, col) in cells {
                for v in &simple {
                    if self.exhausted {
                        return changed;
                    }
                    let mut c = self.best.clone();
                    if let Statement::Insert { rows, .. } = &mut c.setup[i] {
                        if rows[r][col] == *v {
                            break;
                        }
                        rows[r][col] = v.clone();
                    }
                    if self.try_accept(c) {
                        changed = true;
                        break;
                    }
                }
            }
        }
        changed
    }

    /// Drops columns, constraints, collations and declared types.
    fn ddl(&mut self) -> bool {
        let mut changed = false;
        for i in 0..self.best.setup.len() {
            let mut candidates = Vec::new();
            match &self.best.setup[i] {
                Statement::CreateTable(t) => {
                    for (ci, col) in t.columns.iter().enumerate() {
                        if t.columns.len() > 1 {
                            candidates.push(drop_column(&self.best, i, ci));
                        }
                        let mut edits = Vec::new();
                        if col.unique || col.primary_key {
                            let mut c = col.clone();
                            c.unique = false;
                            c.primary_key = false;
                            edits.push(c);
                        }
                        if col.collation.is_some() {
                            let mut c = col.clone();
                            c.collation = None;
                            edits.push(c);
                        }
                        if !col.declared_type.is_empty() {
                            let mut c = col.clone();
                            c.declared_type.clear();
                            edits.push(c);
                        }
                        for c in edits {
                            let mut tc = self.best.clone();
                            if let Statement::CreateTable(t) = &mut tc.setup[i] {
                                t.columns[ci] = c;
                            }
                            candidates.push(Some(tc));
                        }
                    }
                }
                Statement::CreateIndex(ix) => {
                    let mut tc = self.best.clone();
                    if let Statement::CreateIndex(x) = &mut tc.setup[i] {
                        if ix.unique {
                            x.unique = false;
                        } else if ix.partial_predicate.is_some() {
                            x.partial_predicate = None;
                        } else if ix.keys.len() > 1 {
                            x.keys.pop();
                        }
                    }
                    candidates.push(Some(tc));
                }
                _ => {}
            }
            for c in candidates.into_iter().flatten() {
                if self.exhausted {
                    return changed;
                }
                if self.try_accept(c) {
                    changed = true;
                    break;
                }
            }
        }
        changed
    }
}

/// Removes column `ci` of the table created by statement `at`, together
/// with the matching INSERT values.
fn drop_column(tc: &TestCase, at: usize, ci: usize) -> Option<TestCase> {
    let mut out = tc.clone();
    let Statement::CreateTable(t) = &mut out.setup[at] else { return None };
    let table = t.name.clone();
    let name = t.columns.remove(ci).name;
    for s in out.setup.iter_mut().skip(at + 1) {
        if let Statement::Insert { table: target, columns, rows } = s {
            if *target != table {
                continue;
            }
            let pos = if columns.is_empty() { Some(ci) } else { columns.iter().position(|c| *c == name) };
            if let Some(p) = pos {
                if !columns.is_empty() {
                    columns.remove(p);
                    if columns.is_empty() {
                        return None;
                    }
                }
                for r in rows.iter_mut() {
                    if p < r.len() {
                        r.remove(p);
                    }
                }
            }
        }
    }
    Some(out)
}

/// The `n`-th expression node in pre-order over the query, then the setup.
fn nth_node(tc: &mut TestCase, mut n: usize) -> Option<&mut Expression> {
    fn visit<'a>(e: &'a mut Expression, n: &mut usize) -> Option<&'a mut Expression> {
        if *n == 0 {
            return Some(e);
        }
        *n -= 1;
        for c in e.children_mut() {
            if let Some(found) = visit(c, n) {
                return Some(found);
            }
        }
        None
    }
    let mut roots: Vec<&mut Expression> = Vec::new();
    if let Some(q) = tc.query.as_mut() {
        roots.extend(q.where_clause.iter_mut());
        roots.extend(q.joins.iter_mut().filter_map(|j| j.on.as_mut()));
    }
    for s in tc.setup.iter_mut() {
        match s {
            Statement::CreateIndex(ix) => roots.extend(ix.partial_predicate.iter_mut()),
            Statement::Update { assignments, predicate, .. } => {
                roots.extend(assignments.iter_mut().map(|(_, e)| e));
                roots.extend(predicate.iter_mut());
            }
            Statement::Delete { predicate, .. } => roots.extend(predicate.iter_mut()),
            _ => {}
        }
    }
    for r in roots {
        if let Some(found) = visit(r, &mut n) {
            return Some(found);
        }
    }
    None
}

/// Shrinks `tc` while it keeps reproducing its verdict class on executors
/// produced by `factory`.
pub fn reduce<E, F>(tc: &TestCase, factory: F, budget: ReduceBudget) -> Result<Reduction, ReduceError>
where
    E: Executor,
    F: FnMut() -> E,
{
    let mut r = Reducer {
        factory,
        budget,
        started: budget.time_limit.map(|_| Instant::now()),
        replays: 0,
        exhausted: false,
        best: tc.clone(),
    };
    let observed = {
        r.replays += 1;
        let mut e = (r.factory)();
        tc.replay(&mut e).class
    };
    if observed.as_ref() != Some(&tc.verdict_class) {
        return Err(ReduceError::NotReproducible { observed });
    }
    loop {
        let mut changed = r.statements();
        changed |= r.hoist();
        changed |= r.constants();
        changed |= r.ddl();
        if !changed || r.exhausted {
            break;
        }
    }
    Ok(Reduction { test_case: r.best, replays: r.replays, complete: !r.exhausted })
}
