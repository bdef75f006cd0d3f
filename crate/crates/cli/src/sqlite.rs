//! Executor backed by SQLite, in process or in a child process.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{mpsc, Arc, Mutex};
use std::time::{Duration, Instant};

use norec_core::dialect::DialectProfile;
use norec_core::render::render_statement;
use norec_core::{EngineResult, Executor, SqlValue, Statement};
use rusqlite::types::ValueRef;
use rusqlite::{Connection, ErrorCode};

pub struct SqliteExecutor {
    conn: Connection,
    dialect: DialectProfile,
    timeout: Duration,
    deadline: Arc<Mutex<Option<Instant>>>,
}

impl SqliteExecutor {
    pub fn in_memory(timeout: Duration) -> rusqlite::Result<Self> {
        Self::with_connection(Connection::open_in_memory()?, timeout)
    }

    /// Opens `path` after deleting any previous database there.
    pub fn fresh_file(path: &Path, timeout: Duration) -> rusqlite::Result<Self> {
        for suffix in ["", "-journal", "-wal", "-shm"] {
            let mut p = path.as_os_str().to_owned();
            p.push(suffix);
            let _ = std::fs::remove_file(PathBuf::from(p));
        }
        Self::with_connection(Connection::open(path)?, timeout)
    }

    fn with_connection(conn: Connection, timeout: Duration) -> rusqlite::Result<Self> {
        let deadline = Arc::new(Mutex::new(None::<Instant>));
        let d = deadline.clone();
        conn.progress_handler(
            1000,
            Some(move || d.lock().map(|t| t.is_some_and(|t| Instant::now() >= t)).unwrap_or(false)),
        );
        conn.execute_batch("PRAGMA journal_mode = MEMORY; PRAGMA synchronous = OFF;")?;
        Ok(SqliteExecutor { conn, dialect: DialectProfile::sqlite(), timeout, deadline })
    }

    fn set_deadline(&self, t: Option<Instant>) {
        if let Ok(mut d) = self.deadline.lock() {
            *d = t;
        }
    }

    pub fn execute_sql(&mut self, sql: &str, is_query: bool) -> EngineResult {
        self.set_deadline(Some(Instant::now() + self.timeout));
        let result =
            if is_query { self.query(sql) } else { self.conn.execute_batch(sql).map(|()| EngineResult::empty()) };
        self.set_deadline(None);
        match result {
            Ok(r) => r,
            Err(e) if e.sqlite_error_code() == Some(ErrorCode::OperationInterrupted) => EngineResult::Timeout,
            Err(rusqlite::Error::SqlInputError { msg, .. }) => EngineResult::Error(msg),
            Err(rusqlite::Error::SqliteFailure(err, msg)) => {
                EngineResult::Error(msg.unwrap_or_else(|| err.to_string()))
            }
            Err(e) => EngineResult::Error(e.to_string()),
        }
    }

    fn query(&self, sql: &str) -> rusqlite::Result<EngineResult> {
        let mut stmt = self.conn.prepare(sql)?;
        let columns: Vec<String> = stmt.column_names().iter().map(|c| c.to_string()).collect();
        let n = columns.len();
        let mut rows = stmt.query([])?;
        let mut out = Vec::new();
        while let Some(row) = rows.next()? {
            let mut values = Vec::with_capacity(n);
            for i in 0..n {
                values.push(match row.get_ref(i)? {
                    ValueRef::Null => SqlValue::Null,
                    ValueRef::Integer(v) => SqlValue::Integer(v),
                    ValueRef::Real(v) => SqlValue::Real(v),
                    ValueRef::Text(t) => SqlValue::Text(String::from_utf8_lossy(t).into_owned()),
                    ValueRef::Blob(b) => SqlValue::Text(String::from_utf8_lossy(b).into_owned()),
                });
            }
            out.push(values);
        }
        Ok(EngineResult::Rows { columns, rows: out })
    }
}

pub fn sqlite_version() -> String {
    format!("sqlite {}", rusqlite::version())
}

impl Executor for SqliteExecutor {
    fn execute(&mut self, stmt: &Statement) -> EngineResult {
        match render_statement(stmt, &self.dialect) {
            Ok(sql) => self.execute_sql(&sql, matches!(stmt, Statement::Select(_))),
            Err(e) => EngineResult::Error(format!("render: {e}")),
        }
    }

    fn dialect(&self) -> &DialectProfile {
        &self.dialect
    }

    fn engine_version(&self) -> String {
        sqlite_version()
    }
}

/// One request to the child: the SQL text and whether it returns rows.
#[derive(serde::Serialize, serde::Deserialize)]
struct Request {
    sql: String,
    query: bool,
}

/// Serves requests from stdin until it closes. Runs in the child process.
pub fn serve(timeout: Duration) -> anyhow::Result<()> {
    let mut exec = SqliteExecutor::in_memory(timeout)?;
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout().lock();
    for line in stdin.lock().lines() {
        let req: Request = serde_json::from_str(&line?)?;
        let result = exec.execute_sql(&req.sql, req.query);
        serde_json::to_writer(&mut stdout, &result)?;
        stdout.write_all(b"\n")?;
        stdout.flush()?;
    }
    Ok(())
}

/// SQLite in a child process. A child that dies yields `Crash`; one that
/// stops answering yields `Crash` with a message starting with `hang:`.
pub struct IsolatedSqlite {
    program: PathBuf,
    timeout: Duration,
    dialect: DialectProfile,
    child: Option<(Child, ChildStdin, mpsc::Receiver<String>)>,
}

pub const HANG_PREFIX: &str = "hang:";

impl IsolatedSqlite {
    /// `program` must accept `--serve-sqlite <timeout-ms>`.
    pub fn new(program: PathBuf, timeout: Duration) -> Self {
        IsolatedSqlite { program, timeout, dialect: DialectProfile::sqlite(), child: None }
    }

    fn spawn(&self) -> std::io::Result<(Child, ChildStdin, mpsc::Receiver<String>)> {
        let mut child = Command::new(&self.program)
            .arg("--serve-sqlite")
            .arg(self.timeout.as_millis().to_string())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped");
        let stdout: ChildStdout = child.stdout.take().expect("piped");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok((child, stdin, rx))
    }

    fn kill(&mut self) {
        if let Some((mut child, _, _)) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }

    fn exit_message(&mut self) -> String {
        match self.child.take() {
            Some((mut child, _, _)) => match child.wait() {
                Ok(status) => format!("engine process exited: {status}"),
                Err(e) => format!("engine process lost: {e}"),
            },
            None => "engine process lost".into(),
        }
    }

    fn send(&mut self, req: &Request) -> EngineResult {
        if self.child.is_none() {
            match self.spawn() {
                Ok(c) => self.child = Some(c),
                Err(e) => return EngineResult::Crash(format!("cannot start engine process: {e}")),
            }
        }
        let (_, stdin, rx) = self.child.as_mut().expect("spawned");
        let line = serde_json::to_string(req).expect("serializable");
        if writeln!(stdin, "{line}").and_then(|_| stdin.flush()).is_err() {
            return EngineResult::Crash(self.exit_message());
        }
        let grace = self.timeout * 2 + Duration::from_secs(5);
        match rx.recv_timeout(grace) {
            Ok(reply) => {
                serde_json::from_str(&reply).unwrap_or_else(|e| EngineResult::Crash(format!("garbled reply: {e}")))
            }
            Err(mpsc::RecvTimeoutError::Timeout) => {
                self.kill();
                EngineResult::Crash(format!("{HANG_PREFIX} no reply within {} ms", grace.as_millis()))
            }
            Err(mpsc::RecvTimeoutError::Disconnected) => EngineResult::Crash(self.exit_message()),
        }
    }
}

impl Drop for IsolatedSqlite {
    fn drop(&mut self) {
        self.kill();
    }
}

impl Executor for IsolatedSqlite {
    fn execute(&mut self, stmt: &Statement) -> EngineResult {
        match render_statement(stmt, &self.dialect) {
            Ok(sql) => self.send(&Request { sql, query: matches!(stmt, Statement::Select(_)) }),
            Err(e) => EngineResult::Error(format!("render: {e}")),
        }
    }

    fn dialect(&self) -> &DialectProfile {
        &self.dialect
    }

    fn engine_version(&self) -> String {
        format!("{} (child process)", sqlite_version())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use norec_core::scenarios;

    #[test]
    fn select_one() {
        let mut e = SqliteExecutor::in_memory(Duration::from_secs(1)).unwrap();
        assert_eq!(
            e.execute_sql("SELECT 1;", true),
            EngineResult::Rows { columns: vec!["1".into()], rows: vec![vec![SqlValue::Integer(1)]] }
        );
    }

    #[test]
    fn errors_keep_the_message() {
        let mut e = SqliteExecutor::in_memory(Duration::from_secs(1)).unwrap();
        e.execute_sql("CREATE TABLE t0(c0 UNIQUE);", false);
        e.execute_sql("INSERT INTO t0 VALUES (1);", false);
        assert_eq!(
            e.execute_sql("INSERT INTO t0 VALUES (1);", false),
            EngineResult::Error("UNIQUE constraint failed: t0.c0".into())
        );
    }

    #[test]
    fn long_query_times_out() {
        let mut e = SqliteExecutor::in_memory(Duration::from_millis(50)).unwrap();
        let sql = "WITH RECURSIVE r(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM r) SELECT COUNT(*) FROM r;";
        assert_eq!(e.execute_sql(sql, true), EngineResult::Timeout);
    }

    #[test]
    fn scenarios_without_injection_agree_with_sqlite() {
        for s in scenarios::all().into_iter().filter(|s| s.injection.is_none()) {
            let mut e = SqliteExecutor::in_memory(Duration::from_secs(1)).unwrap();
            for st in &s.setup {
                assert!(e.execute(st).is_ok(), "{}", s.name);
            }
            let rows = e.execute(&Statement::Select(s.query.clone()));
            assert_eq!(rows.rows().unwrap().len() as u64, s.expected_optimized, "{}", s.name);
        }
    }
}
