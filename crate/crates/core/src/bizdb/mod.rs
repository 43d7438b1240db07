//! The business database boundary: paged queries for display widgets and
//! registered procedures for actions.
//!
//! Query text only ever comes from compiled templates. Request input reaches
//! the database solely as bound procedure arguments.

mod manifest;

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use parking_lot::{Mutex, RwLock};
use rusqlite::types::{Value, ValueRef};
use rusqlite::Connection;
use serde::Serialize;

pub use manifest::parse_manifest;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ResultSet {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Row count before pagination.
    pub total_rows: u64,
}

impl ResultSet {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Page {
    pub offset: u64,
    pub size: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamType {
    Text,
    Number,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcedureParam {
    pub name: String,
    pub param_type: ParamType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProcedureBody {
    /// One SQL statement; parameters are bound by name (`:param`).
    Sql(String),
    /// Built-in handler; `@noop` does nothing and succeeds.
    Noop,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcedureRegistration {
    pub name: String,
    pub params: Vec<ProcedureParam>,
    pub body: ProcedureBody,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcedureStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProcedureResult {
    pub status: ProcedureStatus,
    pub message: String,
    pub rows_affected: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BizDbError {
    #[error("database: {0}")]
    Backend(String),
    #[error("query exceeded the {0:?} time limit")]
    Timeout(Duration),
    #[error("empty query")]
    EmptyQuery,
    #[error("unknown procedure `{0}`")]
    UnknownProcedure(String),
    #[error("procedure `{0}` is already registered")]
    DuplicateProcedure(String),
    #[error("invalid procedure registration: {0}")]
    InvalidRegistration(String),
    #[error("procedure `{procedure}` takes {expected} arguments, got {got}")]
    Arity {
        procedure: String,
        expected: usize,
        got: usize,
    },
    #[error("argument `{param}` must be a number, got `{value}`")]
    ArgumentType { param: String, value: String },
    #[error("procedure manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("{0}")]
    Io(String),
}

type Result<T> = std::result::Result<T, BizDbError>;

impl From<rusqlite::Error> for BizDbError {
    fn from(e: rusqlite::Error) -> Self {
        BizDbError::Backend(e.to_string())
    }
}

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

pub struct BusinessDb {
    conn: Mutex<Connection>,
    procedures: RwLock<HashMap<String, ProcedureRegistration>>,
    timeout: Duration,
    queries: AtomicU64,
}

impl BusinessDb {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let conn = Connection::open(path)?;
        conn.busy_timeout(DEFAULT_TIMEOUT)?;
        Self::with_connection(conn)
    }

    pub fn open_in_memory() -> Result<Self> {
        Self::with_connection(Connection::open_in_memory()?)
    }

    fn with_connection(conn: Connection) -> Result<Self> {
        conn.pragma_update(None, "foreign_keys", true)?;
        Ok(BusinessDb {
            conn: Mutex::new(conn),
            procedures: RwLock::new(HashMap::new()),
            timeout: DEFAULT_TIMEOUT,
            queries: AtomicU64::new(0),
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Number of [`execute_query`](Self::execute_query) calls so far.
    pub fn query_count(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    /// Runs a script of statements, e.g. the fixture seed file.
    pub fn seed(&self, script: &str) -> Result<()> {
        Ok(self.conn.lock().execute_batch(script)?)
    }

    pub fn seed_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let script = std::fs::read_to_string(path).map_err(|e| BizDbError::Io(e.to_string()))?;
        self.seed(&script)
    }

    pub fn register_procedure(&self, registration: ProcedureRegistration) -> Result<()> {
        if registration.name.is_empty()
            || !registration
                .name
                .bytes()
                .all(|b| b.is_ascii_alphanumeric() || b == b'_')
        {
            return Err(BizDbError::InvalidRegistration(format!(
                "bad procedure name `{}`",
                registration.name
            )));
        }
        for (i, p) in registration.params.iter().enumerate() {
            if registration.params[..i].iter().any(|q| q.name == p.name) {
                return Err(BizDbError::InvalidRegistration(format!(
                    "parameter `{}` declared twice in `{}`",
                    p.name, registration.name
                )));
            }
        }
        let mut procedures = self.procedures.write();
        if procedures.contains_key(&registration.name) {
            return Err(BizDbError::DuplicateProcedure(registration.name));
        }
        procedures.insert(registration.name.clone(), registration);
        Ok(())
    }

    pub fn load_manifest(&self, text: &str) -> Result<usize> {
        let registrations = parse_manifest(text)?;
        let n = registrations.len();
        for r in registrations {
            self.register_procedure(r)?;
        }
        Ok(n)
    }

    pub fn procedure(&self, name: &str) -> Option<ProcedureRegistration> {
        self.procedures.read().get(name).cloned()
    }

    /// Interrupts long-running statements once the time limit passes.
    fn arm_timeout(&self, conn: &Connection) -> Result<Instant> {
        let deadline = Instant::now() + self.timeout;
        conn.progress_handler(1000, Some(move || Instant::now() >= deadline))?;
        Ok(deadline)
    }

    fn disarm_timeout(conn: &Connection) {
        if let Err(e) = conn.progress_handler(0, None::<fn() -> bool>) {
            tracing::warn!(error = %e, "failed to clear progress handler");
        }
    }

    fn backend_error(&self, e: rusqlite::Error, deadline: Instant) -> BizDbError {
        if matches!(e.sqlite_error_code(), Some(rusqlite::ErrorCode::OperationInterrupted))
            && Instant::now() >= deadline
        {
            BizDbError::Timeout(self.timeout)
        } else {
            e.into()
        }
    }

    pub fn execute_query(&self, query: &str, page: Option<Page>) -> Result<ResultSet> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        let query = query.trim().trim_end_matches(';').trim();
        if query.is_empty() {
            return Err(BizDbError::EmptyQuery);
        }
        let conn = self.conn.lock();
        let deadline = self.arm_timeout(&conn)?;
        let result = run_query(&conn, query, page).map_err(|e| self.backend_error(e, deadline));
        Self::disarm_timeout(&conn);
        result
    }

    /// Calls a registered procedure once. Argument problems are errors and
    /// nothing runs; a failing body is reported as [`ProcedureStatus::Failed`]
    /// and its changes are rolled back.
    pub fn call_procedure(&self, name: &str, args: &[String]) -> Result<ProcedureResult> {
        let registration = self
            .procedure(name)
            .ok_or_else(|| BizDbError::UnknownProcedure(name.to_string()))?;
        if args.len() != registration.params.len() {
            return Err(BizDbError::Arity {
                procedure: name.to_string(),
                expected: registration.params.len(),
                got: args.len(),
            });
        }
        let values = registration
            .params
            .iter()
            .zip(args)
            .map(|(p, a)| Ok((p.name.as_str(), to_value(p, a)?)))
            .collect::<Result<Vec<(&str, Value)>>>()?;

        let sql = match &registration.body {
            ProcedureBody::Noop => {
                return Ok(ProcedureResult {
                    status: ProcedureStatus::Ok,
                    message: format!("{name}: ok"),
                    rows_affected: None,
                })
            }
            ProcedureBody::Sql(sql) => sql,
        };

        let mut conn = self.conn.lock();
        let deadline = self.arm_timeout(&conn)?;
        let outcome = run_procedure(&mut conn, sql, &values);
        Self::disarm_timeout(&conn);
        Ok(match outcome {
            Ok(rows) => ProcedureResult {
                status: ProcedureStatus::Ok,
                message: format!("{name}: {rows} row(s) affected"),
                rows_affected: Some(rows as u64),
            },
            Err(e) => ProcedureResult {
                status: ProcedureStatus::Failed,
                message: self.backend_error(e, deadline).to_string(),
                rows_affected: None,
            },
        })
    }
}

fn to_value(param: &ProcedureParam, raw: &str) -> Result<Value> {
    match param.param_type {
        ParamType::Text => Ok(Value::Text(raw.to_string())),
        ParamType::Number => {
            let raw = raw.trim();
            if let Ok(i) = raw.parse::<i64>() {
                Ok(Value::Integer(i))
            } else {
                raw.parse::<f64>()
                    .ok()
                    .filter(|f| f.is_finite())
                    .map(Value::Real)
                    .ok_or_else(|| BizDbError::ArgumentType {
                        param: param.name.clone(),
                        value: raw.to_string(),
                    })
            }
        }
    }
}

fn run_query(conn: &Connection, query: &str, page: Option<Page>) -> rusqlite::Result<ResultSet> {
    let tx = conn.unchecked_transaction()?;
    let total_rows: i64 = tx.query_row(&format!("SELECT COUNT(*) FROM ({query})"), [], |r| r.get(0))?;
    let paged = match page {
        Some(p) => format!(
            "SELECT * FROM ({query}) LIMIT {} OFFSET {}",
            p.size.min(i64::MAX as u64),
            p.offset.min(i64::MAX as u64)
        ),
        None => format!("SELECT * FROM ({query})"),
    };
    let mut stmt = tx.prepare(&paged)?;
    let columns: Vec<String> = stmt.column_names().into_iter().map(str::to_string).collect();
    let width = columns.len();
    let rows = stmt
        .query_map([], |row| {
            (0..width)
                .map(|i| row.get_ref(i).map(render_cell))
                .collect::<rusqlite::Result<Vec<String>>>()
        })?
        .collect::<rusqlite::Result<Vec<_>>>()?;
    drop(stmt);
    tx.commit()?;
    Ok(ResultSet {
        columns,
        rows,
        total_rows: total_rows as u64,
    })
}

fn run_procedure(conn: &mut Connection, sql: &str, values: &[(&str, Value)]) -> rusqlite::Result<usize> {
    let tx = conn.transaction()?;
    let rows = {
        let mut stmt = tx.prepare(sql)?;
        for (name, value) in values {
            if let Some(index) = stmt.parameter_index(&format!(":{name}"))? {
                stmt.raw_bind_parameter(index, value)?;
            }
        }
        stmt.raw_execute()?
    };
    tx.commit()?;
    Ok(rows)
}

fn render_cell(value: ValueRef<'_>) -> String {
    match value {
        ValueRef::Null => String::new(),
        ValueRef::Integer(i) => i.to_string(),
        ValueRef::Real(f) => f.to_string(),
        ValueRef::Text(t) => String::from_utf8_lossy(t).into_owned(),
        ValueRef::Blob(b) => hex::encode(b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SEED: &str = "
        CREATE TABLE orders (id INTEGER PRIMARY KEY, item TEXT NOT NULL, qty INTEGER NOT NULL CHECK (qty > 0));
        CREATE TABLE empty (a TEXT, b INTEGER);
        INSERT INTO orders (item, qty) VALUES ('apples', 3), ('pears', 1), ('plums', 7), ('figs', 2), ('kiwis', 5);
    ";

    fn db() -> BusinessDb {
        let db = BusinessDb::open_in_memory().unwrap();
        db.seed(SEED).unwrap();
        db.load_manifest(
            "noop() = @noop\n\
             add_order(item text, qty number) = INSERT INTO orders (item, qty) VALUES (:item, :qty)\n\
             three(a text, b text, c text) = @noop\n",
        )
        .unwrap();
        db
    }

    fn count(db: &BusinessDb) -> u64 {
        db.execute_query("SELECT * FROM orders", None).unwrap().total_rows
    }

    #[test]
    fn empty_table() {
        let rs = db().execute_query("SELECT a, b FROM empty", None).unwrap();
        assert_eq!(rs.columns, ["a", "b"]);
        assert!(rs.rows.is_empty());
        assert_eq!(rs.total_rows, 0);
    }

    #[test]
    fn pagination_reports_unpaginated_total() {
        let db = db();
        let full = db.execute_query("SELECT id, item FROM orders ORDER BY id", None).unwrap();
        // Oracle: full scan length.
        assert_eq!(full.rows.len(), 5);
        let page = db
            .execute_query("SELECT id, item FROM orders ORDER BY id;", Some(Page { offset: 0, size: 2 }))
            .unwrap();
        assert_eq!(page.rows.len(), 2);
        assert_eq!(page.total_rows, full.rows.len() as u64);
        assert_eq!(page.rows, full.rows[..2]);
        let last = db
            .execute_query("SELECT id, item FROM orders ORDER BY id", Some(Page { offset: 4, size: 2 }))
            .unwrap();
        assert_eq!(last.rows, full.rows[4..]);
    }

    #[test]
    fn malformed_query_is_a_backend_error() {
        let db = db();
        assert!(matches!(db.execute_query("SELEC nonsense", None), Err(BizDbError::Backend(_))));
        assert_eq!(db.execute_query("  ;", None), Err(BizDbError::EmptyQuery));
    }

    #[test]
    fn cells_are_strings() {
        let rs = db()
            .execute_query("SELECT 1 AS i, 2.5 AS r, NULL AS n, 'x' AS t, x'00ff' AS b", None)
            .unwrap();
        assert_eq!(rs.rows, [["1", "2.5", "", "x", "00ff"]]);
    }

    #[test]
    fn procedures() {
        let db = db();
        assert_eq!(db.call_procedure("noop", &[]).unwrap().status, ProcedureStatus::Ok);

        let before = count(&db);
        let r = db.call_procedure("add_order", &["dates".into(), "4".into()]).unwrap();
        assert_eq!(r.status, ProcedureStatus::Ok);
        assert_eq!(r.rows_affected, Some(1));
        assert_eq!(count(&db), before + 1);

        assert_eq!(
            db.call_procedure("three", &["a".into(), "b".into()]),
            Err(BizDbError::Arity { procedure: "three".into(), expected: 3, got: 2 })
        );
        assert!(matches!(
            db.call_procedure("add_order", &["x".into(), "many".into()]),
            Err(BizDbError::ArgumentType { .. })
        ));
        assert_eq!(db.call_procedure("nope", &[]), Err(BizDbError::UnknownProcedure("nope".into())));
        assert_eq!(count(&db), before + 1);
    }

    #[test]
    fn failed_procedure_changes_nothing() {
        let db = db();
        let before = db.execute_query("SELECT * FROM orders ORDER BY id", None).unwrap();
        let r = db.call_procedure("add_order", &["bad".into(), "0".into()]).unwrap();
        assert_eq!(r.status, ProcedureStatus::Failed);
        assert!(!r.message.is_empty());
        assert_eq!(db.execute_query("SELECT * FROM orders ORDER BY id", None).unwrap(), before);
    }

    #[test]
    fn registration_rules() {
        let db = BusinessDb::open_in_memory().unwrap();
        let p1 = ProcedureRegistration {
            name: "p1".into(),
            params: vec![],
            body: ProcedureBody::Noop,
        };
        db.register_procedure(p1.clone()).unwrap();
        assert_eq!(db.call_procedure("p1", &[]).unwrap().status, ProcedureStatus::Ok);
        assert_eq!(db.register_procedure(p1), Err(BizDbError::DuplicateProcedure("p1".into())));
        let dup_params = ProcedureRegistration {
            name: "p2".into(),
            params: vec![
                ProcedureParam { name: "a".into(), param_type: ParamType::Text },
                ProcedureParam { name: "a".into(), param_type: ParamType::Number },
            ],
            body: ProcedureBody::Noop,
        };
        assert!(matches!(db.register_procedure(dup_params), Err(BizDbError::InvalidRegistration(_))));
    }

    #[test]
    fn request_text_cannot_alter_sql() {
        let db = db();
        let hostile = "x'); DROP TABLE orders; --";
        let r = db.call_procedure("add_order", &[hostile.into(), "1".into()]).unwrap();
        assert_eq!(r.status, ProcedureStatus::Ok);
        let rs = db.execute_query("SELECT item FROM orders WHERE item LIKE 'x%'", None).unwrap();
        assert_eq!(rs.rows, [[hostile]]);
    }

    #[test]
    fn runaway_query_times_out() {
        let db = db().with_timeout(Duration::from_millis(50));
        let spin = "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c) SELECT count(*) FROM c";
        assert_eq!(db.execute_query(spin, None), Err(BizDbError::Timeout(Duration::from_millis(50))));
        // The connection stays usable.
        assert_eq!(db.execute_query("SELECT 1", None).unwrap().rows, [["1"]]);
    }
}
