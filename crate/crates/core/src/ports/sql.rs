use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "message", rename_all = "snake_case")]
pub enum SqlError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("statement exceeded timeout of {0} ms")]
    Timeout(u64),
    #[error("rejected non-SELECT statement: {0}")]
    NonSelectRejected(String),
    #[error("cannot open database: {0}")]
    Open(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SqlValue {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
}

impl SqlValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            SqlValue::Integer(i) => Some(*i as f64),
            SqlValue::Real(r) => Some(*r),
            _ => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, SqlValue::Integer(_) | SqlValue::Real(_))
    }
}

impl std::fmt::Display for SqlValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SqlValue::Null => write!(f, "NULL"),
            SqlValue::Integer(i) => write!(f, "{i}"),
            SqlValue::Real(r) => write!(f, "{r}"),
            SqlValue::Text(t) => write!(f, "{t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<SqlValue>>,
    /// Set when rows beyond `max_rows` were dropped.
    pub truncated: bool,
}

impl ResultTable {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.eq_ignore_ascii_case(name))
    }
}

/// Read-only executor over an embedded SQLite database file.
#[derive(Debug, Clone)]
pub struct SqlExecutor {
    path: PathBuf,
    pub timeout: Duration,
    pub max_rows: usize,
}

const MUTATING_KEYWORDS: &[&str] = &[
    "INSERT", "UPDATE", "DELETE", "REPLACE", "UPSERT", "MERGE", "DROP", "CREATE", "ALTER",
    "TRUNCATE", "ATTACH", "DETACH", "PRAGMA", "VACUUM", "REINDEX", "ANALYZE", "BEGIN", "COMMIT",
    "ROLLBACK", "SAVEPOINT", "RELEASE", "GRANT", "REVOKE",
];

impl SqlExecutor {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            timeout: Duration::from_secs(10),
            max_rows: 10_000,
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Read-only connection, also used for schema introspection.
    pub fn connect(&self) -> Result<Connection, SqlError> {
        if !self.path.is_file() {
            return Err(SqlError::Open(format!("{} does not exist", self.path.display())));
        }
        let conn = Connection::open_with_flags(
            &self.path,
            OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX,
        )
        .map_err(|e| SqlError::Open(e.to_string()))?;
        conn.pragma_update(None, "query_only", true)
            .map_err(|e| SqlError::Open(e.to_string()))?;
        Ok(conn)
    }

    /// Run one read-only statement; returns the table and wall time.
    pub fn execute(&self, statement: &str) -> Result<(ResultTable, Duration), SqlError> {
        let sql = statement.trim().trim_end_matches(|c: char| c == ';' || c.is_whitespace());
        if let Some(word) = first_keyword(sql) {
            if MUTATING_KEYWORDS.contains(&word.to_ascii_uppercase().as_str()) {
                return Err(SqlError::NonSelectRejected(word));
            }
        }
        if has_second_statement(sql) {
            return Err(SqlError::Syntax("multiple statements are not allowed".into()));
        }
        let conn = self.connect()?;
        let started = Instant::now();
        let timeout = self.timeout;
        conn.progress_handler(1_000, Some(move || started.elapsed() > timeout));

        let mut stmt = conn.prepare(sql).map_err(classify_prepare_error)?;
        if !stmt.readonly() {
            return Err(SqlError::NonSelectRejected(
                first_keyword(sql).unwrap_or_default(),
            ));
        }
        let columns: Vec<String> = stmt.column_names().iter().map(|c| c.to_string()).collect();
        let width = columns.len();
        let mut rows = Vec::new();
        let mut truncated = false;
        let mut cursor = stmt.query([]).map_err(|e| self.runtime_error(e))?;
        loop {
            let row = match cursor.next() {
                Ok(Some(row)) => row,
                Ok(None) => break,
                Err(e) => return Err(self.runtime_error(e)),
            };
            if rows.len() == self.max_rows {
                truncated = true;
                break;
            }
            let mut values = Vec::with_capacity(width);
            for i in 0..width {
                let v = row.get_ref(i).map_err(|e| self.runtime_error(e))?;
                values.push(match v {
                    ValueRef::Null => SqlValue::Null,
                    ValueRef::Integer(i) => SqlValue::Integer(i),
                    ValueRef::Real(r) => SqlValue::Real(r),
                    ValueRef::Text(t) => SqlValue::Text(String::from_utf8_lossy(t).into_owned()),
                    ValueRef::Blob(b) => SqlValue::Text(hex::encode(b)),
                });
            }
            rows.push(values);
        }
        Ok((ResultTable { columns, rows, truncated }, started.elapsed()))
    }

    fn runtime_error(&self, e: rusqlite::Error) -> SqlError {
        if let rusqlite::Error::SqliteFailure(f, _) = &e {
            if f.code == rusqlite::ErrorCode::OperationInterrupted {
                return SqlError::Timeout(self.timeout.as_millis() as u64);
            }
            if f.code == rusqlite::ErrorCode::ReadOnly {
                return SqlError::NonSelectRejected(e.to_string());
            }
        }
        SqlError::Runtime(e.to_string())
    }
}

fn classify_prepare_error(e: rusqlite::Error) -> SqlError {
    let msg = e.to_string();
    let lower = msg.to_ascii_lowercase();
    if lower.contains("syntax error")
        || lower.contains("incomplete input")
        || lower.contains("unrecognized token")
        || matches!(e, rusqlite::Error::MultipleStatement)
    {
        SqlError::Syntax(msg)
    } else {
        SqlError::Runtime(msg)
    }
}

/// A `;` outside quotes and comments with anything but whitespace after it.
fn has_second_statement(sql: &str) -> bool {
    let b = sql.as_bytes();
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            q @ (b'\'' | b'"' | b'`') => {
                i += 1;
                while i < b.len() && b[i] != q {
                    i += 1;
                }
            }
            b'-' if b.get(i + 1) == Some(&b'-') => {
                while i < b.len() && b[i] != b'\n' {
                    i += 1;
                }
            }
            b'/' if b.get(i + 1) == Some(&b'*') => {
                i += 2;
                while i + 1 < b.len() && !(b[i] == b'*' && b[i + 1] == b'/') {
                    i += 1;
                }
                i += 1;
            }
            b';' => return !sql[i + 1..].trim().is_empty(),
            _ => {}
        }
        i += 1;
    }
    false
}

/// First keyword after leading whitespace and comments.
pub fn first_keyword(sql: &str) -> Option<String> {
    let mut rest = sql;
    loop {
        rest = rest.trim_start();
        if let Some(r) = rest.strip_prefix("--") {
            rest = r.split_once('\n').map_or("", |(_, tail)| tail);
        } else if let Some(r) = rest.strip_prefix("/*") {
            rest = r.split_once("*/").map_or("", |(_, tail)| tail);
        } else {
            break;
        }
    }
    let word: String = rest
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric() || *c == '_')
        .collect();
    (!word.is_empty()).then_some(word)
}
