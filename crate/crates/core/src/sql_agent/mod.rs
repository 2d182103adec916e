//! Natural-language questions over a read-only SQL database: route,
//! generate SQL, execute, rate, retry with feedback, interpret.

pub mod fixture;
pub mod insight;
pub mod schema;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ports::{ChatModel, ChatRequest, Message, PortError, ResultTable, SqlError, SqlExecutor};

pub use insight::{Direction, Insight, KeyKind, KeyValue, Trend};
pub use schema::SchemaSnapshot;

pub const ROUTE_INSTRUCTION: &str = "Classify the user question as one of: structured, document, other. \
structured means it needs SQL over business tables; document means it needs policy or document text. \
Reply with the single word.";

pub const SQL_INSTRUCTION: &str = "Translate the question into one read-only SQLite SELECT statement over the schema. \
Output only the SQL.";

pub const RATE_INSTRUCTION: &str = "Rate from 0 to 1 how well the SQL result answers the question: \
1 means correct and complete, 0 means wrong. Reply with the number first, then a short reason.";

pub const INTERPRET_INSTRUCTION: &str = "Explain the query result to a business user in two or three sentences, \
citing the key values given.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskType {
    Structured,
    Document,
    Other,
}

impl std::str::FromStr for TaskType {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let word: String = s
            .trim()
            .chars()
            .take_while(|c| c.is_alphabetic())
            .collect::<String>()
            .to_lowercase();
        match word.as_str() {
            "structured" => Ok(Self::Structured),
            "document" => Ok(Self::Document),
            "other" => Ok(Self::Other),
            _ => Err(()),
        }
    }
}

const STRUCTURED_HINTS: &[&str] = &[
    "how many", "count", "number of", "average", "avg", "mean", "total", "sum", "revenue", "sales", "price",
    "income", "rate", "percentage", "percent", "ratio", "top", "highest", "lowest", "most", "least", "rank",
    "per ", "by month", "by region", "by day", "by week", "by year", "monthly", "weekly", "daily", "quarter",
    "last month", "last year", "past", "trend", "table", "rows", "records", "database", "metric", "kpi",
];

const DOCUMENT_HINTS: &[&str] = &[
    "policy", "policies", "requirement", "procedure", "guideline", "contract", "clause", "document", "handbook",
    "manual", "regulation", "compliance", "explain", "describe", "what is", "what are",
];

/// Keyword classification used when the model cannot answer.
pub fn route_by_keywords(question: &str) -> TaskType {
    let q = format!(" {} ", question.to_lowercase());
    if STRUCTURED_HINTS.iter().any(|h| q.contains(h)) {
        TaskType::Structured
    } else if DOCUMENT_HINTS.iter().any(|h| q.contains(h)) || q.split_whitespace().count() > 3 {
        TaskType::Document
    } else {
        TaskType::Other
    }
}

/// Returns the task type and whether the keyword fallback was used.
pub fn route(question: &str, chat: &dyn ChatModel) -> (TaskType, bool) {
    let req = ChatRequest::new(vec![Message::system(ROUTE_INSTRUCTION), Message::user(question)]);
    match chat.chat(&req).ok().and_then(|r| r.text.parse().ok()) {
        Some(t) => (t, false),
        None => (route_by_keywords(question), true),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Table(ResultTable),
    Error(SqlError),
    GenerationFailed(String),
}

impl Outcome {
    pub fn table(&self) -> Option<&ResultTable> {
        match self {
            Outcome::Table(t) => Some(t),
            _ => None,
        }
    }

    fn feedback(&self) -> Option<String> {
        match self {
            Outcome::Table(_) => None,
            Outcome::Error(e) => Some(e.to_string()),
            Outcome::GenerationFailed(m) => Some(format!("no SQL produced: {m}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqlAttempt {
    pub attempt: usize,
    pub sql: String,
    pub outcome: Outcome,
    pub rating: f64,
    pub reasons: Vec<String>,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Answered,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThorAttemptLog {
    pub question: String,
    pub task_type: TaskType,
    pub route_fallback: bool,
    pub attempts: Vec<SqlAttempt>,
    pub status: Status,
    pub narrative: Option<String>,
}

impl ThorAttemptLog {
    /// Copy with wall-clock fields zeroed, for comparisons.
    pub fn without_timings(&self) -> Self {
        let mut out = self.clone();
        out.attempts.iter_mut().for_each(|a| a.elapsed_ms = 0);
        out
    }

    pub fn final_table(&self) -> Option<&ResultTable> {
        self.attempts.last().and_then(|a| a.outcome.table())
    }
}

#[derive(Debug, Error)]
pub enum ThorError {
    #[error("database schema is empty")]
    EmptySchema,
    #[error("schema introspection failed: {0}")]
    Schema(#[source] SqlError),
    #[error("result table is empty")]
    EmptyResult,
    #[error("no acceptable SQL after {} attempts", .0.attempts.len())]
    Failed(Box<ThorAttemptLog>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThorConfig {
    pub max_retries: usize,
    pub threshold: f64,
    pub allow_empty: bool,
}

impl Default for ThorConfig {
    fn default() -> Self {
        Self {
            max_retries: 3,
            threshold: 0.6,
            allow_empty: false,
        }
    }
}

/// Remove a surrounding Markdown code fence, if any.
pub fn strip_fences(text: &str) -> String {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t.to_string();
    };
    let body = rest.split_once('\n').map_or("", |(_, b)| b);
    let body = body.trim_end();
    body.strip_suffix("```").unwrap_or(body).trim().to_string()
}

pub fn sql_prompt(question: &str, schema: &SchemaSnapshot, prior: &[SqlAttempt]) -> String {
    let mut out = format!("SCHEMA:\n{}\nQUESTION: {question}", schema.render());
    if !prior.is_empty() {
        out.push_str("\nPREVIOUS ATTEMPTS:");
        for a in prior {
            out.push_str(&format!("\n#{} SQL: {}", a.attempt, a.sql));
            match a.outcome.feedback() {
                Some(err) => out.push_str(&format!("\n#{} ERROR: {err}", a.attempt)),
                None => out.push_str(&format!(
                    "\n#{} RATING: {:.2} ({})",
                    a.attempt,
                    a.rating,
                    a.reasons.join("; ")
                )),
            }
        }
        out.push_str("\nReconstruct the query intent and write a corrected query.");
    }
    out
}

pub fn generate_sql(
    question: &str,
    schema: &SchemaSnapshot,
    prior: &[SqlAttempt],
    chat: &dyn ChatModel,
) -> Result<String, PortError> {
    let req = ChatRequest::new(vec![
        Message::system(SQL_INSTRUCTION),
        Message::user(sql_prompt(question, schema, prior)),
    ]);
    let sql = strip_fences(&chat.chat(&req)?.text);
    if sql.is_empty() {
        return Err(PortError::ModelRefusal("empty SQL".into()));
    }
    Ok(sql)
}

fn preview(table: &ResultTable, rows: usize) -> String {
    let mut lines = vec![table.columns.join(",")];
    for row in table.rows.iter().take(rows) {
        lines.push(row.iter().map(ToString::to_string).collect::<Vec<_>>().join(","));
    }
    lines.join("\n")
}

fn parse_score(text: &str) -> Option<f64> {
    let start = text.find(|c: char| c.is_ascii_digit() || c == '.')?;
    let num: String = text[start..]
        .chars()
        .take_while(|c| c.is_ascii_digit() || *c == '.')
        .collect();
    num.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Errors and (unless allowed) empty tables score 0 without asking the
/// model; an unavailable or unreadable rating falls back to 1 for any
/// acceptable table.
pub fn rate(
    question: &str,
    sql: &str,
    outcome: &Outcome,
    allow_empty: bool,
    chat: &dyn ChatModel,
) -> (f64, Vec<String>) {
    let table = match outcome {
        Outcome::Table(t) => t,
        other => return (0.0, vec![other.feedback().unwrap_or_default()]),
    };
    if table.is_empty() && !allow_empty {
        return (0.0, vec!["empty result".into()]);
    }
    let req = ChatRequest::new(vec![
        Message::system(RATE_INSTRUCTION),
        Message::user(format!("QUESTION: {question}\nSQL: {sql}\nRESULT:\n{}", preview(table, 20))),
    ]);
    match chat.chat(&req) {
        Ok(resp) => match parse_score(&resp.text) {
            Some(s) => (s.clamp(0.0, 1.0), vec![format!("model: {}", resp.text.trim())]),
            None => (1.0, vec![format!("unreadable rating {:?}; heuristic used", resp.text.trim())]),
        },
        Err(e) => (1.0, vec![format!("rating unavailable ({e}); heuristic used")]),
    }
}

pub fn interpret(question: &str, table: &ResultTable, chat: &dyn ChatModel) -> Result<Insight, ThorError> {
    if table.is_empty() {
        return Err(ThorError::EmptyResult);
    }
    let key_values = insight::key_values(table);
    let trends = insight::trends(table);
    let facts: Vec<String> = key_values
        .iter()
        .map(|kv| format!("{} = {}", kv.name(), kv.value))
        .chain(trends.iter().map(|t| format!("{} {:?} by {}", t.column, t.direction, t.ordered_by)))
        .collect();
    let req = ChatRequest::new(vec![
        Message::system(INTERPRET_INSTRUCTION),
        Message::user(format!(
            "QUESTION: {question}\nRESULT:\n{}\nKEY VALUES:\n{}",
            preview(table, 20),
            facts.join("\n")
        )),
    ]);
    let narrative = match chat.chat(&req) {
        Ok(r) if !r.text.trim().is_empty() => r.text.trim().to_string(),
        _ => insight::template_narrative(table, &key_values, &trends),
    };
    Ok(Insight {
        narrative,
        key_values,
        trends,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThorAnswer {
    pub narrative: String,
    pub insight: Insight,
    /// Present in verbose mode.
    pub table: Option<ResultTable>,
    pub log: ThorAttemptLog,
}

pub struct SqlAgent<'a> {
    pub executor: &'a SqlExecutor,
    pub chat: &'a dyn ChatModel,
    pub config: ThorConfig,
}

impl SqlAgent<'_> {
    pub fn schema(&self) -> Result<SchemaSnapshot, ThorError> {
        let schema = SchemaSnapshot::introspect(self.executor).map_err(ThorError::Schema)?;
        if schema.is_empty() {
            return Err(ThorError::EmptySchema);
        }
        Ok(schema)
    }

    /// Generate, execute and rate until a rating reaches the threshold or
    /// `1 + max_retries` attempts have been made.
    pub fn self_correct(&self, question: &str, schema: &SchemaSnapshot) -> (Vec<SqlAttempt>, Status) {
        let mut attempts: Vec<SqlAttempt> = Vec::new();
        while attempts.len() <= self.config.max_retries {
            let n = attempts.len() + 1;
            let (sql, outcome, elapsed_ms) = match generate_sql(question, schema, &attempts, self.chat) {
                Err(e) => (String::new(), Outcome::GenerationFailed(e.to_string()), 0),
                Ok(sql) => match self.executor.execute(&sql) {
                    Ok((table, took)) => (sql, Outcome::Table(table), took.as_millis() as u64),
                    Err(e) => (sql, Outcome::Error(e), 0),
                },
            };
            let (rating, reasons) = rate(question, &sql, &outcome, self.config.allow_empty, self.chat);
            attempts.push(SqlAttempt {
                attempt: n,
                sql,
                outcome,
                rating,
                reasons,
                elapsed_ms,
            });
            if rating >= self.config.threshold {
                return (attempts, Status::Answered);
            }
        }
        (attempts, Status::Failed)
    }

    pub fn run(&self, question: &str, verbose: bool) -> Result<ThorAnswer, ThorError> {
        let (task_type, route_fallback) = route(question, self.chat);
        let schema = self.schema()?;
        let (attempts, status) = self.self_correct(question, &schema);
        let mut log = ThorAttemptLog {
            question: question.to_string(),
            task_type,
            route_fallback,
            attempts,
            status,
            narrative: None,
        };
        if status == Status::Failed {
            return Err(ThorError::Failed(Box::new(log)));
        }
        let table = log.final_table().cloned().expect("answered attempts hold a table");
        let insight = if table.is_empty() {
            Insight {
                narrative: "The query returned no rows.".into(),
                key_values: Vec::new(),
                trends: Vec::new(),
            }
        } else {
            interpret(question, &table, self.chat)?
        };
        let narrative = if verbose {
            format!("{}\n\n{}", render_table(&table), insight.narrative)
        } else {
            insight.narrative.clone()
        };
        log.narrative = Some(narrative.clone());
        Ok(ThorAnswer {
            narrative,
            insight,
            table: verbose.then_some(table),
            log,
        })
    }
}

/// Plain-text grid of a result table.
pub fn render_table(table: &ResultTable) -> String {
    let cells: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| r.iter().map(ToString::to_string).collect())
        .collect();
    let widths: Vec<usize> = (0..table.columns.len())
        .map(|c| {
            cells
                .iter()
                .map(|r| r[c].chars().count())
                .chain([table.columns[c].chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |row: &[String]| {
        row.iter()
            .zip(&widths)
            .map(|(v, w)| format!("{v:<w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
            .trim_end()
            .to_string()
    };
    let mut out = vec![line(&table.columns)];
    out.push(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
    out.extend(cells.iter().map(|r| line(r)));
    out.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ports::{ExtractiveModel, ScriptEntry, ScriptedModel, SqlValue};

    fn db() -> (tempfile::TempDir, SqlExecutor) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chinook.db");
        fixture::create_chinook(&path).unwrap();
        (dir, SqlExecutor::new(path))
    }

    #[test]
    fn routing() {
        let q1 = "Show me the pending deliveries by month";
        let q2 = "What are the internal control requirements for audit processes?";
        assert_eq!(route(q1, &ExtractiveModel), (TaskType::Structured, true));
        assert_eq!(route(q2, &ExtractiveModel), (TaskType::Document, true));
        assert_eq!(
            route("average revenue per region last quarter", &ExtractiveModel).0,
            TaskType::Structured
        );
        assert_eq!(route(q1, &ScriptedModel::new(["Document."])), (TaskType::Document, false));
    }

    #[test]
    fn fences_are_stripped() {
        assert_eq!(strip_fences("```sql\nSELECT 1\n```"), "SELECT 1");
        assert_eq!(strip_fences("```\nSELECT 2```"), "SELECT 2");
        assert_eq!(strip_fences(" SELECT 3 "), "SELECT 3");
    }

    #[test]
    fn schema_rendering() {
        let (_d, ex) = db();
        let s = SchemaSnapshot::introspect(&ex).unwrap();
        let text = s.render();
        assert!(text.contains("chinook_track(track_id:INTEGER, name:TEXT, genre:TEXT, unit_price:REAL)"));
        assert!(text.contains("fk chinook_invoice.customer_id -> chinook_customer.customer_id"));
        assert_eq!(s.table("chinook_track").unwrap().row_count, 5);
    }

    #[test]
    fn retry_prompt_carries_error_text() {
        let (_d, ex) = db();
        let chat = ScriptedModel::new(["SELEC 1", "SELECT COUNT(*) FROM chinook_track"]);
        let agent = SqlAgent {
            executor: &ex,
            chat: &chat,
            config: ThorConfig::default(),
        };
        let schema = agent.schema().unwrap();
        let (attempts, status) = agent.self_correct("how many tracks", &schema);
        assert_eq!(status, Status::Answered);
        assert_eq!(attempts.len(), 2);
        let Outcome::Error(err) = &attempts[0].outcome else { panic!() };
        let second_prompt = chat.transcript()[1].request.joined();
        assert!(second_prompt.contains(&err.to_string()));
    }

    #[test]
    fn ratings() {
        let empty = Outcome::Table(ResultTable {
            columns: vec!["a".into()],
            rows: vec![],
            truncated: false,
        });
        let never = ScriptedModel::new(Vec::<ScriptEntry>::new());
        assert_eq!(rate("q", "s", &Outcome::Error(SqlError::Syntax("x".into())), false, &never).0, 0.0);
        assert_eq!(rate("q", "s", &empty, false, &never).0, 0.0);
        let full = Outcome::Table(ResultTable {
            columns: vec!["a".into()],
            rows: vec![vec![SqlValue::Integer(1)]],
            truncated: false,
        });
        assert_eq!(rate("q", "s", &full, false, &ScriptedModel::new(["0.9"])).0, 0.9);
        assert_eq!(rate("q", "s", &full, false, &ScriptedModel::new(["7"])).0, 1.0);
        assert_eq!(rate("q", "s", &full, false, &never).0, 1.0);
    }

    #[test]
    fn first_attempt_success_has_no_correction_prompt() {
        let (_d, ex) = db();
        let chat = ScriptedModel::new(["structured", "SELECT 1", "0.8", "One."]);
        let agent = SqlAgent {
            executor: &ex,
            chat: &chat,
            config: ThorConfig::default(),
        };
        let ans = agent.run("count things", false).unwrap();
        assert_eq!(ans.log.attempts.len(), 1);
        assert_eq!(ans.narrative, "One.");
        assert!(chat.transcript().iter().all(|t| !t.request.joined().contains("PREVIOUS ATTEMPTS")));
    }

    #[test]
    fn verbose_echoes_table() {
        let (_d, ex) = db();
        let agent = SqlAgent {
            executor: &ex,
            chat: &ScriptedModel::new(["structured", "SELECT name FROM chinook_track WHERE track_id = 3"]),
            config: ThorConfig::default(),
        };
        let ans = agent.run("which track", true).unwrap();
        assert!(ans.narrative.starts_with("name"));
        assert!(ans.narrative.contains("Blue Train"));
        assert!(ans.table.is_some());
    }
}
