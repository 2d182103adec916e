//! Deterministic mini music-store database and the recorded NL-to-SQL
//! listings that run against it.

use std::path::Path;

use rusqlite::Connection;
use serde::{Deserialize, Serialize};

pub const CHINOOK_SEED_SQL: &str = "
CREATE TABLE chinook_customer (
    customer_id INTEGER PRIMARY KEY,
    first_name  TEXT NOT NULL,
    last_name   TEXT NOT NULL,
    country     TEXT NOT NULL
);
CREATE TABLE chinook_track (
    track_id   INTEGER PRIMARY KEY,
    name       TEXT NOT NULL,
    genre      TEXT NOT NULL,
    unit_price REAL NOT NULL
);
CREATE TABLE chinook_invoice (
    invoice_id   INTEGER PRIMARY KEY,
    customer_id  INTEGER NOT NULL REFERENCES chinook_customer(customer_id),
    invoice_date DATE NOT NULL,
    total        REAL NOT NULL
);
CREATE TABLE chinook_invoice_line (
    invoice_line_id INTEGER PRIMARY KEY,
    invoice_id      INTEGER NOT NULL REFERENCES chinook_invoice(invoice_id),
    track_id        INTEGER NOT NULL REFERENCES chinook_track(track_id),
    unit_price      REAL NOT NULL,
    quantity        INTEGER NOT NULL
);
INSERT INTO chinook_customer VALUES
    (1, 'Ana', 'Lima', 'Brazil'),
    (2, 'Ben', 'Ode', 'Canada'),
    (3, 'Chen', 'Wu', 'China');
INSERT INTO chinook_track VALUES
    (1, 'Paid in Full', 'Hip Hop', 0.99),
    (2, 'Shook Ones', 'hip-hop', 1.29),
    (3, 'Blue Train', 'Jazz', 1.99),
    (4, 'Juicy', 'Hip Hop/Rap', 0.89),
    (5, 'Paranoid', 'Rock', 1.49);
INSERT INTO chinook_invoice VALUES
    (1, 1, '2025-01-05', 2.28),
    (2, 2, '2025-02-11', 3.48),
    (3, 3, '2025-03-20', 3.98),
    (4, 1, '2025-04-02', 4.47),
    (5, 2, '2025-12-24', 1.99);
INSERT INTO chinook_invoice_line VALUES
    (1, 1, 1, 0.99, 1),
    (2, 1, 2, 1.29, 1),
    (3, 2, 3, 1.99, 1),
    (4, 2, 5, 1.49, 1),
    (5, 3, 3, 1.99, 2),
    (6, 4, 5, 1.49, 3),
    (7, 5, 3, 1.99, 1);
";

/// Create the fixture database at `path`, replacing nothing.
pub fn create_chinook(path: &Path) -> rusqlite::Result<()> {
    let conn = Connection::open(path)?;
    conn.execute_batch(CHINOOK_SEED_SQL)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Listing {
    pub system: String,
    pub dialect: String,
    /// Predicates that were cut off in the source and filled back in.
    pub reconstructed: bool,
    pub sql: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptFixture {
    pub prompt: u32,
    pub question: String,
    pub note: Option<String>,
    pub listings: Vec<Listing>,
}

pub const PROMPT_LISTINGS_JSON: &str = include_str!("../../fixtures/sql_prompts.json");

pub fn prompt_listings() -> Vec<PromptFixture> {
    serde_json::from_str(PROMPT_LISTINGS_JSON).expect("bundled listings parse")
}

pub fn prompt(n: u32) -> Option<PromptFixture> {
    prompt_listings().into_iter().find(|p| p.prompt == n)
}
