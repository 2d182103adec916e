//! Document ingestion, tokenization and chunking.
//!
//! Documents are stored append-only: every ingest or rollback writes a new
//! version file and an audit line, and existing version files are never
//! rewritten.

mod chunk;
mod store;
mod tokenize;

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chunk::{
    chunk_document, chunk_document_with, chunk_id, window_spans, Chunk, ChunkConfig,
    DEFAULT_CHUNK_OVERLAP, DEFAULT_CHUNK_SIZE,
};
pub use store::{AuditRecord, IngestOutcome, VersionStore};
pub use tokenize::{token_texts, tokenize, Token, Tokenizer, WordTokenizer};

pub const WILDCARD_PRINCIPAL: &str = "*";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid chunk config: overlap {overlap} must be smaller than size {size} (size > 0)")]
    InvalidChunkConfig { size: usize, overlap: usize },
    #[error("invalid document id {0:?}")]
    InvalidDocId(String),
    #[error("document {0:?} not found")]
    DocumentNotFound(String),
    #[error("version {version} of document {doc_id:?} not found")]
    VersionNotFound { doc_id: String, version: u32 },
    #[error("store write failed at {path}: {source}")]
    StoreWrite {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("store read failed at {path}: {source}")]
    StoreRead {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt store entry {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("line {line}: {message}")]
    MalformedInput { line: usize, message: String },
}

/// One immutable version of a source document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub version: u32,
    pub text: String,
    pub mime: String,
    pub author: String,
    pub created_at: String,
    pub acl: BTreeSet<String>,
}

impl Document {
    /// Public-by-default document, mostly useful in tests and synthetic corpora.
    pub fn new(doc_id: impl Into<String>, version: u32, text: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            version,
            text: text.into(),
            mime: "text/plain".into(),
            author: String::new(),
            created_at: String::new(),
            acl: default_acl(),
        }
    }

    pub fn with_acl<I, S>(mut self, principals: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.acl = normalize_acl(principals.into_iter().map(Into::into).collect());
        self
    }

    pub fn allows(&self, principal: &str) -> bool {
        acl_allows(&self.acl, principal)
    }
}

pub fn acl_allows(acl: &BTreeSet<String>, principal: &str) -> bool {
    acl.contains(WILDCARD_PRINCIPAL) || acl.contains(principal)
}

fn default_acl() -> BTreeSet<String> {
    BTreeSet::from([WILDCARD_PRINCIPAL.to_string()])
}

fn normalize_acl(acl: BTreeSet<String>) -> BTreeSet<String> {
    let acl: BTreeSet<String> = acl
        .into_iter()
        .map(|p| p.trim().to_string())
        .filter(|p| !p.is_empty())
        .collect();
    if acl.is_empty() {
        default_acl()
    } else {
        acl
    }
}

/// A document as it arrives on the JSON Lines corpus input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub id: String,
    pub text: String,
    #[serde(default = "default_mime")]
    pub mime: String,
    #[serde(default)]
    pub author: String,
    #[serde(default)]
    pub created_at: Option<String>,
    #[serde(default)]
    pub acl: Vec<String>,
}

fn default_mime() -> String {
    "text/plain".into()
}

impl RawDocument {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            mime: default_mime(),
            author: String::new(),
            created_at: None,
            acl: Vec::new(),
        }
    }
}

/// Parse a JSON Lines corpus. Blank lines are skipped; errors carry the
/// 1-based line number.
pub fn parse_corpus_jsonl(input: &str) -> Result<Vec<RawDocument>, CorpusError> {
    let mut docs = Vec::new();
    for (i, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawDocument =
            serde_json::from_str(line).map_err(|e| CorpusError::MalformedInput {
                line: i + 1,
                message: e.to_string(),
            })?;
        if !is_valid_doc_id(&raw.id) {
            return Err(CorpusError::MalformedInput {
                line: i + 1,
                message: format!("invalid document id {:?}", raw.id),
            });
        }
        docs.push(raw);
    }
    Ok(docs)
}

/// Ids become directory names, so only a conservative character set is allowed.
pub fn is_valid_doc_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 200
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}
