use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::{tokenize, Document};
use crate::exec::Execution;
use crate::index::{HybridIndex, Hit, RetrievalResult};
use crate::ports::Embedder;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub doc_id: String,
    pub quote: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRecord {
    pub qid: String,
    pub question: String,
    pub evidence: Vec<Evidence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    pub records: Vec<QaRecord>,
}

pub fn parse_dataset_jsonl(name: &str, input: &str) -> Result<Dataset, EvalError> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: QaRecord = serde_json::from_str(line).map_err(|e| EvalError::DatasetFormat {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    Ok(Dataset {
        name: name.to_string(),
        records,
    })
}

/// A located evidence quote: a token range of one document version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldSpan {
    pub doc_id: String,
    pub version: u32,
    pub token_start: usize,
    pub token_end: usize,
}

impl GoldSpan {
    pub fn tokens(&self) -> Range<usize> {
        self.token_start..self.token_end
    }
}

/// Lowercased text with whitespace runs collapsed to one space, plus the
/// source byte offset of every output char (and one past the end).
fn normalize_with_offsets(text: &str) -> (String, Vec<usize>) {
    let mut out = String::with_capacity(text.len());
    let mut offsets = Vec::with_capacity(text.len() + 1);
    let mut pending_space: Option<usize> = None;
    for (pos, ch) in text.char_indices() {
        if ch.is_whitespace() {
            pending_space.get_or_insert(pos);
            continue;
        }
        if let Some(sp) = pending_space.take() {
            if !out.is_empty() {
                out.push(' ');
                offsets.push(sp);
            }
        }
        for lower in ch.to_lowercase() {
            out.push(lower);
            for _ in 0..lower.len_utf8() {
                offsets.push(pos);
            }
        }
    }
    offsets.push(text.len());
    (out, offsets)
}

pub fn normalize(text: &str) -> String {
    normalize_with_offsets(text).0
}

fn byte_end(text: &str, start: usize) -> usize {
    text[start..].chars().next().map_or(start, |c| start + c.len_utf8())
}

/// Token span of the first normalized occurrence of `quote` in `doc`.
pub fn locate_quote(doc: &Document, quote: &str) -> Option<GoldSpan> {
    let needle = normalize(quote);
    if needle.is_empty() {
        return None;
    }
    let (hay, offsets) = normalize_with_offsets(&doc.text);
    let at = hay.find(&needle)?;
    let src_start = offsets[at];
    let last = at + needle.len() - 1;
    let src_end = byte_end(&doc.text, offsets[last]);
    let tokens = tokenize(&doc.text);
    let inside: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.start < src_end && t.end > src_start)
        .map(|(i, _)| i)
        .collect();
    let (&first, &last) = (inside.first()?, inside.last()?);
    Some(GoldSpan {
        doc_id: doc.doc_id.clone(),
        version: doc.version,
        token_start: first,
        token_end: last + 1,
    })
}

pub fn locate_evidence(record: &QaRecord, docs: &BTreeMap<String, Document>) -> Result<Vec<GoldSpan>, EvalError> {
    if record.evidence.is_empty() {
        return Err(EvalError::EvidenceNotFound {
            qid: record.qid.clone(),
            doc_id: String::new(),
            quote: String::new(),
        });
    }
    record
        .evidence
        .iter()
        .map(|ev| {
            docs.get(&ev.doc_id)
                .and_then(|d| locate_quote(d, &ev.quote))
                .ok_or_else(|| EvalError::EvidenceNotFound {
                    qid: record.qid.clone(),
                    doc_id: ev.doc_id.clone(),
                    quote: ev.quote.clone(),
                })
        })
        .collect()
}

/// A retrieved chunk's token range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkSpan {
    pub doc_id: String,
    pub version: u32,
    pub token_start: usize,
    pub token_end: usize,
}

impl From<&Hit> for ChunkSpan {
    fn from(h: &Hit) -> Self {
        Self {
            doc_id: h.doc_id.clone(),
            version: h.version,
            token_start: h.token_start,
            token_end: h.token_end,
        }
    }
}

type TokenKey<'a> = (&'a str, u32, usize);

fn gold_tokens(gold: &[GoldSpan]) -> BTreeSet<TokenKey<'_>> {
    gold.iter()
        .flat_map(|g| g.tokens().map(move |t| (g.doc_id.as_str(), g.version, t)))
        .collect()
}

/// Share of gold tokens covered by the union of the retrieved spans.
pub fn recall_at_k(retrieved: &[ChunkSpan], gold: &[GoldSpan]) -> f64 {
    let gold = gold_tokens(gold);
    if gold.is_empty() {
        return 0.0;
    }
    let covered = gold
        .iter()
        .filter(|(doc, ver, t)| {
            retrieved
                .iter()
                .any(|c| c.doc_id == *doc && c.version == *ver && (c.token_start..c.token_end).contains(t))
        })
        .count();
    covered as f64 / gold.len() as f64
}

/// Share of retrieved tokens (counted per chunk) that lie in a gold span.
pub fn precision_at_k(retrieved: &[ChunkSpan], gold: &[GoldSpan]) -> f64 {
    let gold = gold_tokens(gold);
    let total: usize = retrieved.iter().map(|c| c.token_end - c.token_start).sum();
    if total == 0 {
        return 0.0;
    }
    let inside: usize = retrieved
        .iter()
        .map(|c| {
            (c.token_start..c.token_end)
                .filter(|t| gold.contains(&(c.doc_id.as_str(), c.version, *t)))
                .count()
        })
        .sum();
    inside as f64 / total as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalMode {
    Hybrid,
    Lexical,
    Dense,
}

impl std::str::FromStr for RetrievalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hybrid" => Ok(Self::Hybrid),
            "lexical" => Ok(Self::Lexical),
            "dense" => Ok(Self::Dense),
            other => Err(format!("unknown retrieval mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub ks: Vec<usize>,
    pub mode: RetrievalMode,
    pub overfetch: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            ks: vec![1, 2, 4, 8, 16, 50],
            mode: RetrievalMode::Hybrid,
            overfetch: 4,
        }
    }
}

/// Ranked retrieval for one question under `mode`, at most `k` hits.
pub fn ranked(
    index: &HybridIndex,
    embedder: &dyn Embedder,
    query: &str,
    k: usize,
    cfg: &BenchmarkConfig,
    exec: Execution,
) -> Result<RetrievalResult, EvalError> {
    let mut r = match cfg.mode {
        RetrievalMode::Lexical => index.search_lexical(query, k),
        RetrievalMode::Dense => index.search_dense_text(query, embedder, k, exec)?,
        RetrievalMode::Hybrid => index.search_hybrid(query, embedder, k.saturating_mul(cfg.overfetch.max(1)), exec)?,
    };
    r.truncate(k);
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionScores {
    pub qid: String,
    pub recall: Vec<f64>,
    pub precision: Vec<f64>,
}

impl QuestionScores {
    pub fn recall_monotone(&self) -> bool {
        self.recall.windows(2).all(|w| w[0] <= w[1])
    }
}

pub enum QuestionOutcome {
    Scored(QuestionScores),
    Excluded(String),
}

/// Scores at every k of `cfg.ks` from one ranked list of `max(ks)` hits.
pub fn score_question(
    record: &QaRecord,
    docs: &BTreeMap<String, Document>,
    index: &HybridIndex,
    embedder: &dyn Embedder,
    cfg: &BenchmarkConfig,
) -> Result<QuestionOutcome, EvalError> {
    let gold = match locate_evidence(record, docs) {
        Ok(g) => g,
        Err(EvalError::EvidenceNotFound { .. }) => return Ok(QuestionOutcome::Excluded(record.qid.clone())),
        Err(e) => return Err(e),
    };
    let max_k = cfg.ks.iter().copied().max().unwrap_or(0);
    let hits = ranked(index, embedder, &record.question, max_k, cfg, Execution::Sequential)?;
    let spans: Vec<ChunkSpan> = hits.hits.iter().map(ChunkSpan::from).collect();
    let mut recall = Vec::with_capacity(cfg.ks.len());
    let mut precision = Vec::with_capacity(cfg.ks.len());
    for &k in &cfg.ks {
        let top = &spans[..k.min(spans.len())];
        recall.push(recall_at_k(top, &gold));
        precision.push(precision_at_k(top, &gold));
    }
    Ok(QuestionOutcome::Scored(QuestionScores {
        qid: record.qid.clone(),
        recall,
        precision,
    }))
}
