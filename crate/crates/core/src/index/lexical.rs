use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::token_texts;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

/// Okapi BM25 inverted index.
///
/// Slots are positions in the index's chunk table, which is sorted by chunk
/// id, so posting lists ordered by slot are ordered by chunk id as well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexicalIndex {
    postings: BTreeMap<String, Vec<(u32, u32)>>,
    chunk_lengths: Vec<u32>,
    avgdl: f64,
    pub k1: f64,
    pub b: f64,
}

impl LexicalIndex {
    /// `docs` are the token streams of each slot, in slot order.
    pub fn build<S: AsRef<str>>(docs: &[Vec<S>], k1: f64, b: f64) -> Self {
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut chunk_lengths = Vec::with_capacity(docs.len());
        for (slot, tokens) in docs.iter().enumerate() {
            chunk_lengths.push(tokens.len() as u32);
            let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t.as_ref()).or_default() += 1;
            }
            for (term, count) in tf {
                postings
                    .entry(term.to_string())
                    .or_default()
                    .push((slot as u32, count));
            }
        }
        let total: u64 = chunk_lengths.iter().map(|&l| l as u64).sum();
        let avgdl = if docs.is_empty() {
            0.0
        } else {
            total as f64 / docs.len() as f64
        };
        Self {
            postings,
            chunk_lengths,
            avgdl,
            k1,
            b,
        }
    }

    pub fn len(&self) -> usize {
        self.chunk_lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunk_lengths.is_empty()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.len() as f64;
        let df = self.doc_freq(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Distinct query terms in first-occurrence order.
    pub fn query_terms(query: &str) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        token_texts(query)
            .into_iter()
            .filter(|t| seen.insert(t.clone()))
            .collect()
    }

    /// Scores of every slot matching at least one query term, by slot.
    pub fn score_all(&self, query: &str) -> Vec<(u32, f64)> {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for term in Self::query_terms(query) {
            let Some(list) = self.postings.get(&term) else {
                continue;
            };
            let idf = self.idf(&term);
            for &(slot, tf) in list {
                let dl = self.chunk_lengths[slot as usize] as f64;
                let tf = tf as f64;
                let part =
                    idf * tf * (self.k1 + 1.0) / (tf + self.k1 * (1.0 - self.b + self.b * dl / self.avgdl));
                *acc.entry(slot).or_insert(0.0) += part;
            }
        }
        acc.into_iter().collect()
    }

    /// Top `k` slots by score, ties broken by slot (chunk id) ascending.
    pub fn search(&self, query: &str, k: usize) -> Vec<(u32, f64)> {
        let mut scored = self.score_all(query);
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(k);
        scored
    }
}
