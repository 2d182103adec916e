//! Immutable hybrid index: BM25 over chunk tokens plus dense vectors,
//! combined by reciprocal rank fusion.

mod dense;
mod filter;
mod fusion;
pub mod hnsw;
mod lexical;
mod persist;

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{acl_allows, chunk_document, token_texts, Chunk, ChunkConfig, CorpusError, Document};
use crate::exec::Execution;
use crate::ports::{Embedder, PortError};

pub use dense::{similarity, AnnParams, DenseIndex};
pub use filter::{default_guard_specs, filter_acl, GuardRuleSpec, GuardRules};
pub use fusion::{fuse, DEFAULT_RRF_C};
pub use lexical::{LexicalIndex, DEFAULT_B, DEFAULT_K1};
pub use persist::{IndexMeta, FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot build an index over an empty corpus")]
    EmptyCorpus,
    #[error("index is empty")]
    EmptyIndex,
    #[error("vector dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("embedder failed on chunk {chunk_id}: {source}")]
    EmbedderFailure {
        chunk_id: String,
        #[source]
        source: PortError,
    },
    #[error("query embedding failed: {0}")]
    QueryEmbedding(#[source] PortError),
    #[error("guard rule {name:?} has an invalid pattern: {message}")]
    InvalidGuardPattern { name: String, message: String },
    #[error("index format version {found} is not supported (expected {expected})")]
    FormatVersionMismatch { found: u32, expected: u32 },
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("index I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexConfig {
    pub k1: f64,
    pub b: f64,
    pub rrf_c: f64,
    pub ann: AnnParams,
    pub chunk: ChunkConfig,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            k1: DEFAULT_K1,
            b: DEFAULT_B,
            rrf_c: DEFAULT_RRF_C,
            ann: AnnParams::default(),
            chunk: ChunkConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexedChunk {
    pub chunk: Chunk,
    pub acl: BTreeSet<String>,
}

/// One ranked retrieval hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub chunk_id: String,
    pub doc_id: String,
    pub version: u32,
    pub token_start: usize,
    pub token_end: usize,
    pub text: String,
    pub lexical_score: Option<f64>,
    pub dense_score: Option<f64>,
    pub fused_score: f64,
    pub rank: usize,
}

impl Hit {
    fn from_chunk(c: &Chunk, score: f64) -> Self {
        Self {
            chunk_id: c.chunk_id.clone(),
            doc_id: c.doc_id.clone(),
            version: c.version,
            token_start: c.token_start,
            token_end: c.token_end,
            text: c.text.clone(),
            lexical_score: None,
            dense_score: None,
            fused_score: score,
            rank: 0,
        }
    }

    /// A hit with only an id; handy for exercising fusion in isolation.
    pub fn bare(chunk_id: &str, score: f64) -> Self {
        Self {
            chunk_id: chunk_id.into(),
            doc_id: String::new(),
            version: 0,
            token_start: 0,
            token_end: 0,
            text: String::new(),
            lexical_score: None,
            dense_score: None,
            fused_score: score,
            rank: 0,
        }
    }

    pub fn token_span(&self) -> std::ops::Range<usize> {
        self.token_start..self.token_end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query: String,
    pub hits: Vec<Hit>,
    /// Filters and combination steps applied, in order.
    pub filters: Vec<String>,
}

impl RetrievalResult {
    pub fn empty(query: &str) -> Self {
        Self {
            query: query.into(),
            hits: Vec::new(),
            filters: Vec::new(),
        }
    }

    /// Reassign contiguous ranks 1..n in current order.
    pub fn renumber(&mut self) {
        for (i, h) in self.hits.iter_mut().enumerate() {
            h.rank = i + 1;
        }
    }

    pub fn truncate(&mut self, k: usize) {
        self.hits.truncate(k);
    }

    pub fn chunk_ids(&self) -> Vec<&str> {
        self.hits.iter().map(|h| h.chunk_id.as_str()).collect()
    }
}

/// Chunk table, lexical index and dense index over the same chunk set.
/// Chunks are sorted by id; a chunk's position is its slot in both indexes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridIndex {
    config: IndexConfig,
    chunks: Vec<IndexedChunk>,
    lexical: LexicalIndex,
    dense: DenseIndex,
}

const EMBED_BATCH: usize = 64;

impl HybridIndex {
    pub fn build(docs: &[Document], config: IndexConfig, embedder: &dyn Embedder) -> Result<Self, IndexError> {
        config.chunk.validate()?;
        let mut chunks = Vec::new();
        for doc in docs {
            for chunk in chunk_document(doc, config.chunk)? {
                chunks.push(IndexedChunk {
                    chunk,
                    acl: doc.acl.clone(),
                });
            }
        }
        Self::from_chunks(chunks, config, embedder)
    }

    pub fn from_chunks(
        mut chunks: Vec<IndexedChunk>,
        config: IndexConfig,
        embedder: &dyn Embedder,
    ) -> Result<Self, IndexError> {
        if chunks.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }
        chunks.sort_by(|a, b| a.chunk.chunk_id.cmp(&b.chunk.chunk_id));
        let token_streams: Vec<Vec<String>> = chunks.iter().map(|c| token_texts(&c.chunk.text)).collect();
        let lexical = LexicalIndex::build(&token_streams, config.k1, config.b);

        let mut vectors = Vec::with_capacity(chunks.len());
        for batch in chunks.chunks(EMBED_BATCH) {
            let texts: Vec<String> = batch.iter().map(|c| c.chunk.text.clone()).collect();
            let embedded = embedder.embed(&texts).map_err(|source| IndexError::EmbedderFailure {
                chunk_id: batch[0].chunk.chunk_id.clone(),
                source,
            })?;
            vectors.extend(embedded);
        }
        let dense = DenseIndex::build(vectors, embedder.dim(), config.ann)?;
        Ok(Self {
            config,
            chunks,
            lexical,
            dense,
        })
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dense.dim()
    }

    pub fn chunks(&self) -> &[IndexedChunk] {
        &self.chunks
    }

    pub fn lexical(&self) -> &LexicalIndex {
        &self.lexical
    }

    pub fn dense(&self) -> &DenseIndex {
        &self.dense
    }

    pub fn slot_of(&self, chunk_id: &str) -> Option<usize> {
        self.chunks
            .binary_search_by(|c| c.chunk.chunk_id.as_str().cmp(chunk_id))
            .ok()
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&IndexedChunk> {
        self.slot_of(chunk_id).map(|s| &self.chunks[s])
    }

    pub fn allows(&self, chunk_id: &str, principal: &str) -> bool {
        self.chunk(chunk_id).is_some_and(|c| acl_allows(&c.acl, principal))
    }

    fn result_from(&self, query: &str, scored: Vec<(u32, f64)>, lexical: bool, tag: &str) -> RetrievalResult {
        let hits = scored
            .into_iter()
            .map(|(slot, score)| {
                let mut h = Hit::from_chunk(&self.chunks[slot as usize].chunk, score);
                if lexical {
                    h.lexical_score = Some(score);
                } else {
                    h.dense_score = Some(score);
                }
                h
            })
            .collect();
        let mut r = RetrievalResult {
            query: query.into(),
            hits,
            filters: vec![tag.into()],
        };
        r.renumber();
        r
    }

    /// BM25 top-k; only chunks sharing a term with the query are returned.
    pub fn search_lexical(&self, query: &str, k: usize) -> RetrievalResult {
        self.result_from(query, self.lexical.search(query, k), true, "lexical")
    }

    pub fn search_dense(&self, query_vector: &[f32], k: usize, exec: Execution) -> Result<RetrievalResult, IndexError> {
        let scored = self.dense.search(query_vector, k, exec)?;
        Ok(self.result_from("", scored, false, "dense"))
    }

    pub fn search_dense_text(
        &self,
        query: &str,
        embedder: &dyn Embedder,
        k: usize,
        exec: Execution,
    ) -> Result<RetrievalResult, IndexError> {
        let v = embedder.embed_one(query).map_err(IndexError::QueryEmbedding)?;
        let mut r = self.search_dense(&v, k, exec)?;
        r.query = query.into();
        Ok(r)
    }

    /// Fused lexical + dense candidates, `candidates` from each side.
    pub fn search_hybrid(
        &self,
        query: &str,
        embedder: &dyn Embedder,
        candidates: usize,
        exec: Execution,
    ) -> Result<RetrievalResult, IndexError> {
        if self.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        let lex = self.search_lexical(query, candidates);
        let den = self.search_dense_text(query, embedder, candidates, exec)?;
        Ok(fuse(&[&lex, &den], self.config.rrf_c))
    }

    /// SHA-256 of the serialized index; constant for the lifetime of a build.
    pub fn content_hash(&self) -> String {
        let bytes = bincode::serialize(self).expect("index serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
