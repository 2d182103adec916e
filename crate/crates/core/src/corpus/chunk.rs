use serde::{Deserialize, Serialize};

use super::tokenize::{Token, Tokenizer, WordTokenizer};
use super::{CorpusError, Document};

pub const DEFAULT_CHUNK_SIZE: usize = 1000;
pub const DEFAULT_CHUNK_OVERLAP: usize = 150;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkConfig {
    pub size: usize,
    pub overlap: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        Self {
            size: DEFAULT_CHUNK_SIZE,
            overlap: DEFAULT_CHUNK_OVERLAP,
        }
    }
}

impl ChunkConfig {
    pub fn new(size: usize, overlap: usize) -> Result<Self, CorpusError> {
        let cfg = Self { size, overlap };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.size == 0 || self.overlap >= self.size {
            return Err(CorpusError::InvalidChunkConfig {
                size: self.size,
                overlap: self.overlap,
            });
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.size - self.overlap
    }
}

/// A token window of one document version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub version: u32,
    /// Half-open token indices into the document's token stream.
    pub token_start: usize,
    pub token_end: usize,
    pub text: String,
}

impl Chunk {
    pub fn size_tokens(&self) -> usize {
        self.token_end - self.token_start
    }

    pub fn token_span(&self) -> std::ops::Range<usize> {
        self.token_start..self.token_end
    }
}

/// Zero-padded so lexical order of ids matches document order.
pub fn chunk_id(doc_id: &str, version: u32, ordinal: usize) -> String {
    format!("{doc_id}@v{version}#{ordinal:06}")
}

/// Half-open token windows `[start, end)` for a stream of `n_tokens`.
pub fn window_spans(n_tokens: usize, cfg: ChunkConfig) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    if n_tokens == 0 {
        return spans;
    }
    let stride = cfg.stride();
    let mut start = 0;
    loop {
        let end = (start + cfg.size).min(n_tokens);
        spans.push((start, end));
        if end == n_tokens {
            break;
        }
        start += stride;
    }
    spans
}

pub fn chunk_document(doc: &Document, cfg: ChunkConfig) -> Result<Vec<Chunk>, CorpusError> {
    chunk_document_with(doc, cfg, &WordTokenizer)
}

pub fn chunk_document_with(
    doc: &Document,
    cfg: ChunkConfig,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<Chunk>, CorpusError> {
    cfg.validate()?;
    let tokens = tokenizer.tokenize(&doc.text);
    Ok(chunk_tokens(doc, &tokens, cfg))
}

pub(crate) fn chunk_tokens(doc: &Document, tokens: &[Token], cfg: ChunkConfig) -> Vec<Chunk> {
    window_spans(tokens.len(), cfg)
        .into_iter()
        .enumerate()
        .map(|(ordinal, (s, e))| Chunk {
            chunk_id: chunk_id(&doc.doc_id, doc.version, ordinal),
            doc_id: doc.doc_id.clone(),
            version: doc.version,
            token_start: s,
            token_end: e,
            text: doc.text[tokens[s].start..tokens[e - 1].end].to_string(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize::token_texts;
    use proptest::prelude::*;

    fn doc(text: &str) -> Document {
        Document::new("d", 1, text)
    }

    fn spans(chunks: &[Chunk]) -> Vec<(usize, usize)> {
        chunks.iter().map(|c| (c.token_start, c.token_end)).collect()
    }

    #[test]
    fn stride_windows() {
        let text = (0..10).map(|i| format!("t{i}")).collect::<Vec<_>>().join(" ");
        let chunks = chunk_document(&doc(&text), ChunkConfig::new(4, 1).unwrap()).unwrap();
        assert_eq!(spans(&chunks), vec![(0, 4), (3, 7), (6, 10)]);
        assert_eq!(chunks[1].text, "t3 t4 t5 t6");
    }

    #[test]
    fn short_document_single_chunk() {
        let chunks = chunk_document(&doc("one two three four"), ChunkConfig::default()).unwrap();
        assert_eq!(spans(&chunks), vec![(0, 4)]);
        assert_eq!(ChunkConfig::default(), ChunkConfig { size: 1000, overlap: 150 });
    }

    #[test]
    fn rejects_overlap_not_below_size() {
        assert!(matches!(
            ChunkConfig::new(500, 500),
            Err(CorpusError::InvalidChunkConfig { .. })
        ));
        assert!(ChunkConfig::new(500, 1000).is_err());
        assert!(ChunkConfig::new(0, 0).is_err());
    }

    #[test]
    fn empty_document_has_no_chunks() {
        assert!(chunk_document(&doc(" ,, "), ChunkConfig::new(3, 1).unwrap())
            .unwrap()
            .is_empty());
    }

    fn direct_count(n: usize, size: usize, overlap: usize) -> usize {
        if n == 0 {
            return 0;
        }
        let rest = n.saturating_sub(size);
        rest.div_ceil(size - overlap) + 1
    }

    proptest! {
        #[test]
        fn windows_round_trip(n in 0usize..400, size in 1usize..60, ov in 0usize..60) {
            prop_assume!(ov < size);
            let cfg = ChunkConfig::new(size, ov).unwrap();
            let spans = window_spans(n, cfg);
            prop_assert_eq!(spans.len(), direct_count(n, size, ov));
            let mut rebuilt = Vec::new();
            let mut prev_end = 0;
            for (i, &(s, e)) in spans.iter().enumerate() {
                prop_assert!(e - s <= size && e > s);
                if i > 0 {
                    let prev = spans[i - 1];
                    prop_assert_eq!(prev.1 - s, ov.min(prev.1 - prev.0));
                }
                rebuilt.extend(prev_end.max(s)..e);
                prev_end = e;
            }
            prop_assert_eq!(rebuilt, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn chunk_text_matches_tokens(words in proptest::collection::vec("[a-zA-Z0-9]{1,6}", 1..80),
                                     size in 1usize..20, ov in 0usize..20) {
            prop_assume!(ov < size);
            let text = words.join(", ");
            let d = doc(&text);
            let chunks = chunk_document(&d, ChunkConfig::new(size, ov).unwrap()).unwrap();
            let all = token_texts(&text);
            for c in &chunks {
                prop_assert_eq!(token_texts(&c.text), all[c.token_span()].to_vec());
            }
        }
    }
}
