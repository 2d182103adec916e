use serde_json::json;

use super::http::HttpSettings;
use super::PortError;
use crate::corpus::token_texts;
use crate::exec::Execution;

pub const HASH_EMBEDDER_DIM: usize = 256;

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    /// One vector per input, in input order. Never returns partial results.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, PortError>;

    fn embed_one(&self, text: &str) -> Result<Vec<f32>, PortError> {
        let mut out = self.embed(&[text.to_string()])?;
        out.pop()
            .ok_or_else(|| PortError::Embedder("empty embedding response".into()))
    }
}

/// Bag-of-tokens feature hashing.
///
/// Each token's 64-bit FNV-1a hash picks coordinate `h mod dim` and adds -1
/// when the top bit is set, +1 otherwise. The sum is L2-normalized unless it
/// is all zero.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    exec: Execution,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(HASH_EMBEDDER_DIM)
    }
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            dim,
            exec: Execution::default(),
        }
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn embed_text(&self, text: &str) -> Vec<f32> {
        let mut acc = vec![0f64; self.dim];
        for tok in token_texts(text) {
            let h = fnv1a64(tok.as_bytes());
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            acc[(h % self.dim as u64) as usize] += sign;
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return vec![0.0; self.dim];
        }
        acc.iter().map(|x| (x / norm) as f32).collect()
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, PortError> {
        Ok(self.exec.map(texts, |t| self.embed_text(t)))
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

/// Embeddings endpoint speaking the common `{"model", "input"}` →
/// `{"data":[{"embedding":[…]}]}` shape.
pub struct HttpEmbedder {
    settings: HttpSettings,
    dim: usize,
}

impl HttpEmbedder {
    pub fn new(settings: HttpSettings, dim: usize) -> Self {
        Self { settings, dim }
    }
}

impl Embedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, PortError> {
        let body = json!({ "model": self.settings.model, "input": texts });
        let value = self.settings.post_json("embeddings", &body)?;
        let data = value["data"]
            .as_array()
            .ok_or_else(|| PortError::Transport("response missing data array".into()))?;
        if data.len() != texts.len() {
            return Err(PortError::Transport(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                data.len()
            )));
        }
        data.iter()
            .map(|item| {
                let v: Vec<f32> = item["embedding"]
                    .as_array()
                    .ok_or_else(|| PortError::Transport("embedding missing".into()))?
                    .iter()
                    .map(|x| x.as_f64().unwrap_or(0.0) as f32)
                    .collect();
                if v.len() != self.dim {
                    return Err(PortError::Embedder(format!(
                        "expected dimension {}, got {}",
                        self.dim,
                        v.len()
                    )));
                }
                Ok(normalize(v))
            })
            .collect()
    }
}

pub(crate) fn normalize(mut v: Vec<f32>) -> Vec<f32> {
    let norm = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x = (*x as f64 / norm) as f32;
        }
    }
    v
}
