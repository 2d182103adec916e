//! Application configuration read from a TOML file. Every key has a
//! command-line flag of the same name; flags win over the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ChunkConfig;
use crate::index::{default_guard_specs, AnnParams, GuardRuleSpec, IndexConfig, DEFAULT_B, DEFAULT_K1, DEFAULT_RRF_C};
use crate::ports::http::{ENV_API_KEY, ENV_BASE_URL, ENV_MODEL};
use crate::rag::{Persona, RagConfig};
use crate::sql_agent::ThorConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PortMode {
    Stub,
    Scripted,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    Hash,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkSection {
    pub size: usize,
    pub overlap: usize,
}

impl Default for ChunkSection {
    fn default() -> Self {
        let c = ChunkConfig::default();
        Self {
            size: c.size,
            overlap: c.overlap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalSection {
    pub k: usize,
    pub rrf_c: f64,
    pub overfetch: usize,
    pub k1: f64,
    pub b: f64,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self {
            k: 50,
            rrf_c: DEFAULT_RRF_C,
            overfetch: 4,
            k1: DEFAULT_K1,
            b: DEFAULT_B,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnSection {
    pub m: usize,
    pub ef_c: usize,
    pub ef_s: usize,
    pub exact_threshold: usize,
}

impl Default for AnnSection {
    fn default() -> Self {
        let a = AnnParams::default();
        Self {
            m: a.m,
            ef_c: a.ef_c,
            ef_s: a.ef_s,
            exact_threshold: a.exact_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PortsSection {
    pub mode: PortMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    pub embedder: EmbedderKind,
    pub embed_dim: usize,
    pub api_key_env: String,
    pub base_url_env: String,
    pub model_env: String,
}

impl Default for PortsSection {
    fn default() -> Self {
        Self {
            mode: PortMode::Stub,
            script: None,
            embedder: EmbedderKind::Hash,
            embed_dim: crate::ports::HASH_EMBEDDER_DIM,
            api_key_env: ENV_API_KEY.into(),
            base_url_env: ENV_BASE_URL.into(),
            model_env: ENV_MODEL.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThorSection {
    pub max_retries: usize,
    pub threshold: f64,
    pub allow_empty: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub database: Option<PathBuf>,
}

impl Default for ThorSection {
    fn default() -> Self {
        let t = ThorConfig::default();
        Self {
            max_retries: t.max_retries,
            threshold: t.threshold,
            allow_empty: t.allow_empty,
            database: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub ks: Vec<usize>,
    pub ngram_n: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            ks: vec![1, 2, 4, 8, 16, 50],
            ngram_n: crate::eval::trace::DEFAULT_NGRAM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnswerSection {
    pub support_threshold: f64,
    pub max_regenerations: usize,
}

impl Default for AnswerSection {
    fn default() -> Self {
        let r = RagConfig::default();
        Self {
            support_threshold: r.support_threshold,
            max_regenerations: r.max_regenerations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub kb: PathBuf,
    pub seed: u64,
    pub chunk: ChunkSection,
    pub retrieval: RetrievalSection,
    pub ann: AnnSection,
    pub ports: PortsSection,
    pub thor: ThorSection,
    pub eval: EvalSection,
    pub answer: AnswerSection,
    pub persona: Persona,
    pub guards: Vec<GuardRuleSpec>,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            kb: PathBuf::from("kb"),
            seed: AnnParams::default().seed,
            chunk: ChunkSection::default(),
            retrieval: RetrievalSection::default(),
            ann: AnnSection::default(),
            ports: PortsSection::default(),
            thor: ThorSection::default(),
            eval: EvalSection::default(),
            answer: AnswerSection::default(),
            persona: Persona::default(),
            guards: default_guard_specs(),
        }
    }
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        message: message.into(),
    }
}

impl AppConfig {
    /// Parse TOML text; unknown keys are reported with their dotted path.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::new(text);
        let mut unknown = None;
        let parsed: Result<Self, _> = serde_ignored::deserialize(de, |path| {
            unknown.get_or_insert_with(|| path.to_string());
        });
        if let Some(key) = unknown {
            return Err(ConfigError::UnknownKey(key));
        }
        match parsed {
            Ok(cfg) => Ok(cfg),
            Err(e) => Err(ConfigError::Syntax(one_line(&e.to_string()))),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        ChunkConfig::new(self.chunk.size, self.chunk.overlap).map_err(|e| invalid("chunk", e.to_string()))?;
        if self.retrieval.k == 0 {
            return Err(invalid("retrieval.k", "must be positive"));
        }
        if self.retrieval.overfetch == 0 {
            return Err(invalid("retrieval.overfetch", "must be positive"));
        }
        if !(self.retrieval.rrf_c.is_finite() && self.retrieval.rrf_c >= 0.0) {
            return Err(invalid("retrieval.rrf_c", "must be a non-negative number"));
        }
        if !(self.retrieval.k1.is_finite() && self.retrieval.k1 >= 0.0) {
            return Err(invalid("retrieval.k1", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.retrieval.b) {
            return Err(invalid("retrieval.b", "must lie in [0, 1]"));
        }
        if self.ann.m < 2 || self.ann.ef_c == 0 || self.ann.ef_s == 0 {
            return Err(invalid("ann", "m must be at least 2 and beams positive"));
        }
        if self.ports.mode == PortMode::Scripted && self.ports.script.is_none() {
            return Err(invalid("ports.script", "required when ports.mode = \"scripted\""));
        }
        if self.ports.embed_dim == 0 {
            return Err(invalid("ports.embed_dim", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.thor.threshold) {
            return Err(invalid("thor.threshold", "must lie in [0, 1]"));
        }
        let ks = &self.eval.ks;
        if ks.is_empty() || ks[0] == 0 || ks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("eval.ks", "must be positive and strictly increasing"));
        }
        if self.eval.ngram_n == 0 {
            return Err(invalid("eval.ngram_n", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.answer.support_threshold) {
            return Err(invalid("answer.support_threshold", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn chunk_config(&self) -> ChunkConfig {
        ChunkConfig {
            size: self.chunk.size,
            overlap: self.chunk.overlap,
        }
    }

    pub fn ann_params(&self) -> AnnParams {
        AnnParams {
            m: self.ann.m,
            ef_c: self.ann.ef_c,
            ef_s: self.ann.ef_s,
            exact_threshold: self.ann.exact_threshold,
            seed: self.seed,
        }
    }

    pub fn index_config(&self) -> IndexConfig {
        IndexConfig {
            k1: self.retrieval.k1,
            b: self.retrieval.b,
            rrf_c: self.retrieval.rrf_c,
            ann: self.ann_params(),
            chunk: self.chunk_config(),
        }
    }

    pub fn rag_config(&self) -> RagConfig {
        RagConfig {
            k: self.retrieval.k,
            overfetch: self.retrieval.overfetch,
            support_threshold: self.answer.support_threshold,
            max_regenerations: self.answer.max_regenerations,
            ngram_n: self.eval.ngram_n,
        }
    }

    pub fn thor_config(&self) -> ThorConfig {
        ThorConfig {
            max_retries: self.thor.max_retries,
            threshold: self.thor.threshold,
            allow_empty: self.thor.allow_empty,
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
