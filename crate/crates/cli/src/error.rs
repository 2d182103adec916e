use std::path::Path;

use esap_core::config::ConfigError;
use esap_core::corpus::CorpusError;
use esap_core::eval::EvalError;
use esap_core::index::IndexError;
use esap_core::ports::PortError;
use esap_core::rag::RagError;
use esap_core::sql_agent::ThorError;
use thiserror::Error;

use crate::args::FlagError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Config = 1,
    Data = 2,
    Port = 3,
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub code: ExitCode,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(code: ExitCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            kind,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(ExitCode::Config, "config", message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(ExitCode::Data, "data", message)
    }

    pub fn read(path: &Path, e: std::io::Error) -> Self {
        Self::config(format!("cannot read {}: {e}", path.display()))
    }

    pub fn write(path: &Path, e: std::io::Error) -> Self {
        Self::data(format!("cannot write {}: {e}", path.display()))
    }

    /// One-line JSON for the error stream.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "error": self.kind,
            "exit_code": self.code as i32,
            "message": self.message.split_whitespace().collect::<Vec<_>>().join(" "),
        })
        .to_string()
    }
}

impl From<FlagError> for CliError {
    fn from(e: FlagError) -> Self {
        Self::config(format!("invalid value for `{}`: {}", e.key, e.message))
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::config(e.to_string())
    }
}

impl From<PortError> for CliError {
    fn from(e: PortError) -> Self {
        match e {
            PortError::Config(_) => Self::config(e.to_string()),
            _ => Self::new(ExitCode::Port, "port", e.to_string()),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::InvalidChunkConfig { .. } => Self::config(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::Corpus(c) => c.into(),
            IndexError::EmbedderFailure { source, .. } | IndexError::QueryEmbedding(source) => source.into(),
            IndexError::InvalidGuardPattern { .. } => Self::config(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<RagError> for CliError {
    fn from(e: RagError) -> Self {
        match e {
            RagError::EmptyQuestion => Self::config(e.to_string()),
            RagError::NoContext => Self::data(e.to_string()),
            RagError::Index(i) => i.into(),
            RagError::Generation(p) => p.into(),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InvalidKs(_) => Self::config(e.to_string()),
            EvalError::Index(i) => i.into(),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<ThorError> for CliError {
    fn from(e: ThorError) -> Self {
        Self::data(e.to_string())
    }
}
