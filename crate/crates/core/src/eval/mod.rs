//! Retrieval (Recall/Precision@k) and generation-quality (token
//! attribution) benchmarks.

pub mod attribution;
pub mod published;
pub mod report;
pub mod retrieval;
pub mod synthetic;
pub mod trace;

use thiserror::Error;

use crate::index::IndexError;

pub use attribution::{supported_mask, supported_mask_in};
pub use report::{run_retrieval_benchmark, BenchmarkRun, ReportConfig, ReportRow, RetrievalEvalReport, ALL_ROW};
pub use retrieval::{
    locate_evidence, parse_dataset_jsonl, precision_at_k, recall_at_k, BenchmarkConfig, ChunkSpan, Dataset,
    Evidence, GoldSpan, QaRecord, RetrievalMode,
};
pub use trace::{
    parse_runs_jsonl, run_generation_benchmark, runs_to_jsonl, trace_scores, GenerationReport, RunRecord,
    SystemRow, TraceScores,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("question {qid}: evidence {quote:?} not found in document {doc_id:?}")]
    EvidenceNotFound { qid: String, doc_id: String, quote: String },
    #[error("dataset format error at line {line}: {message}")]
    DatasetFormat { line: usize, message: String },
    #[error("runs format error at line {line}: {message}")]
    RunsFormat { line: usize, message: String },
    #[error("k values must be positive and strictly increasing, got {0:?}")]
    InvalidKs(Vec<usize>),
    #[error("answer and contexts must contain tokens")]
    EmptyInput,
    #[error(transparent)]
    Index(#[from] IndexError),
}
