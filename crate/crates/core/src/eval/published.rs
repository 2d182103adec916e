//! Published benchmark rows, replayable through the report renderers.

use super::report::RetrievalEvalReport;
use super::trace::GenerationReport;

const RETRIEVAL_JSON: &str = include_str!("../../fixtures/published_retrieval.json");
const TRACE_JSON: &str = include_str!("../../fixtures/published_trace.json");

#[derive(serde::Deserialize)]
struct RetrievalTables {
    chunk500: RetrievalEvalReport,
    chunk1000: RetrievalEvalReport,
}

fn tables() -> RetrievalTables {
    serde_json::from_str(RETRIEVAL_JSON).expect("bundled retrieval tables parse")
}

pub fn retrieval_chunk500() -> RetrievalEvalReport {
    tables().chunk500
}

pub fn retrieval_chunk1000() -> RetrievalEvalReport {
    tables().chunk1000
}

pub fn generation_table() -> GenerationReport {
    serde_json::from_str(TRACE_JSON).expect("bundled generation table parses")
}
