//! Grounded document question answering over a versioned corpus, a
//! self-correcting SQL agent, and the benchmarks that score both.

pub mod config;
pub mod corpus;
pub mod eval;
pub mod exec;
pub mod index;
pub mod ports;
pub mod rag;
pub mod sql_agent;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
