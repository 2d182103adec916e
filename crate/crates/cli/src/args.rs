use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use esap_core::config::{AppConfig, EmbedderKind, PortMode};
use esap_core::eval::RetrievalMode;
use esap_core::index::GuardRuleSpec;

#[derive(Debug, Parser)]
#[command(name = "esap", version, about = "Grounded document QA, self-correcting SQL agent and their benchmarks")]
pub struct Cli {
    /// Knowledge-base directory (docs, audit log, index).
    #[arg(long, global = true, value_name = "DIR")]
    pub kb: Option<PathBuf>,
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Human-readable output instead of JSON.
    #[arg(long, global = true)]
    pub pretty: bool,
    /// Seed for every randomized step (ANN graph construction).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long, global = true, help_heading = "Chunking")]
    pub chunk_size: Option<usize>,
    #[arg(long, global = true, help_heading = "Chunking")]
    pub overlap: Option<usize>,

    /// Hits returned to the answer pipeline.
    #[arg(long, global = true, help_heading = "Retrieval")]
    pub k: Option<usize>,
    /// Reciprocal rank fusion constant.
    #[arg(long, global = true, help_heading = "Retrieval")]
    pub rrf_c: Option<f64>,
    /// Candidates fetched per list, as a multiple of k.
    #[arg(long, global = true, help_heading = "Retrieval")]
    pub overfetch: Option<usize>,
    #[arg(long, global = true, help_heading = "Retrieval")]
    pub k1: Option<f64>,
    #[arg(long, global = true, help_heading = "Retrieval")]
    pub b: Option<f64>,

    /// Neighbours per ANN graph node.
    #[arg(long, global = true, help_heading = "ANN")]
    pub ann_m: Option<usize>,
    #[arg(long, global = true, help_heading = "ANN")]
    pub ef_c: Option<usize>,
    #[arg(long, global = true, help_heading = "ANN")]
    pub ef_s: Option<usize>,
    /// Below this many chunks dense search is exhaustive.
    #[arg(long, global = true, help_heading = "ANN")]
    pub exact_threshold: Option<usize>,

    /// Chat port: `stub`, `http` or `scripted:<file>`.
    #[arg(long, global = true, value_name = "MODE", help_heading = "Ports")]
    pub ports: Option<String>,
    /// Script file for the scripted chat port.
    #[arg(long, global = true, value_name = "FILE", help_heading = "Ports")]
    pub script: Option<PathBuf>,
    /// Embedder port: `hash` or `http`.
    #[arg(long, global = true, help_heading = "Ports")]
    pub embedder: Option<String>,
    #[arg(long, global = true, help_heading = "Ports")]
    pub embed_dim: Option<usize>,
    /// Name of the variable holding the bearer token.
    #[arg(long, global = true, value_name = "VAR", help_heading = "Ports")]
    pub api_key_env: Option<String>,
    #[arg(long, global = true, value_name = "VAR", help_heading = "Ports")]
    pub base_url_env: Option<String>,
    #[arg(long, global = true, value_name = "VAR", help_heading = "Ports")]
    pub model_env: Option<String>,

    #[arg(long, global = true, help_heading = "SQL agent")]
    pub max_retries: Option<usize>,
    /// Minimum rating that accepts a query result.
    #[arg(long, global = true, help_heading = "SQL agent")]
    pub threshold: Option<f64>,
    /// Accept empty result tables.
    #[arg(long, global = true, help_heading = "SQL agent")]
    pub allow_empty: bool,
    /// SQLite database queried by the SQL agent.
    #[arg(long, global = true, value_name = "FILE", help_heading = "SQL agent")]
    pub db: Option<PathBuf>,

    /// Comma-separated cutoffs, e.g. 1,2,4,8,16,50.
    #[arg(long, global = true, value_delimiter = ',', help_heading = "Evaluation")]
    pub ks: Option<Vec<usize>>,
    #[arg(long, global = true, help_heading = "Evaluation")]
    pub ngram_n: Option<usize>,

    /// Share of answer tokens that must be found in the context.
    #[arg(long, global = true, help_heading = "Answering")]
    pub support_threshold: Option<f64>,
    #[arg(long, global = true, help_heading = "Answering")]
    pub max_regenerations: Option<usize>,

    #[arg(long, global = true, help_heading = "Persona")]
    pub objective: Option<String>,
    #[arg(long, global = true, help_heading = "Persona")]
    pub style: Option<String>,
    #[arg(long, global = true, help_heading = "Persona")]
    pub tone: Option<String>,
    #[arg(long, global = true, help_heading = "Persona")]
    pub audience: Option<String>,
    #[arg(long, global = true, help_heading = "Persona")]
    pub response: Option<String>,
    /// Flag answers that stray from the question.
    #[arg(long, global = true, help_heading = "Persona")]
    pub strict: bool,

    /// Guard rule `name:kind:pattern`; repeat to build the list.
    #[arg(long = "guard", global = true, value_name = "RULE", help_heading = "Guards")]
    pub guards: Vec<String>,
    /// Disable all guard rules.
    #[arg(long, global = true, help_heading = "Guards")]
    pub no_guards: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Version JSONL documents into the knowledge base.
    Ingest {
        #[arg(long, value_name = "JSONL")]
        corpus: PathBuf,
    },
    /// Chunk the latest documents and write the hybrid index.
    Index,
    /// Ranked chunks for a query.
    Query {
        #[arg(long)]
        q: String,
        #[arg(long, default_value = "*")]
        principal: String,
    },
    /// Grounded answer with citations, or a batch of answers as a runs file.
    Ask {
        #[arg(long, required_unless_present = "questions")]
        q: Option<String>,
        #[arg(long, default_value = "*")]
        principal: String,
        /// QA dataset JSONL answered in batch.
        #[arg(long, value_name = "JSONL", conflicts_with = "q")]
        questions: Option<PathBuf>,
        /// System name written into each run record.
        #[arg(long, default_value = "esap")]
        system: String,
        /// Runs JSONL written in batch mode.
        #[arg(long, value_name = "FILE", requires = "questions")]
        runs_out: Option<PathBuf>,
    },
    /// Answer a question over the SQL database with self-correction.
    Sql {
        #[arg(long)]
        q: String,
        /// Include the result table in the output.
        #[arg(long)]
        verbose: bool,
        /// Create the music-store fixture at --db when it does not exist.
        #[arg(long)]
        create_fixture: bool,
    },
    /// Recall@k and Precision@k over QA datasets.
    EvalRetrieval {
        /// `name=path` or `path` (name taken from the file stem); repeatable.
        #[arg(long = "dataset", value_name = "DATASET", required = true)]
        datasets: Vec<String>,
        #[arg(long, default_value = "hybrid")]
        mode: RetrievalMode,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Plain-text table written alongside the JSON report.
        #[arg(long, value_name = "FILE")]
        text_out: Option<PathBuf>,
    },
    /// Token-attribution metrics over a runs file.
    EvalTrace {
        #[arg(long, value_name = "JSONL")]
        runs: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        text_out: Option<PathBuf>,
    },
    /// Tool version.
    Version,
}

/// Invalid flag value, reported with the config key it maps to.
#[derive(Debug)]
pub struct FlagError {
    pub key: &'static str,
    pub message: String,
}

fn parse_ports(value: &str) -> Result<(PortMode, Option<PathBuf>), FlagError> {
    let err = |m: &str| FlagError {
        key: "ports.mode",
        message: m.to_string(),
    };
    match value.split_once(':') {
        Some(("scripted", path)) if !path.is_empty() => Ok((PortMode::Scripted, Some(PathBuf::from(path)))),
        Some(_) => Err(err("expected scripted:<file>")),
        None => match value {
            "stub" => Ok((PortMode::Stub, None)),
            "http" => Ok((PortMode::Http, None)),
            "scripted" => Ok((PortMode::Scripted, None)),
            other => Err(err(&format!("unknown port mode {other:?}"))),
        },
    }
}

fn parse_guard(rule: &str) -> Result<GuardRuleSpec, FlagError> {
    let mut parts = rule.splitn(3, ':');
    match (parts.next(), parts.next(), parts.next()) {
        (Some(name), Some(kind), Some(pattern)) if !name.is_empty() && !kind.is_empty() => {
            Ok(GuardRuleSpec::new(name, pattern, kind))
        }
        _ => Err(FlagError {
            key: "guards",
            message: format!("expected name:kind:pattern, got {rule:?}"),
        }),
    }
}

impl Cli {
    /// Fold every flag that was given into `cfg`.
    pub fn apply(&self, cfg: &mut AppConfig) -> Result<(), FlagError> {
        let o = &self.overrides;
        macro_rules! set {
            ($($field:expr => $flag:expr),* $(,)?) => {
                $(if let Some(v) = $flag.clone() { $field = v; })*
            };
        }
        set! {
            cfg.kb => self.kb,
            cfg.seed => self.seed,
            cfg.chunk.size => o.chunk_size,
            cfg.chunk.overlap => o.overlap,
            cfg.retrieval.k => o.k,
            cfg.retrieval.rrf_c => o.rrf_c,
            cfg.retrieval.overfetch => o.overfetch,
            cfg.retrieval.k1 => o.k1,
            cfg.retrieval.b => o.b,
            cfg.ann.m => o.ann_m,
            cfg.ann.ef_c => o.ef_c,
            cfg.ann.ef_s => o.ef_s,
            cfg.ann.exact_threshold => o.exact_threshold,
            cfg.ports.embed_dim => o.embed_dim,
            cfg.ports.api_key_env => o.api_key_env,
            cfg.ports.base_url_env => o.base_url_env,
            cfg.ports.model_env => o.model_env,
            cfg.thor.max_retries => o.max_retries,
            cfg.thor.threshold => o.threshold,
            cfg.eval.ks => o.ks,
            cfg.eval.ngram_n => o.ngram_n,
            cfg.answer.support_threshold => o.support_threshold,
            cfg.answer.max_regenerations => o.max_regenerations,
            cfg.persona.objective => o.objective,
            cfg.persona.style => o.style,
            cfg.persona.tone => o.tone,
            cfg.persona.audience => o.audience,
            cfg.persona.response => o.response,
        }
        if let Some(p) = &o.ports {
            let (mode, script) = parse_ports(p)?;
            cfg.ports.mode = mode;
            if script.is_some() {
                cfg.ports.script = script;
            }
        }
        if let Some(s) = &o.script {
            cfg.ports.script = Some(s.clone());
        }
        if let Some(e) = &o.embedder {
            cfg.ports.embedder = match e.as_str() {
                "hash" => EmbedderKind::Hash,
                "http" => EmbedderKind::Http,
                other => {
                    return Err(FlagError {
                        key: "ports.embedder",
                        message: format!("unknown embedder {other:?}"),
                    })
                }
            };
        }
        if let Some(db) = &o.db {
            cfg.thor.database = Some(db.clone());
        }
        if o.allow_empty {
            cfg.thor.allow_empty = true;
        }
        if o.strict {
            cfg.persona.strict = true;
        }
        if o.no_guards {
            cfg.guards.clear();
        }
        if !o.guards.is_empty() {
            cfg.guards = o.guards.iter().map(|g| parse_guard(g)).collect::<Result<_, _>>()?;
        }
        Ok(())
    }
}
