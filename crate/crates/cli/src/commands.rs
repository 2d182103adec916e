use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use esap_core::config::{AppConfig, EmbedderKind, PortMode};
use esap_core::corpus::{parse_corpus_jsonl, Document, VersionStore};
use esap_core::eval::{
    parse_dataset_jsonl, parse_runs_jsonl, run_generation_benchmark, run_retrieval_benchmark, runs_to_jsonl,
    BenchmarkConfig, Dataset, RetrievalEvalReport, RetrievalMode, RunRecord,
};
use esap_core::exec::Execution;
use esap_core::index::{GuardRules, HybridIndex, RetrievalResult};
use esap_core::ports::{
    ChatModel, Embedder, ExtractiveModel, HashEmbedder, HttpChatModel, HttpEmbedder, HttpSettings, ScriptedModel,
    SqlExecutor,
};
use esap_core::rag::{GroundedAnswer, Pipeline, QuerySession, RagError};
use esap_core::sql_agent::fixture::create_chinook;
use esap_core::sql_agent::{render_table, Outcome, SqlAgent, ThorAttemptLog, ThorError};
use serde::Serialize;

use crate::args::Command;
use crate::error::{CliError, ExitCode};
use crate::output::{write_file, Envelope};

pub struct Context {
    pub config: AppConfig,
    pub pretty: bool,
    pub exec: Execution,
}

impl Context {
    fn emit<T: Serialize>(&self, command: &'static str, result: T, text: impl FnOnce(&T) -> String) {
        if self.pretty {
            out(&text(&result));
        } else {
            out(&(Envelope::new(&self.config, command, result).compact() + "\n"));
        }
    }

    fn store(&self) -> Result<VersionStore, CliError> {
        Ok(VersionStore::open(&self.config.kb)?)
    }

    fn load_index(&self) -> Result<HybridIndex, CliError> {
        let dir = HybridIndex::index_dir(&self.config.kb);
        if !dir.join("meta.json").is_file() {
            return Err(CliError::data(format!(
                "no index at {}; run `esap index` first",
                dir.display()
            )));
        }
        Ok(HybridIndex::load(&dir)?)
    }

    fn http_settings(&self) -> Result<HttpSettings, CliError> {
        let p = &self.config.ports;
        Ok(HttpSettings::from_env_names(&p.api_key_env, &p.base_url_env, &p.model_env)?)
    }

    fn chat(&self) -> Result<Box<dyn ChatModel>, CliError> {
        Ok(match self.config.ports.mode {
            PortMode::Stub => Box::new(ExtractiveModel),
            PortMode::Scripted => {
                let path = self.config.ports.script.as_deref().expect("validated");
                Box::new(ScriptedModel::from_path(path)?)
            }
            PortMode::Http => Box::new(HttpChatModel::new(self.http_settings()?)),
        })
    }

    fn embedder(&self) -> Result<Box<dyn Embedder>, CliError> {
        let dim = self.config.ports.embed_dim;
        Ok(match self.config.ports.embedder {
            EmbedderKind::Hash => Box::new(HashEmbedder::new(dim).with_execution(self.exec)),
            EmbedderKind::Http => Box::new(HttpEmbedder::new(self.http_settings()?, dim)),
        })
    }

    fn guards(&self) -> Result<GuardRules, CliError> {
        Ok(GuardRules::compile(self.config.guards.clone())?)
    }
}

/// Write to stdout; a closed pipe is not an error.
fn out(text: &str) {
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush());
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::read(path, e))
}

#[derive(Serialize)]
struct VersionInfo {
    name: &'static str,
}

#[derive(Serialize)]
struct AskOutput<'a> {
    answer: &'a GroundedAnswer,
    trace: &'a QuerySession,
}

#[derive(Serialize)]
struct FailedSql<'a> {
    log: &'a ThorAttemptLog,
}

#[derive(Serialize)]
struct RetrievalOutput {
    report: RetrievalEvalReport,
    excluded: Vec<Excluded>,
}

pub fn run(ctx: &Context, command: &Command) -> Result<(), CliError> {
    match command {
        Command::Ingest { corpus } => ingest(ctx, corpus),
        Command::Index => index(ctx),
        Command::Query { q, principal } => query(ctx, q, principal),
        Command::Ask {
            q,
            principal,
            questions,
            system,
            runs_out,
        } => match (q, questions) {
            (Some(q), _) => ask_one(ctx, q, principal),
            (None, Some(file)) => ask_batch(ctx, file, principal, system, runs_out.as_deref()),
            (None, None) => Err(CliError::config("ask needs --q or --questions")),
        },
        Command::Sql { q, verbose, create_fixture } => sql(ctx, q, *verbose, *create_fixture),
        Command::EvalRetrieval {
            datasets,
            mode,
            out,
            text_out,
        } => eval_retrieval(ctx, datasets, *mode, out.as_deref(), text_out.as_deref()),
        Command::EvalTrace { runs, out, text_out } => eval_trace(ctx, runs, out.as_deref(), text_out.as_deref()),
        Command::Version => {
            ctx.emit("version", VersionInfo { name: "esap" }, |_| {
                format!("esap {}\n", esap_core::TOOL_VERSION)
            });
            Ok(())
        }
    }
}

fn ingest(ctx: &Context, corpus: &Path) -> Result<(), CliError> {
    let raws = parse_corpus_jsonl(&read(corpus)?)?;
    let store = ctx.store()?;
    let (mut created, mut updated) = (0, 0);
    for raw in raws {
        if store.ingest(raw)?.created {
            created += 1;
        } else {
            updated += 1;
        }
    }
    out(&format!("ingested={created} updated={updated}\n"));
    Ok(())
}

#[derive(Serialize)]
struct IndexSummary {
    chunks: usize,
    documents: usize,
    dim: usize,
    exact: bool,
    chunk_size: usize,
    overlap: usize,
    path: PathBuf,
}

fn index(ctx: &Context) -> Result<(), CliError> {
    let docs = ctx.store()?.latest_documents()?;
    let embedder = ctx.embedder()?;
    let index = HybridIndex::build(&docs, ctx.config.index_config(), &*embedder)?;
    let dir = HybridIndex::index_dir(&ctx.config.kb);
    index.save(&dir)?;
    let chunk = index.config().chunk;
    let summary = IndexSummary {
        chunks: index.len(),
        documents: docs.len(),
        dim: index.dim(),
        exact: index.dense().is_exact(),
        chunk_size: chunk.size,
        overlap: chunk.overlap,
        path: dir,
    };
    ctx.emit("index", summary, |s| {
        format!(
            "indexed {} chunks from {} documents (dim={}, size={}, overlap={})\n",
            s.chunks, s.documents, s.dim, s.chunk_size, s.overlap
        )
    });
    Ok(())
}

fn hits_table(r: &RetrievalResult) -> String {
    let mut out = format!("query: {}\n", r.query);
    for h in &r.hits {
        let preview: String = h.text.chars().take(70).collect();
        out.push_str(&format!("{:>3}  {:.6}  {}  {}\n", h.rank, h.fused_score, h.chunk_id, preview));
    }
    out
}

fn query(ctx: &Context, q: &str, principal: &str) -> Result<(), CliError> {
    let index = ctx.load_index()?;
    let embedder = ctx.embedder()?;
    let result = esap_core::rag::retrieve(
        q,
        &index,
        &*embedder,
        principal,
        &ctx.guards()?,
        &ctx.config.rag_config(),
        ctx.exec,
    )?;
    ctx.emit("query", result, hits_table);
    Ok(())
}

fn ask_one(ctx: &Context, q: &str, principal: &str) -> Result<(), CliError> {
    let index = ctx.load_index()?;
    let embedder = ctx.embedder()?;
    let chat = ctx.chat()?;
    let guards = ctx.guards()?;
    let pipeline = Pipeline {
        index: &index,
        embedder: &*embedder,
        chat: &*chat,
        guards: &guards,
        persona: &ctx.config.persona,
        config: ctx.config.rag_config(),
        exec: ctx.exec,
    };
    let (answer, trace) = pipeline.answer(q, principal)?;
    ctx.emit("ask", AskOutput { answer: &answer, trace: &trace }, |_| {
        let mut out = format!("{}\n", answer.answer);
        for c in &answer.citations {
            out.push_str(&format!("  [{}] {} (v{})\n", c.snippet, c.doc_id, c.version));
        }
        out.push_str(&format!("verdict: {:?}\n", answer.verdict));
        out
    });
    Ok(())
}

#[derive(Serialize)]
struct Skipped {
    qid: String,
    reason: String,
}

#[derive(Serialize)]
struct BatchSummary {
    answered: usize,
    skipped: Vec<Skipped>,
    #[serde(skip_serializing_if = "Option::is_none")]
    runs_out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    runs: Option<Vec<RunRecord>>,
}

fn dataset_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
}

fn ask_batch(
    ctx: &Context,
    questions: &Path,
    principal: &str,
    system: &str,
    runs_out: Option<&Path>,
) -> Result<(), CliError> {
    let dataset = parse_dataset_jsonl(&dataset_name(questions), &read(questions)?)?;
    let index = ctx.load_index()?;
    let embedder = ctx.embedder()?;
    let chat = ctx.chat()?;
    let guards = ctx.guards()?;
    let pipeline = Pipeline {
        index: &index,
        embedder: &*embedder,
        chat: &*chat,
        guards: &guards,
        persona: &ctx.config.persona,
        config: ctx.config.rag_config(),
        exec: ctx.exec,
    };
    let mut runs = Vec::new();
    let mut skipped = Vec::new();
    for record in &dataset.records {
        match pipeline.answer(&record.question, principal) {
            Ok((answer, trace)) => runs.push(RunRecord {
                qid: record.qid.clone(),
                system: system.to_string(),
                question: record.question.clone(),
                answer: answer.answer,
                contexts: trace.prompt.map(|p| p.snippets.into_iter().map(|s| s.text).collect()).unwrap_or_default(),
                gold_answer: record.gold_answer.clone(),
                human_accuracy: None,
            }),
            Err(e @ (RagError::NoContext | RagError::EmptyQuestion)) => skipped.push(Skipped {
                qid: record.qid.clone(),
                reason: e.to_string(),
            }),
            Err(e) => return Err(e.into()),
        }
    }
    if let Some(path) = runs_out {
        write_file(path, &runs_to_jsonl(&runs))?;
    }
    let summary = BatchSummary {
        answered: runs.len(),
        skipped,
        runs_out: runs_out.map(Path::to_path_buf),
        runs: runs_out.is_none().then_some(runs),
    };
    ctx.emit("ask", summary, |s| {
        format!("answered={} skipped={}\n", s.answered, s.skipped.len())
    });
    Ok(())
}

fn sql(ctx: &Context, q: &str, verbose: bool, create_fixture: bool) -> Result<(), CliError> {
    let db = ctx
        .config
        .thor
        .database
        .clone()
        .ok_or_else(|| CliError::config("no database given; set --db or thor.database"))?;
    if create_fixture && !db.exists() {
        create_chinook(&db).map_err(|e| CliError::data(format!("cannot create fixture {}: {e}", db.display())))?;
    }
    if !db.is_file() {
        return Err(CliError::config(format!("database {} does not exist", db.display())));
    }
    let executor = SqlExecutor::new(&db);
    let chat = ctx.chat()?;
    let agent = SqlAgent {
        executor: &executor,
        chat: &*chat,
        config: ctx.config.thor_config(),
    };
    match agent.run(q, verbose) {
        Ok(answer) => {
            ctx.emit("sql", &answer, |a| {
                let mut out = String::new();
                if let Some(t) = &a.table {
                    out.push_str(&render_table(t));
                    out.push('\n');
                }
                out.push_str(&a.insight.narrative);
                out.push('\n');
                out
            });
            Ok(())
        }
        Err(ThorError::Failed(log)) => {
            let all_port = log.attempts.iter().all(|a| matches!(a.outcome, Outcome::GenerationFailed(_)));
            let message = format!("no acceptable SQL after {} attempts", log.attempts.len());
            ctx.emit("sql", FailedSql { log: &log }, |_| format!("{message}\n"));
            Err(if all_port {
                CliError::new(ExitCode::Port, "port", format!("{message}: model unavailable"))
            } else {
                CliError::data(message)
            })
        }
        Err(e) => Err(e.into()),
    }
}

fn parse_dataset_arg(arg: &str) -> Result<Dataset, CliError> {
    let (name, path) = match arg.split_once('=') {
        Some((n, p)) if !n.is_empty() => (n.to_string(), PathBuf::from(p)),
        _ => (dataset_name(Path::new(arg)), PathBuf::from(arg)),
    };
    let dataset = parse_dataset_jsonl(&name, &read(&path)?).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(dataset)
}

#[derive(Serialize)]
struct Excluded {
    dataset: String,
    qid: String,
}

fn eval_retrieval(
    ctx: &Context,
    dataset_args: &[String],
    mode: RetrievalMode,
    out: Option<&Path>,
    text_out: Option<&Path>,
) -> Result<(), CliError> {
    let datasets = dataset_args.iter().map(|a| parse_dataset_arg(a)).collect::<Result<Vec<_>, _>>()?;
    let docs: BTreeMap<String, Document> = ctx
        .store()?
        .latest_documents()?
        .into_iter()
        .map(|d| (d.doc_id.clone(), d))
        .collect();
    let index = ctx.load_index()?;
    let embedder = ctx.embedder()?;
    let cfg = BenchmarkConfig {
        ks: ctx.config.eval.ks.clone(),
        mode,
        overfetch: ctx.config.retrieval.overfetch,
    };
    let run = run_retrieval_benchmark(&datasets, &docs, &index, &*embedder, &cfg, ctx.exec)?;
    let text = run.report.render_text();
    let excluded: Vec<Excluded> = run
        .excluded
        .into_iter()
        .map(|(dataset, qid)| Excluded { dataset, qid })
        .collect();
    let result = RetrievalOutput {
        report: run.report,
        excluded,
    };
    if let Some(path) = out {
        write_file(path, &Envelope::new(&ctx.config, "eval-retrieval", &result).pretty())?;
    }
    if let Some(path) = text_out {
        write_file(path, &text)?;
    }
    ctx.emit("eval-retrieval", result, |_| text.clone());
    Ok(())
}

fn eval_trace(ctx: &Context, runs: &Path, out: Option<&Path>, text_out: Option<&Path>) -> Result<(), CliError> {
    let records = parse_runs_jsonl(&read(runs)?)?;
    let report = run_generation_benchmark(&records, ctx.config.eval.ngram_n, ctx.exec)?;
    if let Some(path) = out {
        write_file(path, &Envelope::new(&ctx.config, "eval-trace", &report).pretty())?;
    }
    if let Some(path) = text_out {
        write_file(path, &report.render_text())?;
    }
    ctx.emit("eval-trace", report, |r| r.render_text());
    Ok(())
}
