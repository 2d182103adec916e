//! Grounded question answering over a [`HybridIndex`].
//!
//! Stages run in a fixed order: refine, retrieve, assemble, generate,
//! validate, and then generate/validate again while the verdict is
//! insufficient and the regeneration budget lasts.

pub mod prompt;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{token_texts, ChunkConfig};
use crate::eval::attribution::{fraction, supported_mask_in};
use crate::exec::Execution;
use crate::index::{filter_acl, GuardRules, HybridIndex, IndexError, RetrievalResult};
use crate::ports::{ChatModel, ChatRequest, Embedder, Message, PortError};

pub use prompt::{CostarPrompt, Persona, Snippet};

#[derive(Debug, Error)]
pub enum RagError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("no context retrieved for the question")]
    NoContext,
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("generation failed: {0}")]
    Generation(#[source] PortError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RagConfig {
    pub k: usize,
    /// Candidates fetched per retriever, as a multiple of `k`.
    pub overfetch: usize,
    pub support_threshold: f64,
    pub max_regenerations: usize,
    pub ngram_n: usize,
}

impl Default for RagConfig {
    fn default() -> Self {
        Self {
            k: 50,
            overfetch: 4,
            support_threshold: 0.6,
            max_regenerations: 2,
            ngram_n: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Verdict {
    Sufficient,
    Insufficient { reason: String },
}

impl Verdict {
    pub fn insufficient(reason: impl Into<String>) -> Self {
        Self::Insufficient { reason: reason.into() }
    }

    pub fn is_sufficient(&self) -> bool {
        matches!(self, Self::Sufficient)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Citation {
    pub snippet: usize,
    pub chunk_id: String,
    pub doc_id: String,
    pub version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draft {
    pub text: String,
    pub citations: Vec<Citation>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedAnswer {
    pub question: String,
    pub refined_question: String,
    pub answer: String,
    pub citations: Vec<Citation>,
    pub verdict: Verdict,
    pub regenerations: usize,
    pub web_search_requested: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Refine,
    Retrieve,
    Assemble,
    Generate,
    Validate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub elapsed_us: u64,
    pub detail: String,
}

/// Everything that happened while answering one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySession {
    pub question: String,
    pub refined_question: Option<String>,
    pub principal: String,
    pub k: usize,
    pub chunk: ChunkConfig,
    pub stages: Vec<StageRecord>,
    pub fallbacks: Vec<String>,
    pub warnings: Vec<String>,
    pub prompt: Option<CostarPrompt>,
    pub drafts: Vec<Draft>,
    pub regenerations: usize,
    pub web_search_requested: bool,
}

impl QuerySession {
    fn new(question: &str, principal: &str, k: usize, chunk: ChunkConfig) -> Self {
        Self {
            question: question.into(),
            refined_question: None,
            principal: principal.into(),
            k,
            chunk,
            stages: Vec::new(),
            fallbacks: Vec::new(),
            warnings: Vec::new(),
            prompt: None,
            drafts: Vec::new(),
            regenerations: 0,
            web_search_requested: false,
        }
    }

    fn record(&mut self, stage: Stage, started: Instant, detail: impl Into<String>) {
        self.stages.push(StageRecord {
            stage,
            elapsed_us: started.elapsed().as_micros() as u64,
            detail: detail.into(),
        });
    }

    pub fn stage_sequence(&self) -> Vec<Stage> {
        self.stages.iter().map(|s| s.stage).collect()
    }
}

const STOPWORDS: &[&str] = &[
    "a", "about", "an", "and", "are", "as", "at", "be", "by", "can", "do", "does", "for", "from", "how", "i", "in",
    "is", "it", "me", "of", "on", "or", "our", "tell", "that", "the", "there", "this", "to", "was", "we", "what",
    "when", "where", "which", "who", "why", "with", "you",
];

/// Rewrite `question` through the model; the original is kept when the
/// model fails or returns nothing.
pub fn refine_query(question: &str, chat: &dyn ChatModel) -> (String, Option<String>) {
    let req = ChatRequest::new(vec![Message::system(prompt::REFINE_INSTRUCTION), Message::user(question)]);
    match chat.chat(&req) {
        Ok(resp) if !resp.text.trim().is_empty() => (resp.text.trim().to_string(), None),
        Ok(_) => (question.to_string(), Some("refine: empty rewrite, kept original question".into())),
        Err(e) => (question.to_string(), Some(format!("refine: {e}; kept original question"))),
    }
}

/// Hybrid candidates, ACL filter, truncation to `k`, then guard redaction.
pub fn retrieve(
    query: &str,
    index: &HybridIndex,
    embedder: &dyn Embedder,
    principal: &str,
    guards: &GuardRules,
    config: &RagConfig,
    exec: Execution,
) -> Result<RetrievalResult, IndexError> {
    let candidates = config.k.saturating_mul(config.overfetch.max(1));
    let fused = index.search_hybrid(query, embedder, candidates, exec)?;
    let mut allowed = filter_acl(&fused, index, principal);
    allowed.truncate(config.k);
    let mut out = guards.apply(&allowed);
    out.query = query.to_string();
    Ok(out)
}

pub fn assemble_costar(question: &str, hits: &RetrievalResult, persona: &Persona) -> Result<CostarPrompt, RagError> {
    if hits.hits.is_empty() {
        return Err(RagError::NoContext);
    }
    let snippets = hits
        .hits
        .iter()
        .enumerate()
        .map(|(i, h)| Snippet {
            number: i + 1,
            chunk_id: h.chunk_id.clone(),
            doc_id: h.doc_id.clone(),
            version: h.version,
            text: h.text.clone(),
        })
        .collect();
    Ok(CostarPrompt::new(snippets, question, persona))
}

/// Resolve `[n]` markers in `text` against the prompt's snippets.
pub fn parse_draft(text: &str, prompt: &CostarPrompt) -> Draft {
    let mut citations: Vec<Citation> = Vec::new();
    let mut warnings = Vec::new();
    for marker in prompt::citation_markers(text) {
        match marker {
            prompt::Marker::Number(n) => match prompt.snippet(n) {
                Some(s) => {
                    if !citations.iter().any(|c| c.snippet == n) {
                        citations.push(Citation {
                            snippet: n,
                            chunk_id: s.chunk_id.clone(),
                            doc_id: s.doc_id.clone(),
                            version: s.version,
                        });
                    }
                }
                None => warnings.push(format!(
                    "citation [{n}] dropped: prompt has {} snippets",
                    prompt.snippets.len()
                )),
            },
            prompt::Marker::Unparseable(raw) => warnings.push(format!("unparseable citation marker [{raw}] ignored")),
        }
    }
    Draft {
        text: text.to_string(),
        citations,
        warnings,
    }
}

pub fn generate(prompt: &CostarPrompt, previous: Option<&Draft>, chat: &dyn ChatModel) -> Result<Draft, PortError> {
    let mut messages = vec![Message::user(prompt.render())];
    if let Some(prev) = previous {
        messages.push(Message::assistant(prev.text.clone()));
        messages.push(Message::user(prompt::REGENERATE_INSTRUCTION));
    }
    let resp = chat.chat(&ChatRequest::new(messages))?;
    Ok(parse_draft(resp.text.trim(), prompt))
}

/// Fraction of draft tokens (markers removed) that share an n-gram with
/// some snippet.
pub fn supported_fraction(draft: &str, prompt: &CostarPrompt, n: usize) -> f64 {
    let answer = token_texts(&prompt::strip_citations(draft));
    let contexts: Vec<Vec<String>> = prompt.snippets.iter().map(|s| token_texts(&s.text)).collect();
    let refs: Vec<&[String]> = contexts.iter().map(Vec::as_slice).collect();
    fraction(&supported_mask_in(&answer, &refs, n))
}

fn on_topic(draft: &str, question: &str) -> bool {
    let words: Vec<String> = token_texts(question)
        .into_iter()
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .collect();
    words.is_empty() || token_texts(draft).iter().any(|t| words.contains(t))
}

/// Heuristic checks first; the model critique runs only if they pass. A
/// critique the model cannot deliver leaves the heuristic verdict standing.
pub fn validate(
    draft: &Draft,
    prompt: &CostarPrompt,
    persona: &Persona,
    config: &RagConfig,
    chat: &dyn ChatModel,
) -> (Verdict, Option<String>) {
    if token_texts(&prompt::strip_citations(&draft.text)).is_empty() {
        return (Verdict::insufficient("empty-draft"), None);
    }
    if draft.citations.is_empty() {
        return (Verdict::insufficient("no-citation"), None);
    }
    let supported = supported_fraction(&draft.text, prompt, config.ngram_n);
    if supported < config.support_threshold {
        return (
            Verdict::insufficient(format!(
                "unsupported: {supported:.3} of tokens grounded, need {}",
                config.support_threshold
            )),
            None,
        );
    }
    if persona.strict && !on_topic(&draft.text, &prompt.question) {
        return (Verdict::insufficient("off-topic: draft shares no content word with the question"), None);
    }
    let req = ChatRequest::new(vec![
        Message::system(prompt::CRITIQUE_INSTRUCTION),
        Message::user(prompt::render_critique(&prompt.snippets, &draft.text)),
    ]);
    match chat.chat(&req) {
        Ok(resp) => {
            let text = resp.text.trim();
            if text.to_lowercase().starts_with("sufficient") {
                (Verdict::Sufficient, None)
            } else {
                let reason = text
                    .split_once(':')
                    .map_or(text, |(_, r)| r.trim())
                    .to_string();
                let reason = if reason.is_empty() { "critique".to_string() } else { format!("critique: {reason}") };
                (Verdict::insufficient(reason), None)
            }
        }
        Err(e) => (Verdict::Sufficient, Some(format!("critique unavailable ({e}); heuristic verdict kept"))),
    }
}

/// The collaborators an answer needs; all shared read-only.
#[derive(Clone, Copy)]
pub struct Pipeline<'a> {
    pub index: &'a HybridIndex,
    pub embedder: &'a dyn Embedder,
    pub chat: &'a dyn ChatModel,
    pub guards: &'a GuardRules,
    pub persona: &'a Persona,
    pub config: RagConfig,
    pub exec: Execution,
}

impl Pipeline<'_> {
    pub fn answer(&self, question: &str, principal: &str) -> Result<(GroundedAnswer, QuerySession), RagError> {
        if question.trim().is_empty() {
            return Err(RagError::EmptyQuestion);
        }
        let mut session = QuerySession::new(question, principal, self.config.k, self.index.config().chunk);

        let t = Instant::now();
        let (refined, fallback) = refine_query(question, self.chat);
        session.fallbacks.extend(fallback.clone());
        session.refined_question = Some(refined.clone());
        session.record(Stage::Refine, t, if fallback.is_some() { "fallback" } else { "rewritten" });

        let t = Instant::now();
        let hits = retrieve(
            &refined,
            self.index,
            self.embedder,
            principal,
            self.guards,
            &self.config,
            self.exec,
        )?;
        session.record(Stage::Retrieve, t, format!("{} hits", hits.hits.len()));

        let t = Instant::now();
        let prompt = assemble_costar(&refined, &hits, self.persona)?;
        session.record(Stage::Assemble, t, format!("{} snippets", prompt.snippets.len()));
        session.prompt = Some(prompt.clone());

        let mut best: Option<(f64, usize)> = None;
        let mut verdict;
        loop {
            let t = Instant::now();
            let previous = session.drafts.last();
            let draft = generate(&prompt, previous, self.chat).map_err(RagError::Generation)?;
            session.warnings.extend(draft.warnings.iter().cloned());
            session.record(Stage::Generate, t, format!("{} citations", draft.citations.len()));

            let t = Instant::now();
            let (v, note) = validate(&draft, &prompt, self.persona, &self.config, self.chat);
            session.warnings.extend(note);
            session.record(
                Stage::Validate,
                t,
                match &v {
                    Verdict::Sufficient => "sufficient".to_string(),
                    Verdict::Insufficient { reason } => format!("insufficient: {reason}"),
                },
            );
            let score = if draft.citations.is_empty() {
                -1.0
            } else {
                supported_fraction(&draft.text, &prompt, self.config.ngram_n)
            };
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, session.drafts.len()));
            }
            session.drafts.push(draft);
            verdict = v;
            if verdict.is_sufficient() || session.regenerations >= self.config.max_regenerations {
                break;
            }
            session.regenerations += 1;
        }

        let chosen = if verdict.is_sufficient() {
            session.drafts.len() - 1
        } else {
            session.web_search_requested = true;
            session
                .fallbacks
                .push("web search requested; hook is a no-op, best draft returned".into());
            best.map_or(session.drafts.len() - 1, |(_, i)| i)
        };
        let draft = &session.drafts[chosen];
        let answer = GroundedAnswer {
            question: question.to_string(),
            refined_question: refined,
            answer: draft.text.clone(),
            citations: draft.citations.clone(),
            verdict,
            regenerations: session.regenerations,
            web_search_requested: session.web_search_requested,
        };
        Ok((answer, session))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::index::{IndexConfig, Hit};
    use crate::ports::{ExtractiveModel, HashEmbedder, ScriptEntry, ScriptedModel};

    fn fixture() -> HybridIndex {
        let docs = vec![
            Document::new("policy", 1, "Travel expenses above 500 dollars need director approval. Meals are capped at 60 dollars per day."),
            Document::new("handbook", 1, "The office opens at nine. Badges must be worn at all times."),
            Document::new("secret", 1, "Merger code name is Falcon.").with_acl(["board"]),
        ];
        HybridIndex::build(&docs, IndexConfig::default(), &HashEmbedder::default()).unwrap()
    }

    fn pipeline<'a>(index: &'a HybridIndex, chat: &'a dyn ChatModel, persona: &'a Persona) -> Pipeline<'a> {
        Pipeline {
            index,
            embedder: Box::leak(Box::new(HashEmbedder::default())),
            chat,
            guards: Box::leak(Box::new(GuardRules::default())),
            persona,
            config: RagConfig::default(),
            exec: Execution::Sequential,
        }
    }

    #[test]
    fn extractive_answer_is_grounded_and_cited() {
        let idx = fixture();
        let persona = Persona::default();
        let p = pipeline(&idx, &ExtractiveModel, &persona);
        let (ans, session) = p.answer("What approval do travel expenses need?", "alice").unwrap();
        assert!(ans.answer.starts_with("Travel expenses above 500 dollars need director approval."));
        assert_eq!(ans.citations[0].doc_id, "policy");
        assert!(ans.verdict.is_sufficient());
        assert_eq!(ans.regenerations, 0);
        assert_eq!(
            session.stage_sequence(),
            vec![Stage::Refine, Stage::Retrieve, Stage::Assemble, Stage::Generate, Stage::Validate]
        );
        let again = p.answer("What approval do travel expenses need?", "alice").unwrap().0;
        assert_eq!(ans, again);
    }

    #[test]
    fn refine_fallbacks() {
        let failing = ScriptedModel::new([ScriptEntry::transport_error()]);
        let (q, note) = refine_query("original", &failing);
        assert_eq!(q, "original");
        assert!(note.is_some());
        let empty = ScriptedModel::new(["  "]);
        assert_eq!(refine_query("original", &empty).0, "original");
        let rewrite = ScriptedModel::new(["order exception rate by department, current quarter"]);
        assert_eq!(
            refine_query("What was the order exception rate last quarter?", &rewrite).0,
            "order exception rate by department, current quarter"
        );
    }

    #[test]
    fn acl_hides_documents() {
        let idx = fixture();
        let cfg = RagConfig::default();
        let guards = GuardRules::default();
        let emb = HashEmbedder::default();
        let r = retrieve("falcon merger", &idx, &emb, "alice", &guards, &cfg, Execution::Sequential).unwrap();
        assert!(r.hits.iter().all(|h| h.doc_id != "secret"));
        let r = retrieve("falcon merger", &idx, &emb, "board", &guards, &cfg, Execution::Sequential).unwrap();
        assert_eq!(r.hits[0].doc_id, "secret");
        assert_eq!(r.hits.len(), 3);
    }

    #[test]
    fn no_hits_is_no_context() {
        let r = RetrievalResult::empty("q");
        assert!(matches!(assemble_costar("q", &r, &Persona::default()), Err(RagError::NoContext)));
    }

    fn two_snippet_prompt() -> CostarPrompt {
        let mut r = RetrievalResult::empty("q");
        r.hits = vec![Hit::bare("a@v1#000000", 1.0), Hit::bare("b@v1#000000", 0.5)];
        r.hits[0].text = "alpha beta gamma".into();
        r.hits[1].text = "delta epsilon zeta".into();
        r.renumber();
        assemble_costar("q", &r, &Persona::default()).unwrap()
    }

    #[test]
    fn citation_bounds() {
        let prompt = two_snippet_prompt();
        let d = parse_draft("Per policy X [2]", &prompt);
        assert_eq!(d.citations[0].chunk_id, "b@v1#000000");
        let d = parse_draft("Claim [9]", &prompt);
        assert!(d.citations.is_empty());
        assert_eq!(d.warnings.len(), 1);
    }

    #[test]
    fn heuristic_verdicts() {
        let prompt = two_snippet_prompt();
        let cfg = RagConfig::default();
        let persona = Persona::default();
        let never = ScriptedModel::new(Vec::<ScriptEntry>::new());
        let (v, _) = validate(&parse_draft("alpha beta gamma", &prompt), &prompt, &persona, &cfg, &never);
        assert_eq!(v, Verdict::insufficient("no-citation"));
        let ok = ScriptedModel::new(["sufficient"]);
        let (v, _) = validate(&parse_draft("alpha beta gamma [1]", &prompt), &prompt, &persona, &cfg, &ok);
        assert_eq!(v, Verdict::Sufficient);
        assert_eq!(supported_fraction("alpha beta gamma [1]", &prompt, 3), 1.0);
    }

    #[test]
    fn regeneration_cap() {
        let idx = fixture();
        let persona = Persona::default();
        let script = ScriptedModel::new([
            "Travel expenses",
            "Travel expenses above 500 dollars need director approval. [1]",
            "insufficient: too vague",
            "Travel expenses above 500 dollars need director approval. [1]",
            "insufficient: still vague",
            "Travel expenses above 500 dollars need director approval. [1]",
            "insufficient: no",
        ]);
        let (ans, session) = pipeline(&idx, &script, &persona).answer("travel approval?", "alice").unwrap();
        assert_eq!(ans.regenerations, 2);
        assert!(!ans.verdict.is_sufficient());
        assert!(ans.web_search_requested);
        assert_eq!(session.stages.len(), 3 + 2 * 3);
        assert_eq!(script.remaining(), 0);
    }

    #[test]
    fn strict_persona_flags_absent_content() {
        let idx = fixture();
        let persona = Persona {
            strict: true,
            ..Persona::default()
        };
        let (ans, _) = pipeline(&idx, &ExtractiveModel, &persona)
            .answer("quarterly zebra migration statistics", "alice")
            .unwrap();
        assert!(!ans.verdict.is_sufficient());
    }
}
