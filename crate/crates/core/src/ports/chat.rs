use std::collections::{BTreeSet, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::PortError;
use crate::corpus::token_texts;
use crate::rag::prompt::{self, CostarParts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

pub const DEFAULT_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub temperature: f32,
    pub max_tokens: u32,
    /// Empty means "adapter default".
    pub model: String,
}

impl ChatRequest {
    pub fn new(messages: Vec<Message>) -> Self {
        assert!(!messages.is_empty(), "chat request needs at least one message");
        Self {
            messages,
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            model: String::new(),
        }
    }

    pub fn system_prompt(&self) -> Option<&str> {
        self.messages
            .iter()
            .find(|m| m.role == Role::System)
            .map(|m| m.content.as_str())
    }

    pub fn last_user(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    /// Concatenated message contents, used for predicate matching.
    pub fn joined(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub finish_reason: String,
    pub usage: Usage,
}

impl ChatResponse {
    pub fn complete(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            finish_reason: "complete".into(),
            usage: Usage::default(),
        }
    }
}

pub(crate) fn finish_or_refuse(resp: ChatResponse) -> Result<ChatResponse, PortError> {
    if resp.finish_reason == "complete" {
        Ok(resp)
    } else {
        Err(PortError::ModelRefusal(resp.finish_reason))
    }
}

pub trait ChatModel: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, PortError>;
}

impl<T: ChatModel + ?Sized> ChatModel for &T {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, PortError> {
        (**self).chat(request)
    }
}

impl<T: ChatModel + ?Sized> ChatModel for Box<T> {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, PortError> {
        (**self).chat(request)
    }
}

/// One canned reply. In script files a bare string is shorthand for
/// `{"text": "..."}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptEntry {
    Text(String),
    Full {
        #[serde(default)]
        text: String,
        #[serde(default = "complete_reason")]
        finish_reason: String,
        /// Simulated failure: "transport" or "refusal".
        #[serde(default)]
        error: Option<String>,
        /// The request must contain this substring.
        #[serde(default)]
        when_contains: Option<String>,
    },
}

fn complete_reason() -> String {
    "complete".into()
}

impl ScriptEntry {
    pub fn transport_error() -> Self {
        ScriptEntry::Full {
            text: String::new(),
            finish_reason: complete_reason(),
            error: Some("transport".into()),
            when_contains: None,
        }
    }

    pub fn expecting(text: impl Into<String>, needle: impl Into<String>) -> Self {
        ScriptEntry::Full {
            text: text.into(),
            finish_reason: complete_reason(),
            error: None,
            when_contains: Some(needle.into()),
        }
    }
}

impl From<&str> for ScriptEntry {
    fn from(s: &str) -> Self {
        ScriptEntry::Text(s.to_string())
    }
}

impl From<String> for ScriptEntry {
    fn from(s: String) -> Self {
        ScriptEntry::Text(s)
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    List(Vec<ScriptEntry>),
    Object { responses: Vec<ScriptEntry> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranscriptEntry {
    pub request: ChatRequest,
    pub outcome: Result<String, String>,
}

/// Replays a fixed queue of responses in order.
#[derive(Debug, Default)]
pub struct ScriptedModel {
    state: Mutex<ScriptState>,
}

#[derive(Debug, Default)]
struct ScriptState {
    queue: VecDeque<ScriptEntry>,
    served: usize,
    transcript: Vec<TranscriptEntry>,
}

impl ScriptedModel {
    pub fn new<I, E>(entries: I) -> Self
    where
        I: IntoIterator<Item = E>,
        E: Into<ScriptEntry>,
    {
        Self {
            state: Mutex::new(ScriptState {
                queue: entries.into_iter().map(Into::into).collect(),
                ..Default::default()
            }),
        }
    }

    pub fn from_json(json: &str) -> Result<Self, PortError> {
        let file: ScriptFile = serde_json::from_str(json)
            .map_err(|e| PortError::Config(format!("invalid script: {e}")))?;
        Ok(match file {
            ScriptFile::List(v) | ScriptFile::Object { responses: v } => Self::new(v),
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, PortError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PortError::Config(format!("cannot read script {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn remaining(&self) -> usize {
        self.lock().queue.len()
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.lock().transcript.clone()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, ScriptState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }
}

impl ChatModel for ScriptedModel {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, PortError> {
        let mut state = self.lock();
        let index = state.served;
        let result = match state.queue.pop_front() {
            None => Err(PortError::ScriptExhausted(index)),
            Some(ScriptEntry::Text(text)) => Ok(ChatResponse::complete(text)),
            Some(ScriptEntry::Full { text, finish_reason, error, when_contains }) => {
                match when_contains {
                    Some(needle) if !request.joined().contains(&needle) => {
                        Err(PortError::ScriptMismatch { index, expected: needle })
                    }
                    _ => match error.as_deref() {
                        Some("refusal") => Err(PortError::ModelRefusal("scripted refusal".into())),
                        Some(other) => Err(PortError::Transport(format!("scripted {other} failure"))),
                        None => finish_or_refuse(ChatResponse {
                            text,
                            finish_reason,
                            usage: Usage::default(),
                        }),
                    },
                }
            }
        };
        if !matches!(result, Err(PortError::ScriptExhausted(_))) {
            state.served += 1;
        }
        state.transcript.push(TranscriptEntry {
            request: request.clone(),
            outcome: result.as_ref().map(|r| r.text.clone()).map_err(|e| e.to_string()),
        });
        result
    }
}

/// Offline model that answers grounded prompts by quoting the context.
///
/// * answer prompts: the context sentence sharing the most distinct tokens
///   with the question (earliest on ties), followed by its `[n]` marker;
/// * query rewrites: the question unchanged;
/// * answer critiques: "sufficient" iff every draft sentence occurs verbatim
///   (as a token sequence) in the supplied context.
///
/// Any other request is refused, which sends callers down their fallback
/// paths.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractiveModel;

impl ExtractiveModel {
    fn answer(parts: &CostarParts) -> String {
        let question: BTreeSet<String> = token_texts(&parts.question).into_iter().collect();
        let mut best: Option<(usize, usize, &str)> = None;
        for (n, snippet) in parts.snippets.iter().enumerate() {
            for sentence in split_sentences(snippet) {
                let toks: BTreeSet<String> = token_texts(sentence).into_iter().collect();
                if toks.is_empty() {
                    continue;
                }
                let overlap = toks.intersection(&question).count();
                if best.is_none_or(|(o, _, _)| overlap > o) {
                    best = Some((overlap, n + 1, sentence));
                }
            }
        }
        match best {
            Some((_, n, sentence)) => format!("{sentence} [{n}]"),
            None => String::new(),
        }
    }

    fn critique(body: &str) -> String {
        let Some((context, draft)) = prompt::parse_critique(body) else {
            return "insufficient: unreadable critique request".into();
        };
        let context_tokens = token_texts(&context);
        let draft = prompt::strip_citations(&draft);
        let grounded = split_sentences(&draft).into_iter().all(|s| {
            let toks = token_texts(s);
            toks.is_empty() || contains_subsequence(&context_tokens, &toks)
        });
        if grounded && !token_texts(&draft).is_empty() {
            "sufficient".into()
        } else {
            "insufficient: draft is not quoted from the context".into()
        }
    }
}

impl ChatModel for ExtractiveModel {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, PortError> {
        match request.system_prompt() {
            Some(prompt::REFINE_INSTRUCTION) => {
                let q = request.last_user().unwrap_or_default();
                return Ok(ChatResponse::complete(q));
            }
            Some(prompt::CRITIQUE_INSTRUCTION) => {
                let body = request.last_user().unwrap_or_default();
                return Ok(ChatResponse::complete(Self::critique(body)));
            }
            _ => {}
        }
        let parts = request
            .messages
            .iter()
            .filter(|m| m.role == Role::User)
            .find_map(|m| prompt::parse_costar(&m.content));
        match parts {
            Some(parts) => Ok(ChatResponse::complete(Self::answer(&parts))),
            None => Err(PortError::ModelRefusal(
                "extractive stub only answers grounded prompts".into(),
            )),
        }
    }
}

/// Sentences end at `.`, `!` or `?` followed by whitespace or end of text,
/// or at a newline. Returned slices are trimmed.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (i, &(pos, ch)) in chars.iter().enumerate() {
        let boundary = match ch {
            '.' | '!' | '?' => chars.get(i + 1).is_none_or(|&(_, next)| next.is_whitespace()),
            '\n' => true,
            _ => false,
        };
        if boundary {
            let end = pos + ch.len_utf8();
            let s = text[start..end].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = end;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

fn contains_subsequence(haystack: &[String], needle: &[String]) -> bool {
    needle.len() <= haystack.len() && haystack.windows(needle.len()).any(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_queue_semantics() {
        let m = ScriptedModel::new(["A", "B"]);
        let req = ChatRequest::new(vec![Message::user("q")]);
        assert_eq!(m.chat(&req).unwrap().text, "A");
        assert_eq!(m.chat(&req).unwrap().text, "B");
        assert_eq!(m.chat(&req), Err(PortError::ScriptExhausted(2)));
        assert_eq!(m.transcript().len(), 3);
    }

    #[test]
    fn scripted_replay_is_identical() {
        let run = || {
            let m = ScriptedModel::new(["x", "y"]);
            for q in ["one", "two"] {
                m.chat(&ChatRequest::new(vec![Message::user(q)])).unwrap();
            }
            m.transcript()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn script_file_forms() {
        let m = ScriptedModel::from_json(
            r#"{"responses": ["plain", {"text": "guarded", "when_contains": "SQL"},
                              {"error": "transport"}, {"text": "", "finish_reason": "length"}]}"#,
        )
        .unwrap();
        let plain = ChatRequest::new(vec![Message::user("hello")]);
        assert_eq!(m.chat(&plain).unwrap().text, "plain");
        assert!(matches!(m.chat(&plain), Err(PortError::ScriptMismatch { index: 1, .. })));
        assert!(matches!(m.chat(&plain), Err(PortError::Transport(_))));
        assert!(matches!(m.chat(&plain), Err(PortError::ModelRefusal(_))));
        assert!(ScriptedModel::from_json("{").is_err());
    }

    #[test]
    fn extractive_picks_best_overlap_sentence() {
        let p = prompt::CostarPrompt::from_snippets(
            vec!["X is first. Y is second.".into()],
            "Tell me about Y",
            &prompt::Persona::default(),
        );
        let req = ChatRequest::new(vec![Message::user(p.render())]);
        assert_eq!(ExtractiveModel.chat(&req).unwrap().text, "Y is second. [1]");
    }

    #[test]
    fn extractive_ties_go_to_earliest() {
        let p = prompt::CostarPrompt::from_snippets(
            vec!["Alpha beta.".into(), "Gamma delta.".into()],
            "unrelated words",
            &prompt::Persona::default(),
        );
        let req = ChatRequest::new(vec![Message::user(p.render())]);
        assert_eq!(ExtractiveModel.chat(&req).unwrap().text, "Alpha beta. [1]");
    }

    #[test]
    fn extractive_refuses_other_prompts() {
        let req = ChatRequest::new(vec![Message::user("write some SQL")]);
        assert!(matches!(ExtractiveModel.chat(&req), Err(PortError::ModelRefusal(_))));
    }

    #[test]
    fn sentence_splitting() {
        assert_eq!(
            split_sentences("Version 1.5 is out. Next!\nDone"),
            vec!["Version 1.5 is out.", "Next!", "Done"]
        );
        assert!(split_sentences("  ").is_empty());
    }
}
