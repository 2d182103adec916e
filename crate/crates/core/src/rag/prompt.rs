//! Prompt texts and the CO-STAR layout, plus the parsers the offline model
//! uses to read them back.

use serde::{Deserialize, Serialize};

pub const REFINE_INSTRUCTION: &str =
    "Rewrite the user question to maximize retrieval precision; output only the rewritten question.";

pub const CRITIQUE_INSTRUCTION: &str = "Judge whether the draft answer is fully supported by the context. \
Reply with \"sufficient\" or \"insufficient: <reason>\".";

pub const REGENERATE_INSTRUCTION: &str =
    "The previous answer was judged insufficient. Answer again using only the context and cite snippets as [n].";

const CRITIQUE_CONTEXT: &str = "CONTEXT:\n";
const CRITIQUE_DRAFT: &str = "\nDRAFT:\n";

/// Section texts of the answer prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Persona {
    pub objective: String,
    pub style: String,
    pub tone: String,
    pub audience: String,
    pub response: String,
    /// Also require the answer to share a content word with the question.
    pub strict: bool,
}

impl Default for Persona {
    fn default() -> Self {
        Self {
            objective: "Answer the question strictly from the provided context and cite the snippets you use.".into(),
            style: "Concise and professional.".into(),
            tone: "Neutral.".into(),
            audience: "Business analyst.".into(),
            response: "Short paragraphs with [n] citation markers that refer to the numbered context snippets.".into(),
            strict: false,
        }
    }
}

/// A numbered context entry with its provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub number: usize,
    pub chunk_id: String,
    pub doc_id: String,
    pub version: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostarPrompt {
    pub snippets: Vec<Snippet>,
    pub objective: String,
    pub style: String,
    pub tone: String,
    pub audience: String,
    pub response: String,
    pub question: String,
}

fn one_line(text: &str) -> String {
    text.split(['\n', '\r']).filter(|s| !s.is_empty()).collect::<Vec<_>>().join(" ")
}

impl CostarPrompt {
    pub fn new(snippets: Vec<Snippet>, question: &str, persona: &Persona) -> Self {
        Self {
            snippets,
            objective: one_line(&persona.objective),
            style: one_line(&persona.style),
            tone: one_line(&persona.tone),
            audience: one_line(&persona.audience),
            response: one_line(&persona.response),
            question: one_line(question),
        }
    }

    /// Snippets without provenance, numbered from 1.
    pub fn from_snippets(texts: Vec<String>, question: &str, persona: &Persona) -> Self {
        let snippets = texts
            .into_iter()
            .enumerate()
            .map(|(i, text)| Snippet {
                number: i + 1,
                chunk_id: String::new(),
                doc_id: String::new(),
                version: 0,
                text,
            })
            .collect();
        Self::new(snippets, question, persona)
    }

    pub fn snippet(&self, number: usize) -> Option<&Snippet> {
        number.checked_sub(1).and_then(|i| self.snippets.get(i))
    }

    /// Snippet texts are flattened to one line each so numbering survives.
    pub fn render(&self) -> String {
        let mut out = String::from("# CONTEXT\n");
        for s in &self.snippets {
            out.push_str(&format!("[{}] {}\n", s.number, one_line(&s.text)));
        }
        for (head, body) in [
            ("OBJECTIVE", &self.objective),
            ("STYLE", &self.style),
            ("TONE", &self.tone),
            ("AUDIENCE", &self.audience),
            ("RESPONSE", &self.response),
        ] {
            out.push_str(&format!("# {head}\n{body}\n"));
        }
        out.push_str("QUESTION: ");
        out.push_str(&self.question);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostarParts {
    pub snippets: Vec<String>,
    pub question: String,
}

/// Read back a rendered prompt; `None` unless the layout matches.
pub fn parse_costar(text: &str) -> Option<CostarParts> {
    let rest = text.strip_prefix("# CONTEXT\n")?;
    let (context, tail) = rest.split_once("# OBJECTIVE\n")?;
    let question = tail.rsplit_once("\nQUESTION: ")?.1;
    let mut snippets = Vec::new();
    for (i, line) in context.lines().enumerate() {
        let body = line.strip_prefix(&format!("[{}] ", i + 1))?;
        snippets.push(body.to_string());
    }
    Some(CostarParts {
        snippets,
        question: question.to_string(),
    })
}

pub fn render_critique(snippets: &[Snippet], draft: &str) -> String {
    let context: Vec<String> = snippets.iter().map(|s| one_line(&s.text)).collect();
    format!("{CRITIQUE_CONTEXT}{}{CRITIQUE_DRAFT}{draft}", context.join("\n"))
}

/// Split a critique request into (context, draft).
pub fn parse_critique(body: &str) -> Option<(String, String)> {
    let rest = body.strip_prefix(CRITIQUE_CONTEXT)?;
    let (context, draft) = rest.split_once(CRITIQUE_DRAFT)?;
    Some((context.to_string(), draft.to_string()))
}

/// A bracketed marker that starts with a digit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Marker {
    Number(usize),
    Unparseable(String),
}

pub fn citation_markers(text: &str) -> Vec<Marker> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('[') {
        let after = &rest[open + 1..];
        let Some(close) = after.find([']', '[']) else { break };
        if after.as_bytes()[close] == b'[' {
            rest = &after[close..];
            continue;
        }
        let inner = &after[..close];
        if inner.trim_start().starts_with(|c: char| c.is_ascii_digit()) {
            out.push(match inner.trim().parse::<usize>() {
                Ok(n) => Marker::Number(n),
                Err(_) => Marker::Unparseable(inner.to_string()),
            });
        }
        rest = &after[close + 1..];
    }
    out
}

/// Remove `[n]` markers and the whitespace they leave behind.
pub fn strip_citations(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('[') {
        let after = &rest[open + 1..];
        match after.find(']') {
            Some(close) if !after[..close].is_empty() && after[..close].chars().all(|c| c.is_ascii_digit()) => {
                out.push_str(rest[..open].trim_end_matches(' '));
                rest = &after[close + 1..];
                if !out.is_empty() && !rest.is_empty() && !rest.starts_with([' ', '.', ',', ';', ':', '!', '?']) {
                    out.push(' ');
                }
            }
            _ => {
                out.push_str(&rest[..open + 1]);
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out.trim().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_is_exact() {
        let persona = Persona {
            objective: "O".into(),
            style: "S".into(),
            tone: "T".into(),
            audience: "A".into(),
            response: "R".into(),
            strict: false,
        };
        let p = CostarPrompt::from_snippets(vec!["one".into(), "two".into()], "why?", &persona);
        assert_eq!(
            p.render(),
            "# CONTEXT\n[1] one\n[2] two\n# OBJECTIVE\nO\n# STYLE\nS\n# TONE\nT\n# AUDIENCE\nA\n# RESPONSE\nR\nQUESTION: why?"
        );
    }

    #[test]
    fn render_parse_round_trip() {
        let p = CostarPrompt::from_snippets(
            vec!["multi\nline text".into(), "b".into()],
            "q",
            &Persona::default(),
        );
        let parts = parse_costar(&p.render()).unwrap();
        assert_eq!(parts.snippets, vec!["multi line text", "b"]);
        assert_eq!(parts.question, "q");
        assert!(parse_costar("hello").is_none());
    }

    #[test]
    fn critique_round_trip() {
        let snips = CostarPrompt::from_snippets(vec!["a b".into()], "q", &Persona::default()).snippets;
        let body = render_critique(&snips, "draft [1]");
        assert_eq!(parse_critique(&body), Some(("a b".into(), "draft [1]".into())));
    }

    #[test]
    fn markers_and_stripping() {
        assert_eq!(
            citation_markers("Per policy X [2] and [9]; see [note] or [1a]."),
            vec![Marker::Number(2), Marker::Number(9), Marker::Unparseable("1a".into())]
        );
        assert_eq!(strip_citations("Per policy X [2]."), "Per policy X.");
        assert_eq!(strip_citations("a [1] b [2]"), "a b");
        assert_eq!(strip_citations("keep [x] text"), "keep [x] text");
    }
}
