use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{HybridIndex, IndexError, RetrievalResult};

/// Keep hits whose document grants `principal` (or "*"); order preserved,
/// ranks renumbered.
pub fn filter_acl(result: &RetrievalResult, index: &HybridIndex, principal: &str) -> RetrievalResult {
    let mut out = result.clone();
    out.hits.retain(|h| index.allows(&h.chunk_id, principal));
    let tag = format!("acl({principal})");
    if !out.filters.contains(&tag) {
        out.filters.push(tag);
    }
    out.renumber();
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardRuleSpec {
    pub name: String,
    pub pattern: String,
    pub kind: String,
}

impl GuardRuleSpec {
    pub fn new(name: &str, pattern: &str, kind: &str) -> Self {
        Self {
            name: name.into(),
            pattern: pattern.into(),
            kind: kind.into(),
        }
    }
}

pub fn default_guard_specs() -> Vec<GuardRuleSpec> {
    vec![
        GuardRuleSpec::new("email", r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}", "email"),
        GuardRuleSpec::new("phone", r"\(?\d{3}\)?[-. ]?\d{3}[-. ]?\d{4}", "phone"),
        GuardRuleSpec::new("ssn", r"\d{3}-\d{2}-\d{4}", "ssn"),
    ]
}

/// Ordered redaction rules. Each match becomes `[REDACTED:<kind>]`.
#[derive(Debug, Clone)]
pub struct GuardRules {
    rules: Vec<(GuardRuleSpec, Regex)>,
}

impl Default for GuardRules {
    fn default() -> Self {
        Self::compile(default_guard_specs()).expect("default guard patterns compile")
    }
}

impl GuardRules {
    pub fn none() -> Self {
        Self { rules: Vec::new() }
    }

    pub fn compile(specs: Vec<GuardRuleSpec>) -> Result<Self, IndexError> {
        let rules = specs
            .into_iter()
            .map(|spec| {
                let re = Regex::new(&spec.pattern).map_err(|e| IndexError::InvalidGuardPattern {
                    name: spec.name.clone(),
                    message: e.to_string(),
                })?;
                Ok((spec, re))
            })
            .collect::<Result<_, IndexError>>()?;
        Ok(Self { rules })
    }

    pub fn specs(&self) -> Vec<GuardRuleSpec> {
        self.rules.iter().map(|(s, _)| s.clone()).collect()
    }

    pub fn redact(&self, text: &str) -> String {
        let mut out = text.to_string();
        for (spec, re) in &self.rules {
            let replacement = format!("[REDACTED:{}]", spec.kind);
            if re.is_match(&out) {
                out = re.replace_all(&out, regex::NoExpand(&replacement)).into_owned();
            }
        }
        out
    }

    /// Redact hit texts; scores and ranks are untouched.
    pub fn apply(&self, result: &RetrievalResult) -> RetrievalResult {
        let mut out = result.clone();
        for hit in &mut out.hits {
            hit.text = self.redact(&hit.text);
        }
        if !self.rules.is_empty() {
            out.filters.push("guards".into());
        }
        out
    }
}
