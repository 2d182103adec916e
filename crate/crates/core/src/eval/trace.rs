use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::attribution::{effective_n, shared_ngram_mask};
use super::EvalError;
use crate::corpus::token_texts;
use crate::exec::Execution;
use crate::rag::prompt::strip_citations;

pub const DEFAULT_NGRAM: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceScores {
    /// `None` without a gold answer.
    pub completeness: Option<f64>,
    pub utilization: f64,
    /// `None` without a gold answer.
    pub context_relevance: Option<f64>,
    pub pc_hallucinated: f64,
    pub accuracy: Option<f64>,
}

fn count(mask: &[bool]) -> usize {
    mask.iter().filter(|&&m| m).count()
}

/// Token-attribution scores of one answer. Citation markers are removed
/// before tokenizing the answer.
pub fn trace_scores(
    answer: &str,
    contexts: &[String],
    gold: Option<&str>,
    accuracy: Option<f64>,
    n: usize,
) -> Result<TraceScores, EvalError> {
    let a = token_texts(&strip_citations(answer));
    let cs: Vec<Vec<String>> = contexts.iter().map(|c| token_texts(c)).collect();
    let c_total: usize = cs.iter().map(Vec::len).sum();
    if a.is_empty() || c_total == 0 {
        return Err(EvalError::EmptyInput);
    }
    let n_a = effective_n(n, a.len());
    let c_refs: Vec<&[String]> = cs.iter().map(Vec::as_slice).collect();
    let supported = shared_ngram_mask(&a, &c_refs, n_a);
    let used: Vec<Vec<bool>> = cs.iter().map(|c| shared_ngram_mask(c, &[&a[..]], n_a)).collect();

    let pc_hallucinated = 1.0 - count(&supported) as f64 / a.len() as f64;
    let utilization = used.iter().map(|m| count(m)).sum::<usize>() as f64 / c_total as f64;

    let (completeness, context_relevance) = match gold {
        None => (None, None),
        Some(gold) => {
            let g = token_texts(gold);
            let n_g = effective_n(n, g.len());
            let relevant: Vec<Vec<bool>> = cs
                .iter()
                .map(|c| if g.is_empty() { vec![false; c.len()] } else { shared_ngram_mask(c, &[&g[..]], n_g) })
                .collect();
            let rel = relevant.iter().map(|m| count(m)).sum::<usize>();
            let both: usize = used
                .iter()
                .zip(&relevant)
                .map(|(u, r)| u.iter().zip(r).filter(|(x, y)| **x && **y).count())
                .sum();
            let completeness = if rel == 0 { 1.0 } else { both as f64 / rel as f64 };
            (Some(completeness), Some(rel as f64 / c_total as f64))
        }
    };
    Ok(TraceScores {
        completeness,
        utilization,
        context_relevance,
        pc_hallucinated,
        accuracy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub qid: String,
    pub system: String,
    pub question: String,
    pub answer: String,
    pub contexts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_accuracy: Option<f64>,
}

pub fn parse_runs_jsonl(input: &str) -> Result<Vec<RunRecord>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: RunRecord = serde_json::from_str(line).map_err(|e| EvalError::RunsFormat {
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Some(acc) = rec.human_accuracy {
            if !(1.0..=5.0).contains(&acc) {
                return Err(EvalError::RunsFormat {
                    line: i + 1,
                    message: format!("human_accuracy {acc} outside 1..5"),
                });
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn runs_to_jsonl(runs: &[RunRecord]) -> String {
    runs.iter()
        .map(|r| serde_json::to_string(r).expect("run serializes") + "\n")
        .collect()
}

/// Per-system means. Completeness and relevance average over runs with a
/// gold answer, accuracy over annotated runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemRow {
    pub system: String,
    pub runs: usize,
    pub completeness: Option<f64>,
    pub utilization: f64,
    pub context_relevance: Option<f64>,
    pub pc_hallucinated: f64,
    pub accuracy: Option<f64>,
    pub gold_count: usize,
    pub accuracy_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub ngram_n: usize,
    pub rows: Vec<SystemRow>,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub fn run_generation_benchmark(runs: &[RunRecord], n: usize, exec: Execution) -> Result<GenerationReport, EvalError> {
    if runs.is_empty() {
        return Err(EvalError::RunsFormat {
            line: 0,
            message: "runs file is empty".into(),
        });
    }
    let mut order: Vec<usize> = (0..runs.len()).collect();
    order.sort_by(|&a, &b| {
        (&runs[a].system, &runs[a].qid, a).cmp(&(&runs[b].system, &runs[b].qid, b))
    });
    let scores = exec.try_map(&order, |&i| {
        let r = &runs[i];
        trace_scores(&r.answer, &r.contexts, r.gold_answer.as_deref(), r.human_accuracy, n).map_err(|e| {
            EvalError::RunsFormat {
                line: i + 1,
                message: format!("qid {}: {e}", r.qid),
            }
        })
    })?;
    let mut by_system: BTreeMap<&str, Vec<&TraceScores>> = BTreeMap::new();
    for (&i, s) in order.iter().zip(&scores) {
        by_system.entry(runs[i].system.as_str()).or_default().push(s);
    }
    let rows = by_system
        .into_iter()
        .map(|(system, ss)| {
            let completeness: Vec<f64> = ss.iter().filter_map(|s| s.completeness).collect();
            let relevance: Vec<f64> = ss.iter().filter_map(|s| s.context_relevance).collect();
            let accuracy: Vec<f64> = ss.iter().filter_map(|s| s.accuracy).collect();
            let util: Vec<f64> = ss.iter().map(|s| s.utilization).collect();
            let hall: Vec<f64> = ss.iter().map(|s| s.pc_hallucinated).collect();
            SystemRow {
                system: system.to_string(),
                runs: ss.len(),
                completeness: mean(&completeness),
                utilization: mean(&util).unwrap_or(0.0),
                context_relevance: mean(&relevance),
                pc_hallucinated: mean(&hall).unwrap_or(0.0),
                accuracy: mean(&accuracy),
                gold_count: completeness.len(),
                accuracy_count: accuracy.len(),
            }
        })
        .collect();
    Ok(GenerationReport { ngram_n: n, rows })
}

impl GenerationReport {
    pub fn row(&self, system: &str) -> Option<&SystemRow> {
        self.rows.iter().find(|r| r.system == system)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn render_text(&self) -> String {
        let heads = ["Model", "Completeness", "Utilization", "Context Relevance", "pc hallucinated", "Accuracy"];
        let opt = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |x| format!("{x:.p$}"));
        let body: Vec<[String; 6]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.system.clone(),
                    opt(r.completeness, 4),
                    format!("{:.4}", r.utilization),
                    opt(r.context_relevance, 4),
                    format!("{:.4}", r.pc_hallucinated),
                    opt(r.accuracy, 2),
                ]
            })
            .collect();
        let widths: Vec<usize> = (0..6)
            .map(|c| body.iter().map(|r| r[c].len()).chain([heads[c].len()]).max().unwrap_or(0))
            .collect();
        let line = |cells: Vec<&str>| {
            cells
                .iter()
                .enumerate()
                .map(|(c, v)| if c == 0 { format!("{v:<w$}", w = widths[c]) } else { format!("{v:>w$}", w = widths[c]) })
                .collect::<Vec<_>>()
                .join(" | ")
        };
        let mut out = vec![line(heads.to_vec())];
        out.push(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
        for r in &body {
            out.push(line(r.iter().map(String::as_str).collect()));
        }
        out.join("\n") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_case() {
        let text = "the quick brown fox jumps";
        let s = trace_scores(text, &[text.into()], Some(text), None, 3).unwrap();
        assert_eq!(
            (s.completeness, s.utilization, s.context_relevance, s.pc_hallucinated),
            (Some(1.0), 1.0, Some(1.0), 0.0)
        );
    }

    #[test]
    fn disjoint_answer_is_fully_hallucinated() {
        let s = trace_scores("red green blue", &["one two three".into()], None, None, 3).unwrap();
        assert_eq!(s.pc_hallucinated, 1.0);
        assert_eq!(s.utilization, 0.0);
        assert!(s.completeness.is_none());
    }

    #[test]
    fn markers_do_not_count() {
        let s = trace_scores("alpha beta gamma [1]", &["alpha beta gamma".into()], None, None, 3).unwrap();
        assert_eq!(s.pc_hallucinated, 0.0);
    }

    #[test]
    fn hand_computed_partial_case() {
        // A = a b c x y z; C = a b c d; G = c d
        let s = trace_scores("a b c x y z", &["a b c d".into()], Some("c d"), None, 3).unwrap();
        assert_eq!(s.pc_hallucinated, 0.5);
        assert_eq!(s.utilization, 0.75);
        assert_eq!(s.context_relevance, Some(0.5));
        assert_eq!(s.completeness, Some(0.5));
    }

    #[test]
    fn aggregation_rules() {
        let run = |qid: &str, acc: Option<f64>| RunRecord {
            qid: qid.into(),
            system: "s".into(),
            question: "q".into(),
            answer: "a b c".into(),
            contexts: vec!["a b c d".into()],
            gold_answer: None,
            human_accuracy: acc,
        };
        let one = run_generation_benchmark(&[run("1", Some(4.0))], 3, Execution::Sequential).unwrap();
        let two = run_generation_benchmark(&[run("1", Some(4.0)), run("1", Some(4.0))], 3, Execution::Sequential).unwrap();
        assert_eq!(one.rows[0].utilization, two.rows[0].utilization);
        assert_eq!(one.rows[0].pc_hallucinated, two.rows[0].pc_hallucinated);
        let mixed = run_generation_benchmark(&[run("1", Some(3.0)), run("2", None)], 3, Execution::Sequential).unwrap();
        assert_eq!(mixed.rows[0].accuracy, Some(3.0));
        assert_eq!(mixed.rows[0].accuracy_count, 1);
    }

    #[test]
    fn runs_format_errors_cite_line() {
        let err = parse_runs_jsonl("{\"qid\":\"1\"}\n").unwrap_err();
        assert!(matches!(err, EvalError::RunsFormat { line: 1, .. }));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]
        #[test]
        fn metrics_are_bounded(
            answer in "[abcd ]{1,30}",
            ctx in prop::collection::vec("[abcd ]{0,30}", 1..4),
            gold in proptest::option::of("[abcd ]{0,20}"),
            n in 1usize..5,
        ) {
            if let Ok(s) = trace_scores(&answer, &ctx, gold.as_deref(), None, n) {
                for v in [Some(s.utilization), Some(s.pc_hallucinated), s.completeness, s.context_relevance].into_iter().flatten() {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }
}
