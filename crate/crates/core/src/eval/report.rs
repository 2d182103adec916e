use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::retrieval::{score_question, BenchmarkConfig, Dataset, QuestionOutcome, QuestionScores, RetrievalMode};
use super::EvalError;
use crate::corpus::Document;
use crate::exec::Execution;
use crate::index::HybridIndex;
use crate::ports::Embedder;

pub const ALL_ROW: &str = "ALL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub chunk_size: usize,
    pub overlap: Option<usize>,
    pub rrf_c: Option<f64>,
    pub mode: Option<RetrievalMode>,
    pub ks: Vec<usize>,
}

/// Mean Recall@k and Precision@k in percent, one entry per k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub questions: usize,
    pub excluded: usize,
    pub recall: Vec<f64>,
    pub precision: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalEvalReport {
    pub config: ReportConfig,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityViolation {
    pub dataset: String,
    pub k_from: usize,
    pub k_to: usize,
    pub from: f64,
    pub to: f64,
}

impl RetrievalEvalReport {
    pub fn row(&self, dataset: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.dataset == dataset)
    }

    /// Recall must not decrease as k grows, in every row.
    pub fn check_monotone(&self) -> Result<(), Vec<MonotonicityViolation>> {
        let ks = &self.config.ks;
        let mut bad = Vec::new();
        for row in &self.rows {
            for i in 1..row.recall.len() {
                if row.recall[i] < row.recall[i - 1] {
                    bad.push(MonotonicityViolation {
                        dataset: row.dataset.clone(),
                        k_from: ks[i - 1],
                        k_to: ks[i],
                        from: row.recall[i - 1],
                        to: row.recall[i],
                    });
                }
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(bad)
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Datasets down the side, Recall@k then Precision@k across.
    pub fn render_text(&self) -> String {
        let ks = &self.config.ks;
        let fmt_row = |vals: &[f64]| vals.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>();
        let heads: Vec<String> = ks.iter().map(|k| format!("k={k}")).collect();
        let mut width = heads.iter().map(String::len).max().unwrap_or(0);
        for row in &self.rows {
            for cell in fmt_row(&row.recall).iter().chain(&fmt_row(&row.precision)) {
                width = width.max(cell.len());
            }
        }
        let name_w = self
            .rows
            .iter()
            .map(|r| r.dataset.len())
            .chain(["Dataset".len()])
            .max()
            .unwrap_or(0);
        let block = |cells: &[String]| cells.iter().map(|c| format!("{c:>width$}")).collect::<Vec<_>>().join("  ");
        let block_w = ks.len() * width + ks.len().saturating_sub(1) * 2;

        let mut lines = vec![format!(
            "{:<name_w$} | {:<block_w$} | {}",
            "Dataset", "Recall@k (%)", "Precision@k (%)"
        )];
        lines.push(format!("{:<name_w$} | {} | {}", "", block(&heads), block(&heads)));
        lines.push(format!("{}-+-{}-+-{}", "-".repeat(name_w), "-".repeat(block_w), "-".repeat(block_w)));
        for row in &self.rows {
            lines.push(format!(
                "{:<name_w$} | {} | {}",
                row.dataset,
                block(&fmt_row(&row.recall)),
                block(&fmt_row(&row.precision))
            ));
        }
        lines.iter().map(|l| l.trim_end().to_string()).collect::<Vec<_>>().join("\n") + "\n"
    }
}

/// Per-question scores behind a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRun {
    pub report: RetrievalEvalReport,
    pub per_question: Vec<(String, QuestionScores)>,
    pub excluded: Vec<(String, String)>,
}

fn validate_ks(ks: &[usize]) -> Result<(), EvalError> {
    if ks.is_empty() || ks[0] == 0 || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::InvalidKs(ks.to_vec()));
    }
    Ok(())
}

fn mean_row(dataset: &str, scores: &[&QuestionScores], excluded: usize, n_ks: usize) -> ReportRow {
    let mut recall = vec![0.0; n_ks];
    let mut precision = vec![0.0; n_ks];
    for s in scores {
        for i in 0..n_ks {
            recall[i] += s.recall[i];
            precision[i] += s.precision[i];
        }
    }
    let n = scores.len().max(1) as f64;
    ReportRow {
        dataset: dataset.to_string(),
        questions: scores.len(),
        excluded,
        recall: recall.into_iter().map(|v| 100.0 * v / n).collect(),
        precision: precision.into_iter().map(|v| 100.0 * v / n).collect(),
    }
}

/// Macro-averaged Recall@k and Precision@k per dataset plus a pooled ALL
/// row. Questions are scored in parallel under `exec` and summed in qid
/// order.
pub fn run_retrieval_benchmark(
    datasets: &[Dataset],
    docs: &BTreeMap<String, Document>,
    index: &HybridIndex,
    embedder: &dyn Embedder,
    cfg: &BenchmarkConfig,
    exec: Execution,
) -> Result<BenchmarkRun, EvalError> {
    validate_ks(&cfg.ks)?;
    if datasets.iter().all(|d| d.records.is_empty()) {
        return Err(EvalError::DatasetFormat {
            line: 0,
            message: "dataset has no records".into(),
        });
    }
    let mut ordered: Vec<&Dataset> = datasets.iter().collect();
    ordered.sort_by(|a, b| a.name.cmp(&b.name));

    let mut rows = Vec::new();
    let mut per_question = Vec::new();
    let mut excluded_all = Vec::new();
    for ds in ordered {
        let mut records: Vec<_> = ds.records.iter().collect();
        records.sort_by(|a, b| a.qid.cmp(&b.qid));
        if let Some(w) = records.windows(2).find(|w| w[0].qid == w[1].qid) {
            return Err(EvalError::DatasetFormat {
                line: 0,
                message: format!("duplicate qid {:?} in {}", w[0].qid, ds.name),
            });
        }
        let outcomes = exec.try_map(&records, |r| score_question(r, docs, index, embedder, cfg))?;
        let mut scored = Vec::new();
        let mut excluded = 0;
        for o in outcomes {
            match o {
                QuestionOutcome::Scored(s) => scored.push(s),
                QuestionOutcome::Excluded(qid) => {
                    excluded += 1;
                    excluded_all.push((ds.name.clone(), qid));
                }
            }
        }
        let refs: Vec<&QuestionScores> = scored.iter().collect();
        rows.push(mean_row(&ds.name, &refs, excluded, cfg.ks.len()));
        per_question.extend(scored.into_iter().map(|s| (ds.name.clone(), s)));
    }
    let pooled: Vec<&QuestionScores> = per_question.iter().map(|(_, s)| s).collect();
    rows.push(mean_row(ALL_ROW, &pooled, excluded_all.len(), cfg.ks.len()));

    let icfg = index.config();
    Ok(BenchmarkRun {
        report: RetrievalEvalReport {
            config: ReportConfig {
                chunk_size: icfg.chunk.size,
                overlap: Some(icfg.chunk.overlap),
                rrf_c: Some(icfg.rrf_c),
                mode: Some(cfg.mode),
                ks: cfg.ks.clone(),
            },
            rows,
        },
        per_question,
        excluded: excluded_all,
    })
}
