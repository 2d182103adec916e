use std::collections::BTreeMap;

use super::{Hit, RetrievalResult};

pub const DEFAULT_RRF_C: f64 = 60.0;

/// Reciprocal rank fusion: each hit scores `Σ 1/(c + rank)` over the lists
/// it appears in. Output is sorted by fused score, ties by chunk id.
///
/// Per-hit contributions are summed smallest-first so the result does not
/// depend on the order of `lists`.
pub fn fuse(lists: &[&RetrievalResult], c: f64) -> RetrievalResult {
    let mut merged: BTreeMap<&str, (Hit, Vec<f64>)> = BTreeMap::new();
    for list in lists {
        for hit in &list.hits {
            let contribution = 1.0 / (c + hit.rank as f64);
            let entry = merged
                .entry(hit.chunk_id.as_str())
                .or_insert_with(|| (hit.clone(), Vec::new()));
            entry.0.lexical_score = entry.0.lexical_score.or(hit.lexical_score);
            entry.0.dense_score = entry.0.dense_score.or(hit.dense_score);
            entry.1.push(contribution);
        }
    }
    let mut hits: Vec<Hit> = merged
        .into_values()
        .map(|(mut hit, mut parts)| {
            parts.sort_by(f64::total_cmp);
            hit.fused_score = parts.iter().sum();
            hit
        })
        .collect();
    hits.sort_by(|a, b| {
        b.fused_score
            .total_cmp(&a.fused_score)
            .then_with(|| a.chunk_id.cmp(&b.chunk_id))
    });
    let mut filters: Vec<String> = Vec::new();
    for list in lists {
        for f in &list.filters {
            if !filters.contains(f) {
                filters.push(f.clone());
            }
        }
    }
    filters.push(format!("rrf(c={c})"));
    let mut out = RetrievalResult {
        query: lists.first().map(|l| l.query.clone()).unwrap_or_default(),
        hits,
        filters,
    };
    out.renumber();
    out
}
