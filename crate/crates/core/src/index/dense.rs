use serde::{Deserialize, Serialize};

use super::hnsw::{HnswGraph, VectorView};
use super::IndexError;
use crate::exec::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnParams {
    /// Neighbour degree.
    pub m: usize,
    /// Construction beam.
    pub ef_c: usize,
    /// Search beam.
    pub ef_s: usize,
    /// Below this many chunks, search is exhaustive and no graph is built.
    pub exact_threshold: usize,
    pub seed: u64,
}

impl Default for AnnParams {
    fn default() -> Self {
        Self {
            m: 16,
            ef_c: 200,
            ef_s: 128,
            exact_threshold: 10_000,
            seed: 42,
        }
    }
}

/// Unit vectors, one per chunk slot, plus an optional ANN graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseIndex {
    dim: usize,
    vectors: Vec<f32>,
    params: AnnParams,
    graph: Option<HnswGraph>,
}

/// Cosine similarity of unit vectors, accumulated in f64 in dimension order.
pub fn similarity(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub(crate) fn rank_desc(scored: &mut [(u32, f64)]) {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

impl DenseIndex {
    pub fn build(rows: Vec<Vec<f32>>, dim: usize, params: AnnParams) -> Result<Self, IndexError> {
        let mut vectors = Vec::with_capacity(rows.len() * dim);
        for row in &rows {
            if row.len() != dim {
                return Err(IndexError::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            vectors.extend_from_slice(row);
        }
        let graph = (rows.len() >= params.exact_threshold).then(|| {
            HnswGraph::build(VectorView { data: &vectors, dim }, params.m, params.ef_c, params.seed)
        });
        Ok(Self {
            dim,
            vectors,
            params,
            graph,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn is_exact(&self) -> bool {
        self.graph.is_none()
    }

    pub fn params(&self) -> AnnParams {
        self.params
    }

    pub fn vector(&self, slot: usize) -> &[f32] {
        &self.vectors[slot * self.dim..(slot + 1) * self.dim]
    }

    fn check_dim(&self, query: &[f32]) -> Result<(), IndexError> {
        if query.len() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        Ok(())
    }

    /// Top `k` by cosine similarity; exhaustive in exact mode, graph search
    /// followed by exact re-ranking otherwise. A zero query matches nothing.
    pub fn search(&self, query: &[f32], k: usize, exec: Execution) -> Result<Vec<(u32, f64)>, IndexError> {
        self.check_dim(query)?;
        if k == 0 || query.iter().all(|&x| x == 0.0) {
            return Ok(Vec::new());
        }
        match &self.graph {
            None => Ok(self.exhaustive_unchecked(query, k, exec)),
            Some(graph) => {
                let view = VectorView { data: &self.vectors, dim: self.dim };
                let mut scored: Vec<(u32, f64)> = graph
                    .search(view, query, k, self.params.ef_s)
                    .into_iter()
                    .map(|id| (id, similarity(query, self.vector(id as usize))))
                    .collect();
                rank_desc(&mut scored);
                scored.truncate(k);
                Ok(scored)
            }
        }
    }

    /// Brute-force search regardless of mode.
    pub fn exhaustive(&self, query: &[f32], k: usize, exec: Execution) -> Result<Vec<(u32, f64)>, IndexError> {
        self.check_dim(query)?;
        Ok(self.exhaustive_unchecked(query, k, exec))
    }

    fn exhaustive_unchecked(&self, query: &[f32], k: usize, exec: Execution) -> Vec<(u32, f64)> {
        let mut scored = exec.map_range(self.len(), |i| (i as u32, similarity(query, self.vector(i))));
        rank_desc(&mut scored);
        scored.truncate(k);
        scored
    }
}
