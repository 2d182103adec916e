//! Hierarchical navigable small-world graph over unit vectors.
//!
//! Distances are `1 - dot(a, b)`. Construction is single-threaded and
//! seeded, so the same vectors and parameters always produce the same graph.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const MAX_LEVEL: usize = 16;

#[derive(Debug, Clone, Copy)]
struct Cand {
    dist: f32,
    id: u32,
}

impl PartialEq for Cand {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Cand {}
impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then(self.id.cmp(&other.id))
    }
}

/// Flat row-major vector storage borrowed by the graph.
#[derive(Debug, Clone, Copy)]
pub struct VectorView<'a> {
    pub data: &'a [f32],
    pub dim: usize,
}

impl<'a> VectorView<'a> {
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &'a [f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn dist(&self, q: &[f32], i: u32) -> f32 {
        1.0 - dot_f32(q, self.row(i as usize))
    }
}

fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Visited(Vec<u64>);

impl Visited {
    fn new(n: usize) -> Self {
        Visited(vec![0; n.div_ceil(64)])
    }
    /// Returns true if `i` was not yet visited.
    fn insert(&mut self, i: u32) -> bool {
        let (w, b) = ((i / 64) as usize, i % 64);
        let fresh = self.0[w] & (1 << b) == 0;
        self.0[w] |= 1 << b;
        fresh
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HnswGraph {
    m: usize,
    m0: usize,
    ef_construction: usize,
    /// node -> level -> neighbor ids
    links: Vec<Vec<Vec<u32>>>,
    entry: Option<u32>,
    max_level: usize,
}

impl HnswGraph {
    pub fn build(vectors: VectorView<'_>, m: usize, ef_construction: usize, seed: u64) -> Self {
        let m = m.max(2);
        let mut graph = HnswGraph {
            m,
            m0: 2 * m,
            ef_construction: ef_construction.max(m),
            links: Vec::with_capacity(vectors.len()),
            entry: None,
            max_level: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let level_mult = 1.0 / (m as f64).ln();
        for i in 0..vectors.len() {
            let u: f64 = 1.0 - rng.gen::<f64>();
            let level = ((-u.ln() * level_mult).floor() as usize).min(MAX_LEVEL);
            graph.insert(vectors, i as u32, level);
        }
        graph
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    fn max_links(&self, level: usize) -> usize {
        if level == 0 {
            self.m0
        } else {
            self.m
        }
    }

    fn insert(&mut self, vectors: VectorView<'_>, id: u32, level: usize) {
        self.links.push(vec![Vec::new(); level + 1]);
        let Some(entry) = self.entry else {
            self.entry = Some(id);
            self.max_level = level;
            return;
        };
        let q = vectors.row(id as usize);
        let mut eps = vec![Cand { dist: vectors.dist(q, entry), id: entry }];
        for lev in (level + 1..=self.max_level).rev() {
            eps = self.search_layer(vectors, q, &eps, 1, lev);
        }
        for lev in (0..=level.min(self.max_level)).rev() {
            let found = self.search_layer(vectors, q, &eps, self.ef_construction, lev);
            let neighbors = select_neighbors(vectors, &found, self.m);
            self.links[id as usize][lev] = neighbors.iter().map(|c| c.id).collect();
            for n in &neighbors {
                let cap = self.max_links(lev);
                let list = &mut self.links[n.id as usize][lev];
                list.push(id);
                if list.len() > cap {
                    let base = vectors.row(n.id as usize);
                    let mut cands: Vec<Cand> = list
                        .iter()
                        .map(|&j| Cand { dist: vectors.dist(base, j), id: j })
                        .collect();
                    cands.sort();
                    let kept = select_neighbors(vectors, &cands, cap);
                    self.links[n.id as usize][lev] = kept.iter().map(|c| c.id).collect();
                }
            }
            eps = found;
        }
        if level > self.max_level {
            self.entry = Some(id);
            self.max_level = level;
        }
    }

    /// Best-first search on one level; result sorted by ascending distance.
    fn search_layer(
        &self,
        vectors: VectorView<'_>,
        q: &[f32],
        entry_points: &[Cand],
        ef: usize,
        level: usize,
    ) -> Vec<Cand> {
        let mut visited = Visited::new(self.links.len());
        let mut candidates: BinaryHeap<Reverse<Cand>> = BinaryHeap::new();
        let mut results: BinaryHeap<Cand> = BinaryHeap::new();
        for &ep in entry_points {
            if visited.insert(ep.id) {
                candidates.push(Reverse(ep));
                results.push(ep);
            }
        }
        while results.len() > ef {
            results.pop();
        }
        while let Some(Reverse(c)) = candidates.pop() {
            let worst = results.peek().map_or(f32::INFINITY, |w| w.dist);
            if c.dist > worst && results.len() >= ef {
                break;
            }
            let Some(neigh) = self.links[c.id as usize].get(level) else {
                continue;
            };
            for &n in neigh {
                if !visited.insert(n) {
                    continue;
                }
                let d = vectors.dist(q, n);
                let worst = results.peek().map_or(f32::INFINITY, |w| w.dist);
                if results.len() < ef || d < worst {
                    let cand = Cand { dist: d, id: n };
                    candidates.push(Reverse(cand));
                    results.push(cand);
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        results.into_sorted_vec()
    }

    /// Approximate nearest neighbours: up to `ef.max(k)` candidate ids,
    /// closest first. Callers re-rank exactly.
    pub fn search(&self, vectors: VectorView<'_>, q: &[f32], k: usize, ef: usize) -> Vec<u32> {
        let Some(entry) = self.entry else {
            return Vec::new();
        };
        let mut eps = vec![Cand { dist: vectors.dist(q, entry), id: entry }];
        for lev in (1..=self.max_level).rev() {
            eps = self.search_layer(vectors, q, &eps, 1, lev);
        }
        self.search_layer(vectors, q, &eps, ef.max(k), 0)
            .into_iter()
            .map(|c| c.id)
            .collect()
    }
}

/// Diversity heuristic: keep a candidate only if it is closer to the base
/// than to every neighbour already kept, then top up with the discarded
/// ones in distance order.
fn select_neighbors(vectors: VectorView<'_>, sorted: &[Cand], m: usize) -> Vec<Cand> {
    let mut kept: Vec<Cand> = Vec::with_capacity(m);
    let mut pruned = Vec::new();
    for &c in sorted {
        if kept.len() >= m {
            break;
        }
        let row = vectors.row(c.id as usize);
        if kept.iter().all(|k| vectors.dist(row, k.id) > c.dist) {
            kept.push(c);
        } else {
            pruned.push(c);
        }
    }
    for c in pruned {
        if kept.len() >= m {
            break;
        }
        kept.push(c);
    }
    kept
}
