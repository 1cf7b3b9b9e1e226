//! k-nearest-neighbour search over embedding sets and the mutual top-K join.
//!
//! Distances are cosine distances between unit vectors. They are evaluated as
//! half the squared Euclidean distance, which equals `1 - dot(u, v)` for unit
//! vectors but is exactly zero for identical inputs and exactly symmetric.

mod hnsw;

use std::cmp::Ordering;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};

use hnsw::Hnsw;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Exact,
    Graph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexParams {
    pub backend: Backend,
    /// Maximum out-degree on upper graph layers; layer 0 allows twice this.
    pub graph_degree: usize,
    pub ef_construction: usize,
    /// Lower bound on the search beam. Queries use `max(ef_search, 4k)`.
    pub ef_search: usize,
    /// Sets no larger than this are searched exhaustively even with the graph
    /// backend.
    pub exact_cutover: usize,
}

impl Default for IndexParams {
    fn default() -> Self {
        Self {
            backend: Backend::Graph,
            graph_degree: 16,
            ef_construction: 200,
            ef_search: 64,
            exact_cutover: 1024,
        }
    }
}

impl IndexParams {
    pub fn exact() -> Self {
        Self {
            backend: Backend::Exact,
            ..Self::default()
        }
    }

    /// Graph backend with the exhaustive cutover disabled.
    pub fn graph() -> Self {
        Self {
            backend: Backend::Graph,
            exact_cutover: 0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.graph_degree < 2 {
            return Err(Error::InvalidConfig("graph_degree must be at least 2".into()));
        }
        if self.ef_construction < 1 || self.ef_search < 1 {
            return Err(Error::InvalidConfig("ef parameters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub dist: f64,
}

/// Orders by distance, then by id.
pub(crate) fn neighbor_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.dist.total_cmp(&b.dist).then(a.id.cmp(&b.id))
}

/// Cosine distance of two unit vectors, clamped to [0, 2].
#[inline]
pub fn cosine_distance(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let d = *x as f64 - *y as f64;
        acc += d * d;
    }
    (acc * 0.5).min(2.0)
}

enum Backing {
    Exact,
    Graph(Hnsw),
}

/// Immutable search structure over a fixed set of vectors.
pub struct Index {
    dim: usize,
    data: Vec<f32>,
    len: usize,
    backing: Backing,
    ef_search: usize,
    evals: AtomicU64,
}

impl Index {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.backing, Backing::Exact)
    }

    /// Distance evaluations performed so far, including construction.
    pub fn distance_evals(&self) -> u64 {
        self.evals.load(AtomicOrdering::Relaxed)
    }

    pub(crate) fn vector(&self, id: usize) -> &[f32] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    fn count(&self, n: u64) {
        self.evals.fetch_add(n, AtomicOrdering::Relaxed);
    }

    pub fn query(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<Neighbor>> {
        if query.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: query.dim(),
            });
        }
        if k == 0 {
            return Err(Error::Precondition("k must be at least 1".into()));
        }
        let q = query.as_slice();
        let (result, evals) = match &self.backing {
            Backing::Exact => (self.exhaustive(q, k), self.len as u64),
            Backing::Graph(graph) => {
                let ef = self.ef_search.max(4 * k);
                graph.search(self, q, k, ef)
            }
        };
        self.count(evals);
        Ok(result)
    }

    fn exhaustive(&self, q: &[f32], k: usize) -> Vec<Neighbor> {
        let mut all: Vec<Neighbor> = (0..self.len)
            .map(|id| Neighbor {
                id,
                dist: cosine_distance(q, self.vector(id)),
            })
            .collect();
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, neighbor_order);
            all.truncate(k);
        }
        all.sort_by(neighbor_order);
        all
    }
}

/// Builds an index over `vectors`. The graph backend is used only when the
/// set is larger than `params.exact_cutover`.
pub fn build_index(vectors: &[EmbeddingVector], params: &IndexParams, seed: u64) -> Result<Index> {
    params.validate()?;
    let first = vectors
        .first()
        .ok_or_else(|| Error::Precondition("cannot index an empty vector set".into()))?;
    let dim = first.dim();
    let mut data = Vec::with_capacity(dim * vectors.len());
    for v in vectors {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.dim(),
            });
        }
        data.extend_from_slice(v.as_slice());
    }
    let mut index = Index {
        dim,
        data,
        len: vectors.len(),
        backing: Backing::Exact,
        ef_search: params.ef_search,
        evals: AtomicU64::new(0),
    };
    if params.backend == Backend::Graph && vectors.len() > params.exact_cutover {
        let (graph, evals) = Hnsw::build(&index, params, seed);
        index.backing = Backing::Graph(graph);
        index.count(evals);
    }
    Ok(index)
}

/// At most `k` nearest neighbours of `query`, ascending by distance then id.
pub fn query_topk(index: &Index, query: &EmbeddingVector, k: usize) -> Result<Vec<Neighbor>> {
    index.query(query, k)
}

/// A pair from the mutual top-K join: `left` indexes the first set, `right`
/// the second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MutualPair {
    pub left: usize,
    pub right: usize,
    pub dist: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MutualTopK {
    pub pairs: Vec<MutualPair>,
    pub distance_evals: u64,
}

/// Pairs `(a, b)` with `b` among the `k` nearest of `a` in `right`, `a` among
/// the `k` nearest of `b` in `left`, and distance at most `m`. Sorted by
/// `(left, right)`.
pub fn mutual_topk(
    left: &[EmbeddingVector],
    right: &[EmbeddingVector],
    k: usize,
    m: f64,
    params: &IndexParams,
    seed: u64,
) -> Result<Vec<MutualPair>> {
    Ok(mutual_topk_counted(left, right, k, m, params, seed)?.pairs)
}

pub fn mutual_topk_counted(
    left: &[EmbeddingVector],
    right: &[EmbeddingVector],
    k: usize,
    m: f64,
    params: &IndexParams,
    seed: u64,
) -> Result<MutualTopK> {
    if left.is_empty() || right.is_empty() {
        return Err(Error::Precondition("mutual top-K needs two non-empty sets".into()));
    }
    let right_index = build_index(right, params, seed)?;
    let left_index = build_index(left, params, seed.rotate_left(32) ^ 0x9e37_79b9_7f4a_7c15)?;
    if left_index.dim() != right_index.dim() {
        return Err(Error::DimensionMismatch {
            expected: left_index.dim(),
            found: right_index.dim(),
        });
    }

    let forward: Vec<Vec<Neighbor>> = left
        .par_iter()
        .map(|q| right_index.query(q, k))
        .collect::<Result<_>>()?;
    let backward: Vec<Vec<Neighbor>> = right
        .par_iter()
        .map(|q| left_index.query(q, k))
        .collect::<Result<_>>()?;

    let mut pairs = Vec::new();
    for (a, nbrs) in forward.iter().enumerate() {
        for n in nbrs {
            if n.dist <= m && backward[n.id].iter().any(|back| back.id == a) {
                pairs.push(MutualPair {
                    left: a,
                    right: n.id,
                    dist: n.dist,
                });
            }
        }
    }
    pairs.sort_by_key(|p| (p.left, p.right));
    Ok(MutualTopK {
        pairs,
        distance_evals: left_index.distance_evals() + right_index.distance_evals(),
    })
}
