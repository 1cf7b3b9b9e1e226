//! Hierarchical navigable small-world graph.
//!
//! Construction is single-threaded and driven by a seeded RNG, so a given
//! (vectors, params, seed) triple always yields the same graph.

use std::cell::RefCell;
use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{cosine_distance, neighbor_order, Index, IndexParams, Neighbor};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist: f64,
    id: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub(super) struct Hnsw {
    // links[node][layer] = neighbour ids
    links: Vec<Vec<Vec<u32>>>,
    entry: u32,
    top_layer: usize,
}

/// Per-search scratch: visited marks and an evaluation counter.
struct Scratch {
    visited: Vec<u32>,
    stamp: u32,
    evals: u64,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self {
            visited: vec![0; n],
            stamp: 0,
            evals: 0,
        }
    }

    /// Prepares a reused buffer for a search over `n` nodes.
    fn reset_for(&mut self, n: usize) {
        if self.visited.len() < n {
            self.visited.resize(n, 0);
        }
        self.evals = 0;
    }

    fn next_round(&mut self) {
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.visited.fill(0);
            self.stamp = 1;
        }
    }

    /// Returns true the first time `id` is seen this round.
    fn visit(&mut self, id: u32) -> bool {
        let slot = &mut self.visited[id as usize];
        if *slot == self.stamp {
            false
        } else {
            *slot = self.stamp;
            true
        }
    }
}

thread_local! {
    static SCRATCH: RefCell<Scratch> = RefCell::new(Scratch::new(0));
}

struct Ctx<'a> {
    index: &'a Index,
}

impl Ctx<'_> {
    fn dist(&self, q: &[f32], id: u32, scratch: &mut Scratch) -> f64 {
        scratch.evals += 1;
        cosine_distance(q, self.index.vector(id as usize))
    }

    fn dist_between(&self, a: u32, b: u32, scratch: &mut Scratch) -> f64 {
        scratch.evals += 1;
        cosine_distance(self.index.vector(a as usize), self.index.vector(b as usize))
    }
}

impl Hnsw {
    pub(super) fn build(index: &Index, params: &IndexParams, seed: u64) -> (Hnsw, u64) {
        let n = index.len();
        let m = params.graph_degree;
        let m0 = 2 * m;
        let level_mult = 1.0 / (m as f64).ln();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ctx = Ctx { index };
        let mut scratch = Scratch::new(n);

        let mut graph = Hnsw {
            links: Vec::with_capacity(n),
            entry: 0,
            top_layer: 0,
        };

        for node in 0..n as u32 {
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            let level = ((-u.ln()) * level_mult).floor() as usize;
            graph.links.push(vec![Vec::new(); level + 1]);
            if node == 0 {
                graph.top_layer = level;
                continue;
            }

            let q = index.vector(node as usize);
            let mut ep = vec![Candidate {
                dist: ctx.dist(q, graph.entry, &mut scratch),
                id: graph.entry,
            }];
            for layer in (level + 1..=graph.top_layer).rev() {
                ep = graph.search_layer(&ctx, q, &ep, 1, layer, &mut scratch);
            }
            for layer in (0..=level.min(graph.top_layer)).rev() {
                let found = graph.search_layer(&ctx, q, &ep, params.ef_construction, layer, &mut scratch);
                let cap = if layer == 0 { m0 } else { m };
                let chosen = select_neighbors(&ctx, &found, m, &mut scratch);
                graph.links[node as usize][layer] = chosen.iter().map(|c| c.id).collect();
                for c in &chosen {
                    graph.add_link(&ctx, c.id, node, c.dist, layer, cap, &mut scratch);
                }
                ep = found;
            }
            if level > graph.top_layer {
                graph.top_layer = level;
                graph.entry = node;
            }
        }
        (graph, scratch.evals)
    }

    fn add_link(
        &mut self,
        ctx: &Ctx<'_>,
        from: u32,
        to: u32,
        dist: f64,
        layer: usize,
        cap: usize,
        scratch: &mut Scratch,
    ) {
        let list = &mut self.links[from as usize][layer];
        if list.len() < cap {
            list.push(to);
            return;
        }
        let mut cands: Vec<Candidate> = list
            .iter()
            .map(|&id| Candidate {
                dist: ctx.dist_between(from, id, scratch),
                id,
            })
            .collect();
        cands.push(Candidate { dist, id: to });
        cands.sort();
        let kept = select_neighbors(ctx, &cands, cap, scratch);
        self.links[from as usize][layer] = kept.iter().map(|c| c.id).collect();
    }

    /// Beam search on one layer. Returns up to `ef` candidates, ascending.
    fn search_layer(
        &self,
        ctx: &Ctx<'_>,
        q: &[f32],
        entry: &[Candidate],
        ef: usize,
        layer: usize,
        scratch: &mut Scratch,
    ) -> Vec<Candidate> {
        scratch.next_round();
        let mut frontier: BinaryHeap<Reverse<Candidate>> = BinaryHeap::new();
        let mut best: BinaryHeap<Candidate> = BinaryHeap::new();
        for &c in entry {
            if scratch.visit(c.id) {
                frontier.push(Reverse(c));
                best.push(c);
            }
        }
        while best.len() > ef {
            best.pop();
        }
        while let Some(Reverse(current)) = frontier.pop() {
            if let Some(worst) = best.peek() {
                if best.len() >= ef && current.dist > worst.dist {
                    break;
                }
            }
            for &nb in &self.links[current.id as usize][layer] {
                if !scratch.visit(nb) {
                    continue;
                }
                let d = ctx.dist(q, nb, scratch);
                let candidate = Candidate { dist: d, id: nb };
                if best.len() < ef || best.peek().is_some_and(|w| candidate < *w) {
                    frontier.push(Reverse(candidate));
                    best.push(candidate);
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        best.into_sorted_vec()
    }

    pub(super) fn search(&self, index: &Index, q: &[f32], k: usize, ef: usize) -> (Vec<Neighbor>, u64) {
        let ctx = Ctx { index };
        let (found, evals) = SCRATCH.with(|cell| {
            let mut scratch = cell.borrow_mut();
            scratch.reset_for(index.len());
            let mut ep = vec![Candidate {
                dist: ctx.dist(q, self.entry, &mut scratch),
                id: self.entry,
            }];
            for layer in (1..=self.top_layer).rev() {
                ep = self.search_layer(&ctx, q, &ep, 1, layer, &mut scratch);
            }
            let found = self.search_layer(&ctx, q, &ep, ef.max(k), 0, &mut scratch);
            (found, scratch.evals)
        });
        let mut out: Vec<Neighbor> = found
            .into_iter()
            .map(|c| Neighbor {
                id: c.id as usize,
                dist: c.dist,
            })
            .collect();
        out.sort_by(neighbor_order);
        out.truncate(k);
        (out, evals)
    }
}

/// Diversity heuristic: walk candidates nearest first and keep one only if it
/// is closer to the base point than to every neighbour already kept.
fn select_neighbors(ctx: &Ctx<'_>, sorted: &[Candidate], cap: usize, scratch: &mut Scratch) -> Vec<Candidate> {
    let mut kept: Vec<Candidate> = Vec::with_capacity(cap);
    for &c in sorted {
        if kept.len() >= cap {
            break;
        }
        let diverse = kept
            .iter()
            .all(|k| ctx.dist_between(c.id, k.id, scratch) > c.dist);
        if diverse {
            kept.push(c);
        }
    }
    kept
}
