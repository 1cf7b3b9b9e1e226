//! Brute-force oracles written directly from the definitions, independent of
//! the library's search and classification code.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tablematch_core::embedding::EmbeddingVector;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> EmbeddingVector {
    let raw: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    EmbeddingVector::normalized(&raw)
}

pub fn jitter(rng: &mut ChaCha8Rng, v: &EmbeddingVector, spread: f32) -> EmbeddingVector {
    let raw: Vec<f32> = v
        .as_slice()
        .iter()
        .map(|x| x + rng.random_range(-spread..=spread))
        .collect();
    EmbeddingVector::normalized(&raw)
}

/// Cosine distance of unit vectors as half the squared Euclidean distance,
/// clamped to [0, 2].
pub fn cos_dist(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let mut s = 0.0f64;
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        let d = *x as f64 - *y as f64;
        s += d * d;
    }
    (s * 0.5).min(2.0)
}

pub fn euclid(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let mut s = 0.0f64;
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        let d = *x as f64 - *y as f64;
        s += d * d;
    }
    s.sqrt()
}

/// Ids of the k nearest points of `set` to `q`, ties broken by id.
pub fn topk(q: &EmbeddingVector, set: &[EmbeddingVector], k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = set.iter().enumerate().map(|(i, v)| (cos_dist(q, v), i)).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, i)| i).collect()
}

/// The set-builder predicate evaluated on every pair.
pub fn mutual_pairs(left: &[EmbeddingVector], right: &[EmbeddingVector], k: usize, m: f64) -> Vec<(usize, usize, u64)> {
    let fwd: Vec<Vec<usize>> = left.iter().map(|q| topk(q, right, k)).collect();
    let bwd: Vec<Vec<usize>> = right.iter().map(|q| topk(q, left, k)).collect();
    let mut out = Vec::new();
    for (a, av) in left.iter().enumerate() {
        for (b, bv) in right.iter().enumerate() {
            let d = cos_dist(av, bv);
            if fwd[a].contains(&b) && bwd[b].contains(&a) && d <= m {
                out.push((a, b, d.to_bits()));
            }
        }
    }
    out
}

/// Core and reachable indicators from their definitions.
pub fn density_classes(points: &[EmbeddingVector], eps: f64, min_pts: usize) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let n = points.len();
    let neighbours = |i: usize| (0..n).filter(move |&j| euclid(&points[i], &points[j]) <= eps);
    let core: Vec<bool> = (0..n).map(|i| neighbours(i).count() >= min_pts).collect();
    let (mut c, mut r, mut o) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        if core[i] {
            c.push(i);
        } else if neighbours(i).filter(|&j| core[j]).count() >= 1 {
            r.push(i);
        } else {
            o.push(i);
        }
    }
    (c, r, o)
}

/// A random tuple: points scattered around one to three centers.
pub fn random_tuple(rng: &mut ChaCha8Rng, max_len: usize, dim: usize) -> Vec<EmbeddingVector> {
    let len = rng.random_range(2..=max_len);
    let centers: Vec<EmbeddingVector> = (0..rng.random_range(1..=3)).map(|_| random_unit(rng, dim)).collect();
    (0..len)
        .map(|_| {
            let c = &centers[rng.random_range(0..centers.len())];
            let spread = rng.random_range(0.01f32..0.4);
            jitter(rng, c, spread)
        })
        .collect()
}
