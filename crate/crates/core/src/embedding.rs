//! Entity serialization and text embedders.
//!
//! Two embedders are available: a deterministic character n-gram hashing
//! embedder and a client for an external embedding service speaking a small
//! JSON protocol (`{"texts": [...]}` in, `{"embeddings": [[...], ...]}` out).

use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Entity;

/// Unit-norm embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    /// Normalizes `raw`; an all-zero input maps to the first basis vector.
    pub fn normalized_f64(raw: &[f64]) -> Self {
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Self::basis(raw.len(), 0);
        }
        Self(raw.iter().map(|x| (x / norm) as f32).collect())
    }

    pub fn normalized(raw: &[f32]) -> Self {
        let wide: Vec<f64> = raw.iter().map(|&x| x as f64).collect();
        Self::normalized_f64(&wide)
    }

    pub fn basis(dim: usize, axis: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        Self(v)
    }

    /// Wraps components that are already unit norm. Fails if they are not.
    pub fn from_unit(data: Vec<f32>) -> Result<Self> {
        let v = Self(data);
        if v.0.iter().any(|x| !x.is_finite()) || (v.norm() - 1.0).abs() > 1e-5 {
            return Err(Error::InvalidEmbedding(format!(
                "expected a finite unit vector, norm is {}",
                v.norm()
            )));
        }
        Ok(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn cosine_similarity(&self, other: &EmbeddingVector) -> f64 {
        self.dot(other)
    }

    pub fn euclidean(&self, other: &EmbeddingVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Dot product accumulated in f64, left to right.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        acc += (*x as f64) * (*y as f64);
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    Hashing,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderSpec {
    pub kind: EmbedderKind,
    pub dim: usize,
    /// Inclusive character n-gram lengths for the hashing embedder.
    pub ngram_range: (usize, usize),
    pub endpoint: Option<String>,
    pub batch_size: usize,
    pub timeout_secs: u64,
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        Self {
            kind: EmbedderKind::Hashing,
            dim: 1024,
            ngram_range: (2, 4),
            endpoint: None,
            batch_size: 256,
            timeout_secs: 60,
        }
    }
}

impl EmbedderSpec {
    pub fn hashing(dim: usize, ngram_range: (usize, usize)) -> Self {
        Self {
            kind: EmbedderKind::Hashing,
            dim,
            ngram_range,
            ..Self::default()
        }
    }

    pub fn remote(endpoint: impl Into<String>, dim: usize) -> Self {
        Self {
            kind: EmbedderKind::Remote,
            dim,
            endpoint: Some(endpoint.into()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.dim < 8 {
            return bad(format!("embedder dim must be at least 8, got {}", self.dim));
        }
        let (lo, hi) = self.ngram_range;
        if lo == 0 || lo > hi {
            return bad(format!("invalid ngram range ({lo}, {hi})"));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        match (self.kind, &self.endpoint) {
            (EmbedderKind::Remote, None) => bad("remote embedder needs an endpoint".into()),
            (EmbedderKind::Hashing, Some(_)) => {
                bad("endpoint is only valid for the remote embedder".into())
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Embedder>> {
        self.validate()?;
        Ok(match self.kind {
            EmbedderKind::Hashing => Box::new(HashingEmbedder::new(self.dim, self.ngram_range)),
            EmbedderKind::Remote => Box::new(RemoteEmbedder::new(
                self.endpoint.clone().unwrap_or_default(),
                self.dim,
                self.batch_size,
                Duration::from_secs(self.timeout_secs),
            )),
        })
    }
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    /// One unit-norm vector per text, in input order.
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;
}

/// Builds the embedder described by `spec` and embeds `texts`.
pub fn embed_batch(texts: &[String], spec: &EmbedderSpec) -> Result<Vec<EmbeddingVector>> {
    spec.build()?.embed(texts)
}

/// Joins the selected attribute values in schema order, lowercased, with runs
/// of whitespace inside each value collapsed to one space.
pub fn serialize_entity(entity: &Entity, selected: &[String]) -> String {
    let mut parts = Vec::with_capacity(selected.len());
    for (name, value) in &entity.values {
        if selected.iter().any(|s| s == name) {
            parts.push(normalize_value(value));
        }
    }
    parts.join(" ")
}

fn normalize_value(value: &str) -> String {
    value
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Signed feature hashing of character n-grams.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
    ngram_range: (usize, usize),
}

impl HashingEmbedder {
    pub fn new(dim: usize, ngram_range: (usize, usize)) -> Self {
        Self { dim, ngram_range }
    }

    pub fn embed_one(&self, text: &str) -> EmbeddingVector {
        let mut raw = vec![0.0f64; self.dim];
        let chars: Vec<char> = text.chars().collect();
        let mut buf = [0u8; 4];
        let (lo, hi) = self.ngram_range;
        for n in lo..=hi {
            for window in chars.windows(n) {
                let mut h = FNV_OFFSET;
                for c in window {
                    for b in c.encode_utf8(&mut buf).bytes() {
                        h = fnv1a_step(h, b);
                    }
                }
                let h = fmix64(h);
                let bucket = (h % self.dim as u64) as usize;
                let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
                raw[bucket] += sign;
            }
        }
        EmbeddingVector::normalized_f64(&raw)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Murmur3 finalizer; FNV-1a alone leaves the low bits poorly mixed for
/// short inputs.
#[inline]
fn fmix64(mut h: u64) -> u64 {
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^ (h >> 33)
}

#[inline]
fn fnv1a_step(h: u64, byte: u8) -> u64 {
    (h ^ byte as u64).wrapping_mul(FNV_PRIME)
}

impl Embedder for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        Ok(texts.par_iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Client for an external embedding service.
pub struct RemoteEmbedder {
    endpoint: String,
    dim: usize,
    batch_size: usize,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f32>>,
}

impl RemoteEmbedder {
    pub fn new(endpoint: String, dim: usize, batch_size: usize, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            endpoint,
            dim,
            batch_size: batch_size.max(1),
            agent,
        }
    }

    fn request(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(EmbedRequest { texts })
            .map_err(|e| Error::RemoteUnavailable(format!("{}: {e}", self.endpoint)))?;
        let body: EmbedResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| Error::RemoteUnavailable(format!("bad response body: {e}")))?;
        Ok(body.embeddings)
    }
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            let vectors = self.request(chunk)?;
            if vectors.len() != chunk.len() {
                return Err(Error::RemoteUnavailable(format!(
                    "sent {} texts, received {} embeddings",
                    chunk.len(),
                    vectors.len()
                )));
            }
            for v in vectors {
                if v.len() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        found: v.len(),
                    });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidEmbedding("non-finite component".into()));
                }
                out.push(EmbeddingVector::normalized(&v));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EntityRef;

    fn entity(values: &[(&str, &str)]) -> Entity {
        Entity {
            entity_ref: EntityRef::new(0, 0),
            values: values
                .iter()
                .map(|(a, v)| (a.to_string(), v.to_string()))
                .collect(),
        }
    }

    fn names(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn serialize_concatenates_values() {
        let e = entity(&[("title", "Megna's"), ("artist", "Tim O'Brien")]);
        assert_eq!(
            serialize_entity(&e, &names(&["title", "artist"])),
            "megna's tim o'brien"
        );
    }

    #[test]
    fn serialize_projection_and_empty() {
        let e = entity(&[("a", "X"), ("b", "Y")]);
        assert_eq!(serialize_entity(&e, &names(&["b"])), "y");
        let e = entity(&[("a", ""), ("b", "Y")]);
        assert_eq!(serialize_entity(&e, &names(&["a"])), "");
    }

    #[test]
    fn serialize_uses_schema_order_and_collapses_whitespace() {
        let e = entity(&[("a", "  Big \t Box "), ("b", "Red")]);
        assert_eq!(serialize_entity(&e, &names(&["b", "a"])), "big box red");
    }

    #[test]
    fn hashing_is_deterministic_and_unit() {
        let h = HashingEmbedder::new(64, (2, 3));
        let a = h.embed_one("apple iphone 8 plus 64gb silver");
        let b = h.embed_one("apple iphone 8 plus 64gb silver");
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn empty_text_is_first_basis_vector() {
        let h = HashingEmbedder::new(16, (2, 3));
        assert_eq!(h.embed_one(""), EmbeddingVector::basis(16, 0));
        // shorter than the smallest n-gram
        assert_eq!(h.embed_one("a"), EmbeddingVector::basis(16, 0));
    }

    #[test]
    fn spec_validation() {
        assert!(EmbedderSpec::hashing(4, (2, 3)).validate().is_err());
        assert!(EmbedderSpec::hashing(64, (3, 2)).validate().is_err());
        let mut remote = EmbedderSpec::remote("http://x", 64);
        remote.validate().unwrap();
        remote.endpoint = None;
        assert!(remote.validate().is_err());
    }

    #[test]
    fn unreachable_remote_reports_unavailable() {
        let mut spec = EmbedderSpec::remote("http://127.0.0.1:9/embed", 8);
        spec.timeout_secs = 2;
        let err = embed_batch(&["x".to_string()], &spec).unwrap_err();
        assert!(matches!(err, Error::RemoteUnavailable(_)), "{err:?}");
    }
}
