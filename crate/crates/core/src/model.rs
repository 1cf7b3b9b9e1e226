//! Shared data model: entity references, validated multi-table datasets,
//! entity groups and the pipeline hyperparameters.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ann::IndexParams;
use crate::embedding::{EmbedderSpec, EmbeddingVector};
use crate::error::{Error, Result};

/// Position of a record: origin table and row within that table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityRef {
    pub source_id: u32,
    pub row_id: u32,
}

impl EntityRef {
    pub fn new(source_id: u32, row_id: u32) -> Self {
        Self { source_id, row_id }
    }
}

impl fmt::Display for EntityRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.source_id, self.row_id)
    }
}

impl FromStr for EntityRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidEntityRef(s.to_string());
        let (src, row) = s.split_once(':').ok_or_else(bad)?;
        Ok(EntityRef {
            source_id: src.trim().parse().map_err(|_| bad())?,
            row_id: row.trim().parse().map_err(|_| bad())?,
        })
    }
}

/// One record. `values` follow the dataset schema order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub entity_ref: EntityRef,
    pub values: Vec<(String, String)>,
}

impl Entity {
    pub fn value(&self, attr: &str) -> Option<&str> {
        self.values
            .iter()
            .find(|(name, _)| name == attr)
            .map(|(_, v)| v.as_str())
    }
}

/// A parsed but unvalidated table: a header plus rows of cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// S tables sharing one schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    schema: Vec<String>,
    tables: Vec<Vec<Entity>>,
}

impl Dataset {
    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn tables(&self) -> &[Vec<Entity>] {
        &self.tables
    }

    pub fn table_count(&self) -> usize {
        self.tables.len()
    }

    pub fn entity_count(&self) -> usize {
        self.tables.iter().map(Vec::len).sum()
    }

    pub fn mean_table_size(&self) -> f64 {
        self.entity_count() as f64 / self.tables.len() as f64
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.tables.iter().flatten()
    }

    pub fn get(&self, r: EntityRef) -> Option<&Entity> {
        self.tables
            .get(r.source_id as usize)
            .and_then(|t| t.get(r.row_id as usize))
    }

    /// Every entity reference, table by table in row order.
    pub fn entity_refs(&self) -> Vec<EntityRef> {
        self.entities().map(|e| e.entity_ref).collect()
    }

    /// Raw form of the dataset, suitable for writing back out as CSV.
    pub fn to_raw(&self) -> Vec<RawTable> {
        self.tables
            .iter()
            .map(|t| RawTable {
                header: self.schema.clone(),
                rows: t
                    .iter()
                    .map(|e| e.values.iter().map(|(_, v)| v.clone()).collect())
                    .collect(),
            })
            .collect()
    }
}

/// Checks a set of raw tables and assigns entity references.
///
/// The first table's header fixes the attribute order; every other table must
/// carry the same attribute names in the same order.
pub fn validate_dataset(raw_tables: Vec<RawTable>) -> Result<Dataset> {
    if raw_tables.len() < 2 {
        return Err(Error::TooFewTables(raw_tables.len()));
    }
    let schema = raw_tables[0].header.clone();
    let mut tables = Vec::with_capacity(raw_tables.len());
    for (t, raw) in raw_tables.into_iter().enumerate() {
        if raw.header != schema {
            return Err(Error::SchemaMismatch {
                table: t,
                expected: schema,
                found: raw.header,
            });
        }
        if raw.rows.is_empty() {
            return Err(Error::EmptyTable { table: t });
        }
        let mut entities = Vec::with_capacity(raw.rows.len());
        for (r, row) in raw.rows.into_iter().enumerate() {
            if row.len() != schema.len() {
                return Err(Error::InvalidParams(format!(
                    "table {t} row {r} has {} cells, schema has {}",
                    row.len(),
                    schema.len()
                )));
            }
            entities.push(Entity {
                entity_ref: EntityRef::new(t as u32, r as u32),
                values: schema.iter().cloned().zip(row).collect(),
            });
        }
        tables.push(entities);
    }
    Ok(Dataset { schema, tables })
}

/// A set of entities believed equivalent, with the representation used to
/// match it against other groups.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityGroup {
    members: Vec<EntityRef>,
    centroid: EmbeddingVector,
    // Unnormalized sum of member embeddings; the centroid is its direction.
    sum: Vec<f64>,
}

impl EntityGroup {
    pub fn singleton(member: EntityRef, embedding: EmbeddingVector) -> Self {
        let sum = embedding.as_slice().iter().map(|&x| x as f64).collect();
        Self {
            members: vec![member],
            centroid: embedding,
            sum,
        }
    }

    /// Builds a group from explicit members and their embeddings.
    pub fn from_members(mut pairs: Vec<(EntityRef, EmbeddingVector)>) -> Result<Self> {
        pairs.sort_by_key(|(r, _)| *r);
        let mut iter = pairs.into_iter();
        let (first, emb) = iter
            .next()
            .ok_or_else(|| Error::Precondition("group needs at least one member".into()))?;
        let mut group = EntityGroup::singleton(first, emb);
        for (r, e) in iter {
            group = group.union(EntityGroup::singleton(r, e))?;
        }
        Ok(group)
    }

    /// Merges two groups. Members are kept sorted; the centroid becomes the
    /// normalized mean of all member embeddings.
    pub fn union(mut self, other: EntityGroup) -> Result<Self> {
        if self.sum.len() != other.sum.len() {
            return Err(Error::DimensionMismatch {
                expected: self.sum.len(),
                found: other.sum.len(),
            });
        }
        self.members.extend(other.members);
        self.members.sort_unstable();
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        self.centroid = EmbeddingVector::normalized_f64(&self.sum);
        Ok(self)
    }

    pub fn members(&self) -> &[EntityRef] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn centroid(&self) -> &EmbeddingVector {
        &self.centroid
    }

    /// Smallest member reference; groups are ordered by it.
    pub fn first(&self) -> EntityRef {
        self.members[0]
    }

    /// Keeps only the members for which `keep` returns true. The centroid is
    /// left as is since it is no longer used for matching after pruning.
    pub fn retain_members(&mut self, mut keep: impl FnMut(EntityRef) -> bool) {
        self.members.retain(|r| keep(*r));
    }
}

/// Per-entity embeddings, looked up by reference.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    vectors: HashMap<EntityRef, EmbeddingVector>,
}

impl EmbeddingStore {
    pub fn insert(&mut self, r: EntityRef, v: EmbeddingVector) {
        self.vectors.insert(r, v);
    }

    pub fn get(&self, r: EntityRef) -> Option<&EmbeddingVector> {
        self.vectors.get(&r)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl FromIterator<(EntityRef, EmbeddingVector)> for EmbeddingStore {
    fn from_iter<I: IntoIterator<Item = (EntityRef, EmbeddingVector)>>(iter: I) -> Self {
        Self {
            vectors: iter.into_iter().collect(),
        }
    }
}

/// Hyperparameters of a matching run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Width of the top-K neighbour lists.
    pub k: usize,
    /// Cosine-distance threshold for a mutual pair to count as a match.
    pub m: f64,
    /// Euclidean radius of the pruning neighbourhood.
    pub epsilon: f64,
    pub min_pts: usize,
    /// Attribute-selection threshold on post-shuffle similarity.
    pub gamma: f64,
    /// Row sampling ratio for attribute selection.
    pub r: f64,
    pub seed: u64,
    pub embedder: EmbedderSpec,
    pub index: IndexParams,
    pub parallelism: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: 1,
            m: 0.35,
            epsilon: 1.0,
            min_pts: 2,
            gamma: 0.9,
            r: 0.2,
            seed: 0,
            embedder: EmbedderSpec::default(),
            index: IndexParams::default(),
            parallelism: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k < 1 {
            return bad("k must be at least 1".into());
        }
        if !(0.0..=2.0).contains(&self.m) {
            return bad(format!("m must lie in [0, 2], got {}", self.m));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.min_pts < 1 {
            return bad("min_pts must be at least 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.r > 0.0 && self.r <= 1.0) {
            return bad(format!("r must lie in (0, 1], got {}", self.r));
        }
        if self.parallelism < 1 {
            return bad("parallelism must be at least 1".into());
        }
        self.embedder.validate()?;
        self.index.validate()?;
        Ok(())
    }
}
