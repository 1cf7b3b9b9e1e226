//! Density-based pruning of candidate tuples.
//!
//! Within a tuple, an entity is *core* when at least `min_pts` members
//! (itself included) lie within Euclidean distance `epsilon`; a non-core
//! entity with a core member inside its `epsilon` ball is *reachable*; anything
//! else is an *outlier* and is removed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::model::{EmbeddingStore, EntityGroup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityClass {
    Core,
    Reachable,
    Outlier,
}

/// Member positions split by class. Each list is ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Classification {
    pub core: Vec<usize>,
    pub reachable: Vec<usize>,
    pub outlier: Vec<usize>,
}

impl Classification {
    pub fn labels(&self, len: usize) -> Vec<EntityClass> {
        let mut out = vec![EntityClass::Outlier; len];
        for &i in &self.core {
            out[i] = EntityClass::Core;
        }
        for &i in &self.reachable {
            out[i] = EntityClass::Reachable;
        }
        out
    }
}

/// Classifies the members of one tuple given their embeddings.
pub fn classify_entities(points: &[&EmbeddingVector], epsilon: f64, min_pts: usize) -> Result<Classification> {
    if points.len() < 2 {
        return Err(Error::TupleTooSmall(points.len()));
    }
    if epsilon.is_nan() || epsilon <= 0.0 || min_pts < 1 {
        return Err(Error::InvalidParams(format!(
            "need epsilon > 0 and min_pts >= 1, got {epsilon} and {min_pts}"
        )));
    }
    let n = points.len();
    let mut within = vec![false; n * n];
    for i in 0..n {
        within[i * n + i] = true;
        for j in i + 1..n {
            let close = points[i].euclidean(points[j]) <= epsilon;
            within[i * n + j] = close;
            within[j * n + i] = close;
        }
    }
    let is_core: Vec<bool> = (0..n)
        .map(|i| within[i * n..(i + 1) * n].iter().filter(|&&w| w).count() >= min_pts)
        .collect();

    let mut out = Classification::default();
    for i in 0..n {
        if is_core[i] {
            out.core.push(i);
        } else if (0..n).any(|j| is_core[j] && within[i * n + j]) {
            out.reachable.push(i);
        } else {
            out.outlier.push(i);
        }
    }
    Ok(out)
}

/// Drops outliers from every tuple and then drops tuples left with fewer than
/// two members. Order of the surviving tuples follows the input.
pub fn prune_tuples(
    candidates: &[EntityGroup],
    embeddings: &EmbeddingStore,
    epsilon: f64,
    min_pts: usize,
) -> Result<Vec<EntityGroup>> {
    let pruned: Vec<Option<EntityGroup>> = candidates
        .par_iter()
        .map(|tuple| prune_one(tuple, embeddings, epsilon, min_pts))
        .collect::<Result<_>>()?;
    Ok(pruned.into_iter().flatten().collect())
}

fn prune_one(
    tuple: &EntityGroup,
    embeddings: &EmbeddingStore,
    epsilon: f64,
    min_pts: usize,
) -> Result<Option<EntityGroup>> {
    if tuple.len() < 2 {
        return Ok(None);
    }
    let points: Vec<&EmbeddingVector> = tuple
        .members()
        .iter()
        .map(|r| {
            embeddings
                .get(*r)
                .ok_or_else(|| Error::Precondition(format!("no embedding for {r}")))
        })
        .collect::<Result<_>>()?;
    let classes = classify_entities(&points, epsilon, min_pts)?;
    if classes.outlier.is_empty() {
        return Ok(Some(tuple.clone()));
    }
    if tuple.len() - classes.outlier.len() < 2 {
        return Ok(None);
    }
    let mut kept = tuple.clone();
    let mut position = 0usize;
    let mut outliers = classes.outlier.iter().peekable();
    kept.retain_members(|_| {
        let drop = outliers.next_if_eq(&&position).is_some();
        position += 1;
        !drop
    });
    Ok(Some(kept))
}
