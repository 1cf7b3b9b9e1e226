//! Automated attribute selection.
//!
//! Each attribute's column is shuffled across a row sample and the records are
//! re-embedded. An attribute whose shuffle barely moves the embeddings carries
//! little signal for the embedder and is dropped.

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::embedding::{serialize_entity, EmbedderSpec, EmbeddingVector};
use crate::error::{Error, Result};
use crate::model::{Dataset, Entity};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeScore {
    pub name: String,
    /// Mean cosine similarity between original and post-shuffle embeddings.
    pub significance: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeReport {
    pub attributes: Vec<AttributeScore>,
    pub sample_size: usize,
    /// True when no attribute passed the threshold and all were kept.
    pub fallback: bool,
}

impl AttributeReport {
    pub fn selected(&self) -> Vec<String> {
        self.attributes
            .iter()
            .filter(|a| a.selected)
            .map(|a| a.name.clone())
            .collect()
    }
}

/// Scores every attribute and keeps those whose mean post-shuffle similarity
/// is below `gamma`. Falls back to all attributes if none qualifies.
pub fn select_attributes(
    dataset: &Dataset,
    spec: &EmbedderSpec,
    r: f64,
    gamma: f64,
    seed: u64,
) -> Result<AttributeReport> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidParams(format!("sampling ratio must lie in (0, 1], got {r}")));
    }
    let embedder = spec.build()?;
    let schema = dataset.schema().to_vec();
    let all: Vec<&Entity> = dataset.entities().collect();
    let total = all.len();
    let count = ((r * total as f64).ceil() as usize).clamp(1, total);
    let mut picked = index::sample(&mut rng::stream(seed, 0), total, count).into_vec();
    picked.sort_unstable();
    let sample: Vec<Entity> = picked.iter().map(|&i| all[i].clone()).collect();

    let texts: Vec<String> = sample.iter().map(|e| serialize_entity(e, &schema)).collect();
    let base = embedder.embed(&texts)?;

    let mut attributes = Vec::with_capacity(schema.len());
    for (a, name) in schema.iter().enumerate() {
        let mut column: Vec<String> = sample.iter().map(|e| e.values[a].1.clone()).collect();
        column.shuffle(&mut rng::stream(seed, a as u64 + 1));
        let shuffled: Vec<String> = sample
            .iter()
            .zip(column)
            .map(|(e, v)| {
                let mut e = e.clone();
                e.values[a].1 = v;
                serialize_entity(&e, &schema)
            })
            .collect();
        let moved = embedder.embed(&shuffled)?;
        let significance = mean_similarity(&base, &moved);
        attributes.push(AttributeScore {
            name: name.clone(),
            significance,
            selected: significance < gamma,
        });
    }

    let fallback = !attributes.iter().any(|a| a.selected);
    if fallback {
        for a in &mut attributes {
            a.selected = true;
        }
    }
    Ok(AttributeReport {
        attributes,
        sample_size: count,
        fallback,
    })
}

fn mean_similarity(a: &[EmbeddingVector], b: &[EmbeddingVector]) -> f64 {
    let sum: f64 = a.iter().zip(b).map(|(x, y)| x.cosine_similarity(y)).sum();
    sum / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_dataset, RawTable};

    fn table(header: &[&str], rows: Vec<Vec<String>>) -> RawTable {
        RawTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows,
        }
    }

    #[test]
    fn single_attribute_always_selected() {
        let rows = |off: usize| (0..5).map(|i| vec![format!("item number {}", i + off)]).collect();
        let ds = validate_dataset(vec![table(&["title"], rows(0)), table(&["title"], rows(3))])
            .unwrap();
        for gamma in [0.01, 0.5, 0.99] {
            let rep = select_attributes(&ds, &EmbedderSpec::default(), 1.0, gamma, 3).unwrap();
            assert_eq!(rep.selected(), vec!["title".to_string()]);
        }
    }

    #[test]
    fn constant_column_scores_one() {
        let rows = |off: usize| {
            (0..6)
                .map(|i| vec!["same".to_string(), format!("distinct value {}", i * 7 + off)])
                .collect()
        };
        let ds = validate_dataset(vec![
            table(&["brand", "name"], rows(0)),
            table(&["brand", "name"], rows(1)),
        ])
        .unwrap();
        let rep = select_attributes(&ds, &EmbedderSpec::default(), 1.0, 0.999, 9).unwrap();
        assert!((rep.attributes[0].significance - 1.0).abs() < 1e-6);
        assert!(!rep.attributes[0].selected);
        assert!(rep.attributes[1].selected);
    }

    #[test]
    fn rejects_bad_ratio() {
        let ds = validate_dataset(vec![
            table(&["a"], vec![vec!["x".into()]]),
            table(&["a"], vec![vec!["y".into()]]),
        ])
        .unwrap();
        assert!(select_attributes(&ds, &EmbedderSpec::default(), 0.0, 0.9, 0).is_err());
        assert!(select_attributes(&ds, &EmbedderSpec::default(), 1.5, 0.9, 0).is_err());
    }
}
