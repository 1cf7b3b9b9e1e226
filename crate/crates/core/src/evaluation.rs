//! Tuple-level and pair-level precision, recall and F1, plus the conversion
//! from matched pairs to tuples used to score pair-based matchers.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::union_find::UnionFind;

pub type Tuple<T> = BTreeSet<T>;

/// Disjoint ground-truth tuples, each with at least two members.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthSet<T: Ord> {
    tuples: BTreeSet<Tuple<T>>,
}

impl<T: Ord + Clone + std::fmt::Debug> TruthSet<T> {
    pub fn new<I, J>(tuples: I) -> Result<Self>
    where
        I: IntoIterator<Item = J>,
        J: IntoIterator<Item = T>,
    {
        let mut seen = BTreeSet::new();
        let mut out = BTreeSet::new();
        for tuple in tuples {
            let tuple: Tuple<T> = tuple.into_iter().collect();
            if tuple.len() < 2 {
                return Err(Error::InvalidParams(format!(
                    "truth tuple {tuple:?} has fewer than two members"
                )));
            }
            for member in &tuple {
                if !seen.insert(member.clone()) {
                    return Err(Error::OverlappingTruth(format!("{member:?}")));
                }
            }
            out.insert(tuple);
        }
        Ok(Self { tuples: out })
    }
}

impl<T: Ord> TruthSet<T> {
    pub fn tuples(&self) -> &BTreeSet<Tuple<T>> {
        &self.tuples
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub pair_precision: f64,
    pub pair_recall: f64,
    pub pair_f1: f64,
    pub predicted_tuples: usize,
    pub truth_tuples: usize,
    pub correct_tuples: usize,
    pub predicted_pairs: usize,
    pub truth_pairs: usize,
    pub correct_pairs: usize,
}

/// Precision, recall and their harmonic mean; any 0/0 is taken as 0.
fn prf(correct: usize, predicted: usize, truth: usize) -> (f64, f64, f64) {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let p = ratio(correct, predicted);
    let r = ratio(correct, truth);
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Exact-tuple scoring: a prediction counts only if it equals a truth tuple.
/// Duplicate predictions are counted once.
pub fn score_tuples<T: Ord + Clone>(pred: &[Tuple<T>], truth: &TruthSet<T>) -> ScoreReport {
    let pred: BTreeSet<&Tuple<T>> = pred.iter().collect();
    let correct = pred.iter().filter(|t| truth.tuples.contains(**t)).count();
    let (precision, recall, f1) = prf(correct, pred.len(), truth.len());
    ScoreReport {
        precision,
        recall,
        f1,
        predicted_tuples: pred.len(),
        truth_tuples: truth.len(),
        correct_tuples: correct,
        ..ScoreReport::default()
    }
}

/// All unordered member pairs `(a, b)` with `a < b`, across all tuples.
pub fn tuples_to_pairs<'a, T, I>(tuples: I) -> BTreeSet<(T, T)>
where
    T: Ord + Clone + 'a,
    I: IntoIterator<Item = &'a Tuple<T>>,
{
    let mut out = BTreeSet::new();
    for tuple in tuples {
        let members: Vec<&T> = tuple.iter().collect();
        for (i, a) in members.iter().enumerate() {
            for b in &members[i + 1..] {
                out.insert(((*a).clone(), (*b).clone()));
            }
        }
    }
    out
}

/// Pair-level scoring after expanding both sides into member pairs.
pub fn score_pairs<T: Ord + Clone>(pred: &[Tuple<T>], truth: &TruthSet<T>) -> ScoreReport {
    let pred_pairs = tuples_to_pairs(pred);
    let truth_pairs = tuples_to_pairs(truth.tuples());
    let correct = pred_pairs.intersection(&truth_pairs).count();
    let (pair_precision, pair_recall, pair_f1) = prf(correct, pred_pairs.len(), truth_pairs.len());
    ScoreReport {
        pair_precision,
        pair_recall,
        pair_f1,
        predicted_pairs: pred_pairs.len(),
        truth_pairs: truth_pairs.len(),
        correct_pairs: correct,
        ..ScoreReport::default()
    }
}

/// Both tuple-level and pair-level scores.
pub fn score<T: Ord + Clone>(pred: &[Tuple<T>], truth: &TruthSet<T>) -> ScoreReport {
    let t = score_tuples(pred, truth);
    let p = score_pairs(pred, truth);
    ScoreReport {
        pair_precision: p.pair_precision,
        pair_recall: p.pair_recall,
        pair_f1: p.pair_f1,
        predicted_pairs: p.predicted_pairs,
        truth_pairs: p.truth_pairs,
        correct_pairs: p.correct_pairs,
        ..t
    }
}

/// Connected components of the pair graph with at least two members, ordered
/// by smallest member. Each entity is grouped with everything it is matched
/// to directly or transitively.
pub fn pairs_to_tuples<T: Ord + Clone>(pairs: &BTreeSet<(T, T)>, entities: &[T]) -> Vec<Tuple<T>> {
    let mut ids: BTreeMap<&T, usize> = BTreeMap::new();
    let mut items: Vec<&T> = Vec::new();
    for e in entities.iter().chain(pairs.iter().flat_map(|(a, b)| [a, b])) {
        ids.entry(e).or_insert_with(|| {
            items.push(e);
            items.len() - 1
        });
    }
    let mut uf = UnionFind::new(items.len());
    for (a, b) in pairs {
        uf.union(ids[a], ids[b]);
    }
    let mut out: Vec<Tuple<T>> = uf
        .components()
        .into_iter()
        .filter(|c| c.len() >= 2)
        .map(|c| c.into_iter().map(|i| items[i].clone()).collect())
        .collect();
    out.sort();
    out
}
