//! Two-table merging and the table-wise hierarchical merge.
//!
//! A working table is a list of entity groups. Merging two working tables
//! joins their groups through mutual top-K pairs of group centroids; union-find
//! closes the matches transitively and every group without a match carries
//! over unchanged to the next level.

use std::collections::HashSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::ann::mutual_topk_counted;
use crate::embedding::{embed_batch, serialize_entity, EmbedderSpec, EmbeddingVector};
use crate::error::{Error, Result};
use crate::model::{Dataset, EmbeddingStore, EntityGroup, EntityRef, PipelineConfig};
use crate::rng;
use crate::union_find::UnionFind;

#[derive(Debug, Clone, PartialEq)]
pub struct WorkingTable {
    pub groups: Vec<EntityGroup>,
    pub level: usize,
}

impl WorkingTable {
    pub fn new(groups: Vec<EntityGroup>, level: usize) -> Self {
        Self { groups, level }
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn entity_count(&self) -> usize {
        self.groups.iter().map(EntityGroup::len).sum()
    }

    pub fn members(&self) -> impl Iterator<Item = EntityRef> + '_ {
        self.groups.iter().flat_map(|g| g.members().iter().copied())
    }

    pub fn centroids(&self) -> Vec<EmbeddingVector> {
        self.groups.iter().map(|g| g.centroid().clone()).collect()
    }
}

/// One singleton group per entity, one working table per source table.
pub fn init_working_tables(
    dataset: &Dataset,
    selected: &[String],
    spec: &EmbedderSpec,
) -> Result<Vec<WorkingTable>> {
    if selected.is_empty() {
        return Err(Error::Precondition("no attributes selected".into()));
    }
    if let Some(unknown) = selected.iter().find(|s| !dataset.schema().contains(s)) {
        return Err(Error::Precondition(format!("unknown attribute {unknown:?}")));
    }
    let texts: Vec<String> = dataset
        .entities()
        .map(|e| serialize_entity(e, selected))
        .collect();
    let mut vectors = embed_batch(&texts, spec)?.into_iter();
    Ok(dataset
        .tables()
        .iter()
        .map(|table| {
            let groups = table
                .iter()
                .map(|e| EntityGroup::singleton(e.entity_ref, vectors.next().expect("one vector per entity")))
                .collect();
            WorkingTable::new(groups, 0)
        })
        .collect())
}

/// Per-entity embeddings taken from level-0 working tables.
pub fn embedding_store(tables: &[WorkingTable]) -> EmbeddingStore {
    tables
        .iter()
        .flat_map(|t| &t.groups)
        .flat_map(|g| g.members().iter().map(move |r| (*r, g.centroid().clone())))
        .collect()
}

/// A matched pair of groups, named by each group's smallest member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupMatch {
    pub left: EntityRef,
    pub right: EntityRef,
    pub dist: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MergeStats {
    pub matches: Vec<GroupMatch>,
    pub distance_evals: u64,
}

/// Merges two working tables with `cfg.seed` seeding any graph index.
pub fn merge_two_tables(a: &WorkingTable, b: &WorkingTable, cfg: &PipelineConfig) -> Result<WorkingTable> {
    Ok(merge_two_tables_traced(a, b, cfg, cfg.seed)?.0)
}

pub fn merge_two_tables_traced(
    a: &WorkingTable,
    b: &WorkingTable,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<(WorkingTable, MergeStats)> {
    let level = a.level.max(b.level) + 1;
    if a.is_empty() || b.is_empty() {
        let groups = sorted_groups(a.groups.iter().chain(&b.groups).cloned().collect());
        return Ok((WorkingTable::new(groups, level), MergeStats::default()));
    }
    let seen: HashSet<EntityRef> = a.members().collect();
    if let Some(dup) = b.members().find(|r| seen.contains(r)) {
        return Err(Error::Precondition(format!("entity {dup} appears in both tables")));
    }

    let found = mutual_topk_counted(&a.centroids(), &b.centroids(), cfg.k, cfg.m, &cfg.index, seed)?;
    let offset = a.len();
    let mut uf = UnionFind::new(a.len() + b.len());
    let mut matches = Vec::with_capacity(found.pairs.len());
    for p in &found.pairs {
        uf.union(p.left, offset + p.right);
        matches.push(GroupMatch {
            left: a.groups[p.left].first(),
            right: b.groups[p.right].first(),
            dist: p.dist,
        });
    }

    let group_at = |i: usize| {
        if i < offset {
            &a.groups[i]
        } else {
            &b.groups[i - offset]
        }
    };
    let mut groups = Vec::new();
    for component in uf.components() {
        let mut iter = component.into_iter();
        let mut merged = group_at(iter.next().expect("components are non-empty")).clone();
        for i in iter {
            merged = merged.union(group_at(i).clone())?;
        }
        groups.push(merged);
    }
    Ok((
        WorkingTable::new(sorted_groups(groups), level),
        MergeStats {
            matches,
            distance_evals: found.distance_evals,
        },
    ))
}

fn sorted_groups(mut groups: Vec<EntityGroup>) -> Vec<EntityGroup> {
    groups.sort_by_key(EntityGroup::first);
    groups
}

/// One level of a merge plan, indexing into that level's table list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlanLevel {
    pub pairs: Vec<(usize, usize)>,
    pub pass_through: Option<usize>,
}

impl PlanLevel {
    /// Number of tables this level consumes.
    pub fn input_count(&self) -> usize {
        2 * self.pairs.len() + usize::from(self.pass_through.is_some())
    }
}

/// Pairing schedule for hierarchical merging. The output list of a level is
/// the merged pairs in order, followed by the pass-through table if any.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MergePlan {
    pub levels: Vec<PlanLevel>,
}

impl MergePlan {
    /// Random pairing per level. With an odd count the last table in the
    /// current list sits the level out.
    pub fn random(table_count: usize, seed: u64) -> Self {
        let mut levels = Vec::new();
        let mut count = table_count;
        while count > 1 {
            let pass_through = (count % 2 == 1).then_some(count - 1);
            let mut order: Vec<usize> = (0..count - usize::from(pass_through.is_some())).collect();
            order.shuffle(&mut rng::stream(seed, 0x1000 + levels.len() as u64));
            let pairs: Vec<(usize, usize)> = order.chunks(2).map(|c| (c[0], c[1])).collect();
            count = pairs.len() + usize::from(pass_through.is_some());
            levels.push(PlanLevel { pairs, pass_through });
        }
        MergePlan { levels }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergeRecord {
    pub level: usize,
    pub pair: (usize, usize),
    pub matched_pairs: usize,
    pub distance_evals: u64,
    #[serde(skip)]
    pub matches: Vec<GroupMatch>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MergeTrace {
    pub records: Vec<MergeRecord>,
}

impl MergeTrace {
    pub fn distance_evals(&self) -> u64 {
        self.records.iter().map(|r| r.distance_evals).sum()
    }

    pub fn matched_pairs(&self) -> usize {
        self.records.iter().map(|r| r.matched_pairs).sum()
    }

    /// One JSON object per merge: level, pair and matched-pair count.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Merges tables level by level until one remains.
pub fn hierarchical_merge(tables: Vec<WorkingTable>, cfg: &PipelineConfig) -> Result<WorkingTable> {
    Ok(hierarchical_merge_traced(tables, cfg)?.0)
}

/// Pairs within a level are merged in parallel on the current rayon pool.
/// Each merge draws its index seed from (seed, level, pair position), so the
/// result does not depend on the number of workers.
pub fn hierarchical_merge_traced(
    tables: Vec<WorkingTable>,
    cfg: &PipelineConfig,
) -> Result<(WorkingTable, MergeTrace)> {
    if tables.is_empty() {
        return Err(Error::Precondition("hierarchical merge needs at least one table".into()));
    }
    let plan = MergePlan::random(tables.len(), cfg.seed);
    let mut current = tables;
    let mut trace = MergeTrace::default();
    for (level, step) in plan.levels.iter().enumerate() {
        debug_assert_eq!(step.input_count(), current.len());
        let merged: Vec<(WorkingTable, MergeStats)> = step
            .pairs
            .par_iter()
            .enumerate()
            .map(|(j, &(l, r))| {
                let seed = rng::derive_seed(cfg.seed, ((level as u64) << 32) | j as u64);
                merge_two_tables_traced(&current[l], &current[r], cfg, seed)
            })
            .collect::<Result<_>>()?;
        let pass = step.pass_through.map(|i| std::mem::replace(&mut current[i], WorkingTable::new(Vec::new(), 0)));
        let mut next = Vec::with_capacity(merged.len() + 1);
        for ((table, stats), &pair) in merged.into_iter().zip(&step.pairs) {
            log::debug!(
                "level {level}: merged tables {pair:?} with {} matches",
                stats.matches.len()
            );
            trace.records.push(MergeRecord {
                level,
                pair,
                matched_pairs: stats.matches.len(),
                distance_evals: stats.distance_evals,
                matches: stats.matches,
            });
            next.push(table);
        }
        next.extend(pass);
        current = next;
    }
    Ok((current.pop().expect("one table remains"), trace))
}

/// Groups with at least two members.
pub fn extract_candidate_tuples(final_table: &WorkingTable) -> Vec<EntityGroup> {
    final_table
        .groups
        .iter()
        .filter(|g| g.len() >= 2)
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ann::IndexParams;
    use crate::model::{validate_dataset, RawTable};

    fn cfg(k: usize, m: f64) -> PipelineConfig {
        PipelineConfig {
            k,
            m,
            index: IndexParams::exact(),
            ..PipelineConfig::default()
        }
    }

    fn table(source: u32, vectors: &[EmbeddingVector]) -> WorkingTable {
        WorkingTable::new(
            vectors
                .iter()
                .enumerate()
                .map(|(i, v)| EntityGroup::singleton(EntityRef::new(source, i as u32), v.clone()))
                .collect(),
            0,
        )
    }

    fn unit(xs: &[f32]) -> EmbeddingVector {
        EmbeddingVector::normalized(xs)
    }

    #[test]
    fn identical_pair_merges() {
        let v = unit(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let out = merge_two_tables(&table(0, &[v.clone()]), &table(1, &[v]), &cfg(1, 0.5)).unwrap();
        assert_eq!(out.groups.len(), 1);
        assert_eq!(out.groups[0].members(), &[EntityRef::new(0, 0), EntityRef::new(1, 0)]);
        assert_eq!(out.level, 1);
    }

    #[test]
    fn distant_pair_passes_through() {
        let a = table(0, &[EmbeddingVector::basis(8, 0)]);
        let b = table(1, &[EmbeddingVector::basis(8, 1)]);
        let out = merge_two_tables(&a, &b, &cfg(1, 0.5)).unwrap();
        assert_eq!(out.groups.len(), 2);
        assert_eq!(out.groups[0], a.groups[0]);
        assert_eq!(out.groups[1], b.groups[0]);
    }

    #[test]
    fn transitive_closure_through_shared_match() {
        // a0 and a1 both sit close to b0; with k=2 both pairs are mutual.
        let a = table(0, &[unit(&[1.0, 0.1, 0.0, 0.0]), unit(&[1.0, -0.1, 0.0, 0.0])]);
        let b = table(1, &[unit(&[1.0, 0.0, 0.0, 0.0])]);
        let c = cfg(2, 0.5);
        let (out, stats) = merge_two_tables_traced(&a, &b, &c, 0).unwrap();
        assert_eq!(stats.matches.len(), 2);
        // Oracle: union-find closure over the recorded pairs.
        let mut uf = UnionFind::new(3);
        for m in &stats.matches {
            let idx = |r: EntityRef| if r.source_id == 0 { r.row_id as usize } else { 2 };
            uf.union(idx(m.left), idx(m.right));
        }
        assert_eq!(uf.components(), vec![vec![0, 1, 2]]);
        assert_eq!(out.groups.len(), 1);
        assert_eq!(
            out.groups[0].members(),
            &[EntityRef::new(0, 0), EntityRef::new(0, 1), EntityRef::new(1, 0)]
        );
    }

    #[test]
    fn overlapping_tables_rejected() {
        let v = [EmbeddingVector::basis(8, 0)];
        assert!(matches!(
            merge_two_tables(&table(0, &v), &table(0, &v), &cfg(1, 0.5)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn plan_shapes() {
        assert!(MergePlan::random(1, 0).levels.is_empty());
        let four = MergePlan::random(4, 3);
        assert_eq!(four.levels.len(), 2);
        assert_eq!(four.levels[0].pairs.len(), 2);
        assert_eq!(four.levels[1].pairs.len(), 1);
        let five = MergePlan::random(5, 3);
        let sizes: Vec<usize> = five.levels.iter().map(PlanLevel::input_count).collect();
        assert_eq!(sizes, vec![5, 3, 2]);
        assert_eq!(five.levels[0].pass_through, Some(4));
        assert_eq!(five.levels[1].pass_through, Some(2));
        assert_eq!(five.levels[2].pass_through, None);
    }

    #[test]
    fn plan_levels_are_ceil_log2() {
        for s in 1..=40usize {
            let expected = if s == 1 { 0 } else { (usize::BITS - (s - 1).leading_zeros()) as usize };
            let plan = MergePlan::random(s, s as u64);
            assert_eq!(plan.levels.len(), expected, "S = {s}");
            for level in &plan.levels {
                let mut used: Vec<usize> = level.pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
                used.extend(level.pass_through);
                used.sort_unstable();
                assert_eq!(used, (0..level.input_count()).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn single_table_is_returned_unchanged() {
        let t = table(0, &[EmbeddingVector::basis(8, 0), EmbeddingVector::basis(8, 1)]);
        let out = hierarchical_merge(vec![t.clone()], &cfg(1, 0.5)).unwrap();
        assert_eq!(out, t);
    }

    #[test]
    fn init_tables_are_singletons() {
        let raw = |rows: &[&str]| RawTable {
            header: vec!["name".into()],
            rows: rows.iter().map(|r| vec![r.to_string()]).collect(),
        };
        let ds = validate_dataset(vec![raw(&["alpha", "alpha", "beta"]), raw(&["gamma"])]).unwrap();
        let spec = EmbedderSpec::hashing(64, (2, 3));
        let tables = init_working_tables(&ds, &["name".to_string()], &spec).unwrap();
        assert_eq!(tables.len(), 2);
        assert_eq!(tables[0].len(), 3);
        assert!(tables[0].groups.iter().all(|g| g.len() == 1));
        assert_eq!(tables[0].groups[0].centroid(), tables[0].groups[1].centroid());
        assert_ne!(tables[0].groups[0].members(), tables[0].groups[1].members());
        assert!(matches!(
            init_working_tables(&ds, &[], &spec),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn extract_keeps_multi_member_groups() {
        let g = |refs: &[(u32, u32)]| {
            EntityGroup::from_members(
                refs.iter()
                    .map(|&(s, r)| (EntityRef::new(s, r), EmbeddingVector::basis(8, 0)))
                    .collect(),
            )
            .unwrap()
        };
        let t = WorkingTable::new(vec![g(&[(0, 0), (1, 0)]), g(&[(0, 1), (1, 1), (2, 0)]), g(&[(0, 2)]), g(&[(1, 2)])], 2);
        let out = extract_candidate_tuples(&t);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].len(), 2);
        assert_eq!(out[1].len(), 3);
        let singles = WorkingTable::new(vec![g(&[(0, 0)]), g(&[(1, 0)])], 1);
        assert!(extract_candidate_tuples(&singles).is_empty());
    }
}
