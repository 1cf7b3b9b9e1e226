//! Pairwise, chain and hierarchical matching over the same mutual top-K
//! primitive, with exact operation counts for comparing how they scale in the
//! number of tables.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ann::{mutual_topk_counted, IndexParams};
use crate::error::{Error, Result};
use crate::evaluation::{pairs_to_tuples, Tuple};
use crate::merging::{extract_candidate_tuples, hierarchical_merge_traced, merge_two_tables_traced, WorkingTable};
use crate::model::{EntityRef, PipelineConfig};
use crate::rng;
use crate::synth::{planted_embeddings, PlantedParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Pairwise,
    Chain,
    Hierarchical,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Pairwise, Strategy::Chain, Strategy::Hierarchical];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Pairwise => "pairwise",
            Strategy::Chain => "chain",
            Strategy::Hierarchical => "hierarchical",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyRun {
    pub strategy: Strategy,
    pub tables: usize,
    pub n: usize,
    pub wall_seconds: f64,
    pub distance_evals: u64,
    pub pairs_found: u64,
    /// Two-table jobs executed (mutual top-K joins or merges).
    pub jobs: usize,
}

fn to_tuples(groups: &[crate::model::EntityGroup]) -> Vec<Tuple<EntityRef>> {
    let mut out: Vec<Tuple<EntityRef>> = groups
        .iter()
        .map(|g| g.members().iter().copied().collect())
        .collect();
    out.sort();
    out
}

fn average_size(tables: &[WorkingTable]) -> usize {
    tables.iter().map(WorkingTable::entity_count).sum::<usize>() / tables.len().max(1)
}

/// Mutual top-K on every unordered table pair, then connected components.
pub fn run_pairwise(tables: &[WorkingTable], cfg: &PipelineConfig) -> Result<(Vec<Tuple<EntityRef>>, StrategyRun)> {
    if tables.len() < 2 {
        return Err(Error::TooFewTables(tables.len()));
    }
    let start = Instant::now();
    let centroids: Vec<_> = tables.iter().map(WorkingTable::centroids).collect();
    let mut pairs: BTreeSet<(EntityRef, EntityRef)> = BTreeSet::new();
    let mut evals = 0u64;
    let mut found = 0u64;
    let mut jobs = 0usize;
    for i in 0..tables.len() {
        for j in i + 1..tables.len() {
            let seed = rng::derive_seed(cfg.seed, ((i as u64) << 32) | j as u64);
            let res = mutual_topk_counted(&centroids[i], &centroids[j], cfg.k, cfg.m, &cfg.index, seed)?;
            evals += res.distance_evals;
            found += res.pairs.len() as u64;
            jobs += 1;
            for p in res.pairs {
                let (a, b) = (tables[i].groups[p.left].first(), tables[j].groups[p.right].first());
                pairs.insert((a.min(b), a.max(b)));
            }
        }
    }
    // Groups that already hold several members stay linked.
    for g in tables.iter().flat_map(|t| &t.groups) {
        for &other in &g.members()[1..] {
            pairs.insert((g.first(), other));
        }
    }
    let entities: Vec<EntityRef> = tables.iter().flat_map(WorkingTable::members).collect();
    let tuples = pairs_to_tuples(&pairs, &entities);
    Ok((
        tuples,
        StrategyRun {
            strategy: Strategy::Pairwise,
            tables: tables.len(),
            n: average_size(tables),
            wall_seconds: start.elapsed().as_secs_f64(),
            distance_evals: evals,
            pairs_found: found,
            jobs,
        },
    ))
}

/// Merges each table in input order into a growing base table.
pub fn run_chain(tables: &[WorkingTable], cfg: &PipelineConfig) -> Result<(Vec<Tuple<EntityRef>>, StrategyRun)> {
    if tables.len() < 2 {
        return Err(Error::TooFewTables(tables.len()));
    }
    let start = Instant::now();
    let mut base = tables[0].clone();
    let mut evals = 0u64;
    let mut found = 0u64;
    for (j, next) in tables.iter().enumerate().skip(1) {
        let seed = rng::derive_seed(cfg.seed, j as u64);
        let (merged, stats) = merge_two_tables_traced(&base, next, cfg, seed)?;
        evals += stats.distance_evals;
        found += stats.matches.len() as u64;
        base = merged;
    }
    let tuples = to_tuples(&extract_candidate_tuples(&base));
    Ok((
        tuples,
        StrategyRun {
            strategy: Strategy::Chain,
            tables: tables.len(),
            n: average_size(tables),
            wall_seconds: start.elapsed().as_secs_f64(),
            distance_evals: evals,
            pairs_found: found,
            jobs: tables.len() - 1,
        },
    ))
}

/// Table-wise hierarchical merging.
pub fn run_hierarchical(
    tables: &[WorkingTable],
    cfg: &PipelineConfig,
) -> Result<(Vec<Tuple<EntityRef>>, StrategyRun)> {
    if tables.len() < 2 {
        return Err(Error::TooFewTables(tables.len()));
    }
    let start = Instant::now();
    let (merged, trace) = hierarchical_merge_traced(tables.to_vec(), cfg)?;
    let tuples = to_tuples(&extract_candidate_tuples(&merged));
    Ok((
        tuples,
        StrategyRun {
            strategy: Strategy::Hierarchical,
            tables: tables.len(),
            n: average_size(tables),
            wall_seconds: start.elapsed().as_secs_f64(),
            distance_evals: trace.distance_evals(),
            pairs_found: trace.matched_pairs() as u64,
            jobs: trace.records.len(),
        },
    ))
}

pub fn run_strategy(
    strategy: Strategy,
    tables: &[WorkingTable],
    cfg: &PipelineConfig,
) -> Result<(Vec<Tuple<EntityRef>>, StrategyRun)> {
    match strategy {
        Strategy::Pairwise => run_pairwise(tables, cfg),
        Strategy::Chain => run_chain(tables, cfg),
        Strategy::Hierarchical => run_hierarchical(tables, cfg),
    }
}

/// Settings for a scaling run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub strategies: Vec<Strategy>,
    pub s_values: Vec<usize>,
    pub n: usize,
    pub repeats: usize,
    /// Share of each table with no duplicate anywhere.
    pub unique_fraction: f64,
    pub seed: u64,
    pub k: usize,
    pub m: f64,
    pub index: IndexParams,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            strategies: Strategy::ALL.to_vec(),
            s_values: vec![4, 8, 16],
            n: 500,
            repeats: 3,
            unique_fraction: 0.1,
            seed: 0,
            k: 1,
            m: 0.2,
            index: IndexParams::exact(),
        }
    }
}

impl BenchConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.strategies.is_empty() || self.s_values.is_empty() {
            return bad("strategies and s_values must be non-empty".into());
        }
        if self.s_values.windows(2).any(|w| w[0] >= w[1]) {
            return bad("s_values must be strictly ascending".into());
        }
        if self.s_values[0] < 2 {
            return bad("every S must be at least 2".into());
        }
        if self.repeats < 3 {
            return bad(format!("repeats must be at least 3, got {}", self.repeats));
        }
        if self.n == 0 || !(0.0..1.0).contains(&self.unique_fraction) {
            return bad("n must be positive and unique_fraction in [0, 1)".into());
        }
        self.pipeline_config().validate()
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            k: self.k,
            m: self.m,
            seed: self.seed,
            index: self.index.clone(),
            parallelism: 1,
            ..PipelineConfig::default()
        }
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        (xs[mid - 1] + xs[mid]) / 2.0
    }
}

/// Runs every strategy on planted data for each S, `repeats` times, on a
/// single worker thread. Wall time is the median over repeats; counters come
/// from the last repeat and are identical across repeats with the exact
/// backend.
pub fn scaling_report(bench: &BenchConfig) -> Result<Vec<StrategyRun>> {
    bench.validate()?;
    let cfg = bench.pipeline_config();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut rows = Vec::new();
    for &s in &bench.s_values {
        let data = planted_embeddings(&PlantedParams::spanning(
            s,
            bench.n,
            bench.unique_fraction,
            rng::derive_seed(bench.seed, s as u64),
        ))?;
        for &strategy in &bench.strategies {
            let mut times = Vec::with_capacity(bench.repeats);
            let mut last = None;
            for _ in 0..bench.repeats {
                let (_, run) = pool.install(|| run_strategy(strategy, &data.tables, &cfg))?;
                times.push(run.wall_seconds);
                last = Some(run);
            }
            let mut run = last.expect("repeats >= 3");
            run.wall_seconds = median(times);
            log::info!(
                "{strategy} S={s}: {} distance evals, {:.3}s",
                run.distance_evals,
                run.wall_seconds
            );
            rows.push(run);
        }
    }
    Ok(rows)
}

pub fn write_report_csv<W: Write>(runs: &[StrategyRun], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::InvalidParams(format!("writing report: {e}"));
    w.write_record(["strategy", "S", "n", "median_seconds", "distance_evals", "pairs_found"])
        .map_err(err)?;
    for r in runs {
        w.write_record([
            r.strategy.name().to_string(),
            r.tables.to_string(),
            r.n.to_string(),
            format!("{:.6}", r.wall_seconds),
            r.distance_evals.to_string(),
            r.pairs_found.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| err(e.into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingVector;
    use crate::merging::merge_two_tables;
    use crate::model::EntityGroup;

    fn cfg() -> PipelineConfig {
        PipelineConfig {
            k: 1,
            m: 0.2,
            index: IndexParams::exact(),
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn pairwise_job_counts() {
        for (s, jobs) in [(2, 1), (5, 10)] {
            let data = planted_embeddings(&PlantedParams::spanning(s, 10, 0.2, 1)).unwrap();
            let (_, run) = run_pairwise(&data.tables, &cfg()).unwrap();
            assert_eq!(run.jobs, jobs);
            assert_eq!(run.distance_evals, jobs as u64 * 2 * 10 * 10);
        }
    }

    #[test]
    fn chain_of_two_equals_one_merge() {
        let data = planted_embeddings(&PlantedParams::spanning(2, 20, 0.3, 2)).unwrap();
        let (tuples, _) = run_chain(&data.tables, &cfg()).unwrap();
        let mut c = cfg();
        c.seed = rng::derive_seed(c.seed, 1);
        let merged = merge_two_tables(&data.tables[0], &data.tables[1], &c).unwrap();
        assert_eq!(tuples, to_tuples(&extract_candidate_tuples(&merged)));
    }

    #[test]
    fn chain_base_grows_without_matches() {
        // Orthogonal basis vectors never come within m of each other.
        let tables: Vec<WorkingTable> = (0..4u32)
            .map(|t| {
                let groups = (0..3u32)
                    .map(|r| EntityGroup::singleton(EntityRef::new(t, r), EmbeddingVector::basis(16, (t * 3 + r) as usize)))
                    .collect();
                WorkingTable::new(groups, 0)
            })
            .collect();
        let mut base = tables[0].clone();
        for (j, next) in tables.iter().enumerate().skip(1) {
            base = merge_two_tables(&base, next, &cfg()).unwrap();
            assert_eq!(base.len(), 3 * (j + 1));
        }
    }

    #[test]
    fn strategies_agree_on_planted_clusters() {
        let data = planted_embeddings(&PlantedParams::spanning(5, 30, 0.2, 4)).unwrap();
        let truth = data.truth.clone();
        for s in Strategy::ALL {
            let (tuples, _) = run_strategy(s, &data.tables, &cfg()).unwrap();
            assert_eq!(tuples, truth, "{s}");
        }
    }

    #[test]
    fn report_csv_header() {
        let mut buf = Vec::new();
        write_report_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "strategy,S,n,median_seconds,distance_evals,pairs_found\n"
        );
    }

    #[test]
    fn bench_config_checks() {
        let mut b = BenchConfig::default();
        b.validate().unwrap();
        b.repeats = 2;
        assert!(b.validate().is_err());
        b.repeats = 3;
        b.s_values = vec![8, 4];
        assert!(b.validate().is_err());
    }
}
