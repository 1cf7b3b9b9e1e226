//! End-to-end matching run: load, select attributes, embed, merge, prune,
//! score, and write results plus a run manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::attributes::{select_attributes, AttributeReport};
use crate::error::{Error, Result};
use crate::evaluation::{score, ScoreReport, Tuple};
use crate::io::{encode_tuples, load_dataset, read_truth, write_json};
use crate::merging::{
    embedding_store, extract_candidate_tuples, hierarchical_merge_traced, init_working_tables, MergeTrace,
};
use crate::model::{Dataset, EntityRef, PipelineConfig};
use crate::pruning::prune_tuples;

/// A matching run as read from a config file: inputs, output directory and
/// hyperparameters side by side at the top level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub tables: Vec<PathBuf>,
    pub truth: Option<PathBuf>,
    pub out_dir: PathBuf,
    #[serde(flatten)]
    pub params: PipelineConfig,
}

impl RunConfig {
    pub fn new(tables: Vec<PathBuf>, out_dir: PathBuf, params: PipelineConfig) -> Self {
        Self {
            tables,
            truth: None,
            out_dir,
            params,
        }
    }

    /// Parses TOML. Relative paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        let resolve = |p: PathBuf| if p.is_relative() { base.join(p) } else { p };
        let tables: Vec<PathBuf> = match table.remove("tables") {
            Some(v) => v
                .try_into()
                .map_err(|e: toml::de::Error| Error::InvalidConfig(format!("tables: {e}")))?,
            None => return Err(Error::InvalidConfig("missing `tables`".into())),
        };
        let truth: Option<PathBuf> = table
            .remove("truth")
            .map(|v| v.try_into())
            .transpose()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(format!("truth: {e}")))?;
        let out_dir: PathBuf = table
            .remove("out_dir")
            .map(|v| v.try_into())
            .transpose()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(format!("out_dir: {e}")))?
            .unwrap_or_else(|| PathBuf::from("out"));
        let params: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        Ok(Self {
            tables: tables.into_iter().map(resolve).collect(),
            truth: truth.map(resolve),
            out_dir: resolve(out_dir),
            params,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Default)]
struct Stopwatch {
    stages: Vec<StageTime>,
}

impl Stopwatch {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f();
        self.stages.push(StageTime {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        log::info!("stage {stage} took {:.3}s", start.elapsed().as_secs_f64());
        out
    }
}

/// In-memory result of matching one dataset.
#[derive(Debug, Clone)]
pub struct MatchOutcome {
    pub attributes: AttributeReport,
    pub candidates: Vec<Tuple<EntityRef>>,
    pub tuples: Vec<Tuple<EntityRef>>,
    pub trace: MergeTrace,
    pub stages: Vec<StageTime>,
}

fn worker_pool(parallelism: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))
}

/// Runs representation, merging and pruning on a dataset with
/// `cfg.parallelism` workers.
pub fn match_dataset(dataset: &Dataset, cfg: &PipelineConfig) -> Result<MatchOutcome> {
    cfg.validate()?;
    let pool = worker_pool(cfg.parallelism)?;
    pool.install(|| {
        let mut watch = Stopwatch::default();
        let mut outcome = match_stages(dataset, cfg, &mut watch)?;
        outcome.stages = watch.stages;
        Ok(outcome)
    })
}

fn match_stages(dataset: &Dataset, cfg: &PipelineConfig, watch: &mut Stopwatch) -> Result<MatchOutcome> {
    let attributes = watch.time("select_attributes", || {
        select_attributes(dataset, &cfg.embedder, cfg.r, cfg.gamma, cfg.seed)
    })?;
    let selected = attributes.selected();
    let tables = watch.time("embed", || init_working_tables(dataset, &selected, &cfg.embedder))?;
    let store = embedding_store(&tables);
    let (merged, trace) = watch.time("merge", || hierarchical_merge_traced(tables, cfg))?;
    let candidates = watch.time("extract", || Ok(extract_candidate_tuples(&merged)))?;
    let pruned = watch.time("prune", || prune_tuples(&candidates, &store, cfg.epsilon, cfg.min_pts))?;
    let as_tuples = |groups: &[crate::model::EntityGroup]| -> Vec<Tuple<EntityRef>> {
        let mut out: Vec<Tuple<EntityRef>> = groups.iter().map(|g| g.members().iter().copied().collect()).collect();
        out.sort();
        out
    };
    Ok(MatchOutcome {
        attributes,
        candidates: as_tuples(&candidates),
        tuples: as_tuples(&pruned),
        trace,
        stages: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputPaths {
    pub tuples: PathBuf,
    pub manifest: PathBuf,
    pub merge_trace: PathBuf,
    pub score: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub stages: Vec<StageTime>,
    pub total_seconds: f64,
    pub schema: Vec<String>,
    pub table_sizes: Vec<usize>,
    pub attributes: AttributeReport,
    pub merge_levels: usize,
    pub candidate_tuples: usize,
    pub pruned_tuples: usize,
    pub score: Option<ScoreReport>,
    pub outputs: OutputPaths,
}

/// Executes a full run and writes `tuples.jsonl`, `merge_trace.jsonl`,
/// `score.json` (when truth is given) and `manifest.json` into `out_dir`.
pub fn run_pipeline(run: &RunConfig) -> Result<RunManifest> {
    let started = Instant::now();
    run.params.validate()?;
    let pool = worker_pool(run.params.parallelism)?;
    let mut watch = Stopwatch::default();

    let dataset = watch.time("load", || load_dataset(&run.tables))?;
    let truth = match &run.truth {
        Some(path) => Some(watch.time("load_truth", || read_truth(path))?),
        None => None,
    };
    let outcome = pool.install(|| match_stages(&dataset, &run.params, &mut watch))?;
    let report = match &truth {
        Some(t) => Some(watch.time("score", || Ok(score(&outcome.tuples, t)))?),
        None => None,
    };

    let outputs = OutputPaths {
        tuples: run.out_dir.join("tuples.jsonl"),
        manifest: run.out_dir.join("manifest.json"),
        merge_trace: run.out_dir.join("merge_trace.jsonl"),
        score: report.as_ref().map(|_| run.out_dir.join("score.json")),
    };
    watch.time("write", || {
        std::fs::create_dir_all(&run.out_dir).map_err(|e| Error::io(&run.out_dir, e))?;
        std::fs::write(&outputs.tuples, encode_tuples(&outcome.tuples))
            .map_err(|e| Error::io(&outputs.tuples, e))?;
        let mut trace = Vec::new();
        outcome
            .trace
            .write_jsonl(&mut trace)
            .map_err(|e| Error::io(&outputs.merge_trace, e))?;
        std::fs::write(&outputs.merge_trace, trace).map_err(|e| Error::io(&outputs.merge_trace, e))?;
        if let (Some(path), Some(rep)) = (&outputs.score, &report) {
            write_json(path, rep)?;
        }
        Ok(())
    })?;

    let stages = watch.stages;
    let manifest = RunManifest {
        config: run.clone(),
        stages,
        total_seconds: started.elapsed().as_secs_f64(),
        schema: dataset.schema().to_vec(),
        table_sizes: dataset.tables().iter().map(Vec::len).collect(),
        attributes: outcome.attributes,
        merge_levels: outcome.trace.records.iter().map(|r| r.level + 1).max().unwrap_or(0),
        candidate_tuples: outcome.candidates.len(),
        pruned_tuples: outcome.tuples.len(),
        score: report,
        outputs,
    };
    write_json(&manifest.outputs.manifest, &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbedderKind;

    #[test]
    fn parses_flat_config() {
        let text = r#"
            tables = ["a.csv", "/abs/b.csv"]
            truth = "truth.jsonl"
            out_dir = "out"
            k = 2
            m = 0.3
            seed = 9
            [embedder]
            kind = "hashing"
            dim = 256
            ngram_range = [2, 3]
            [index]
            backend = "exact"
        "#;
        let cfg = RunConfig::from_toml(text, Path::new("/base")).unwrap();
        assert_eq!(cfg.tables, vec![PathBuf::from("/base/a.csv"), PathBuf::from("/abs/b.csv")]);
        assert_eq!(cfg.truth, Some(PathBuf::from("/base/truth.jsonl")));
        assert_eq!(cfg.params.k, 2);
        assert_eq!(cfg.params.seed, 9);
        assert_eq!(cfg.params.min_pts, 2);
        assert_eq!(cfg.params.embedder.kind, EmbedderKind::Hashing);
        assert_eq!(cfg.params.embedder.ngram_range, (2, 3));
        assert_eq!(cfg.params.index.backend, crate::ann::Backend::Exact);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "tables = [\"a.csv\"]\nkk = 3\n";
        assert!(RunConfig::from_toml(text, Path::new(".")).is_err());
        assert!(RunConfig::from_toml("k = 1", Path::new(".")).is_err());
    }
}
