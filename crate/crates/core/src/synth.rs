//! Synthetic data with planted duplicate clusters.
//!
//! [`generate_synthetic`] writes text tables whose duplicates are perturbed
//! copies of a shared prototype. [`planted_embeddings`] skips the text stage
//! and plants well-separated clusters directly in embedding space.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ann::cosine_distance;
use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::evaluation::Tuple;
use crate::io::{write_csv_table, write_truth};
use crate::merging::WorkingTable;
use crate::model::{EntityGroup, EntityRef, RawTable};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub tables: usize,
    pub rows: usize,
    pub clusters: usize,
    /// Per-character probability of a swap or drop in each duplicate copy.
    pub noise: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub tables: Vec<RawTable>,
    pub truth: Vec<Tuple<EntityRef>>,
}

pub const SYNTH_SCHEMA: [&str; 3] = ["id", "name", "city"];

/// Places cluster members into distinct tables and fills the remaining rows
/// with `None` (unique entities). Returns, per table, the row contents.
fn layout(
    tables: usize,
    rows: usize,
    sizes: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<Option<usize>>>> {
    let mut capacity = vec![rows; tables];
    let mut slots: Vec<Vec<Option<usize>>> = vec![Vec::with_capacity(rows); tables];
    for (cluster, &size) in sizes.iter().enumerate() {
        let mut order: Vec<usize> = (0..tables).collect();
        order.shuffle(rng);
        order.sort_by_key(|&t| std::cmp::Reverse(capacity[t]));
        let chosen: Vec<usize> = order.into_iter().filter(|&t| capacity[t] > 0).take(size).collect();
        if chosen.len() < size {
            return Err(Error::InvalidParams(format!(
                "not enough free rows to place cluster {cluster} of size {size}"
            )));
        }
        for t in chosen {
            capacity[t] -= 1;
            slots[t].push(Some(cluster));
        }
    }
    for (t, s) in slots.iter_mut().enumerate() {
        s.extend(std::iter::repeat_n(None, capacity[t]));
        s.shuffle(rng);
    }
    Ok(slots)
}

fn truth_from_layout(slots: &[Vec<Option<usize>>], clusters: usize) -> Vec<Tuple<EntityRef>> {
    let mut truth: Vec<Tuple<EntityRef>> = vec![BTreeSet::new(); clusters];
    for (t, table) in slots.iter().enumerate() {
        for (r, slot) in table.iter().enumerate() {
            if let Some(c) = slot {
                truth[*c].insert(EntityRef::new(t as u32, r as u32));
            }
        }
    }
    truth.sort();
    truth
}

fn cluster_sizes(clusters: usize, lo: usize, hi: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..clusters).map(|_| rng.random_range(lo..=hi)).collect()
}

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvwz";
const VOWELS: &[u8] = b"aeiou";
const ID_CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";

fn word(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(4..=8);
    (0..len)
        .map(|i| {
            let pool = if i % 2 == 0 { CONSONANTS } else { VOWELS };
            pool[rng.random_range(0..pool.len())] as char
        })
        .collect()
}

fn phrase(rng: &mut ChaCha8Rng, words: usize) -> String {
    (0..words).map(|_| word(rng)).collect::<Vec<_>>().join(" ")
}

fn random_id(rng: &mut ChaCha8Rng) -> String {
    (0..10)
        .map(|_| ID_CHARS[rng.random_range(0..ID_CHARS.len())] as char)
        .collect()
}

/// Name and city of one real-world entity.
fn prototype(rng: &mut ChaCha8Rng) -> (String, String) {
    let words = rng.random_range(10..=12);
    (phrase(rng, words), phrase(rng, 4))
}

/// Swaps a character with its successor or drops it, each position with
/// probability `noise`.
fn perturb(text: &str, noise: f64, rng: &mut ChaCha8Rng) -> String {
    if noise <= 0.0 {
        return text.to_string();
    }
    let mut chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if rng.random_bool(noise.min(1.0)) {
            if rng.random_bool(0.5) && i + 1 < chars.len() {
                chars.swap(i, i + 1);
                i += 2;
            } else {
                chars.remove(i);
            }
        } else {
            i += 1;
        }
    }
    chars.into_iter().collect()
}

/// Builds S text tables of `rows` rows each with columns `id`, `name` and
/// `city`. Each cluster has between 2 and S members, each in a different
/// table; every other row is a unique entity. The `id` column is random per
/// row and carries no matching signal.
pub fn generate_synthetic(params: &SynthParams) -> Result<SyntheticData> {
    let SynthParams {
        tables,
        rows,
        clusters,
        noise,
        seed,
    } = *params;
    if tables < 2 || rows == 0 {
        return Err(Error::InvalidParams("need at least two non-empty tables".into()));
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::InvalidParams(format!("noise must lie in [0, 1], got {noise}")));
    }
    if clusters as f64 * (2 + tables) as f64 / 2.0 > (tables * rows) as f64 {
        return Err(Error::InvalidParams(format!(
            "{clusters} clusters do not fit into {tables} tables of {rows} rows"
        )));
    }
    let mut rng = rng::stream(seed, 0);
    let sizes = cluster_sizes(clusters, 2, tables, &mut rng);
    let slots = layout(tables, rows, &sizes, &mut rng)?;
    let prototypes: Vec<(String, String)> = (0..clusters).map(|_| prototype(&mut rng)).collect();

    let header: Vec<String> = SYNTH_SCHEMA.iter().map(|s| s.to_string()).collect();
    let raw = slots
        .iter()
        .map(|table| RawTable {
            header: header.clone(),
            rows: table
                .iter()
                .map(|slot| {
                    let (name, city) = match slot {
                        Some(c) => {
                            let (n, ci) = &prototypes[*c];
                            (perturb(n, noise, &mut rng), perturb(ci, noise, &mut rng))
                        }
                        None => prototype(&mut rng),
                    };
                    vec![random_id(&mut rng), name, city]
                })
                .collect(),
        })
        .collect();
    Ok(SyntheticData {
        tables: raw,
        truth: truth_from_layout(&slots, clusters),
    })
}

/// Writes `table_<i>.csv` files and `truth.jsonl` into `dir`.
pub fn write_synthetic(dir: &Path, data: &SyntheticData) -> Result<(Vec<PathBuf>, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for (i, table) in data.tables.iter().enumerate() {
        let path = dir.join(format!("table_{i}.csv"));
        write_csv_table(&path, table)?;
        paths.push(path);
    }
    let truth = dir.join("truth.jsonl");
    write_truth(&truth, &data.truth)?;
    Ok((paths, truth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedParams {
    pub tables: usize,
    pub per_table: usize,
    pub clusters: usize,
    pub min_cluster: usize,
    pub max_cluster: usize,
    pub dim: usize,
    /// Half-width of the uniform per-coordinate noise added to a cluster
    /// center before normalizing.
    pub spread: f32,
    /// Minimum cosine distance between any two cluster centers or unique
    /// entities.
    pub min_separation: f64,
    pub seed: u64,
}

impl PlantedParams {
    /// Every cluster spans all tables; `unique_fraction` of each table is
    /// unmatched.
    pub fn spanning(tables: usize, per_table: usize, unique_fraction: f64, seed: u64) -> Self {
        let clusters = ((1.0 - unique_fraction) * per_table as f64).round() as usize;
        Self {
            tables,
            per_table,
            clusters,
            min_cluster: tables,
            max_cluster: tables,
            dim: 64,
            spread: 0.02,
            min_separation: 0.6,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedData {
    pub tables: Vec<WorkingTable>,
    pub truth: Vec<Tuple<EntityRef>>,
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    let raw: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    EmbeddingVector::normalized(&raw).as_slice().to_vec()
}

/// Level-0 working tables whose embeddings form planted clusters.
pub fn planted_embeddings(params: &PlantedParams) -> Result<PlantedData> {
    let p = params;
    if p.tables < 1 || p.per_table == 0 || p.dim < 8 {
        return Err(Error::InvalidParams("planted data needs tables, rows and dim >= 8".into()));
    }
    if p.min_cluster < 2 || p.min_cluster > p.max_cluster || p.max_cluster > p.tables {
        return Err(Error::InvalidParams(format!(
            "cluster sizes [{}, {}] must lie within [2, {}]",
            p.min_cluster, p.max_cluster, p.tables
        )));
    }
    let mut rng = rng::stream(p.seed, 1);
    let sizes = cluster_sizes(p.clusters, p.min_cluster, p.max_cluster, &mut rng);
    let slots = layout(p.tables, p.per_table, &sizes, &mut rng)?;
    let uniques: usize = slots.iter().flatten().filter(|s| s.is_none()).count();

    // Centers for clusters first, then one per unique entity.
    let mut centers: Vec<Vec<f32>> = Vec::with_capacity(p.clusters + uniques);
    let mut attempts = 0usize;
    while centers.len() < p.clusters + uniques {
        attempts += 1;
        if attempts > 100 * (p.clusters + uniques) + 1000 {
            return Err(Error::InvalidParams(format!(
                "cannot place {} separated centers in dim {}",
                p.clusters + uniques,
                p.dim
            )));
        }
        let c = random_unit(&mut rng, p.dim);
        if centers.iter().all(|o| cosine_distance(&c, o) >= p.min_separation) {
            centers.push(c);
        }
    }

    let mut next_unique = p.clusters;
    let mut tables = Vec::with_capacity(p.tables);
    for (t, table) in slots.iter().enumerate() {
        let mut groups = Vec::with_capacity(table.len());
        for (r, slot) in table.iter().enumerate() {
            let center = match slot {
                Some(c) => &centers[*c],
                None => {
                    next_unique += 1;
                    &centers[next_unique - 1]
                }
            };
            let noisy: Vec<f32> = center
                .iter()
                .map(|x| x + rng.random_range(-p.spread..=p.spread))
                .collect();
            groups.push(EntityGroup::singleton(
                EntityRef::new(t as u32, r as u32),
                EmbeddingVector::normalized(&noisy),
            ));
        }
        tables.push(WorkingTable::new(groups, 0));
    }
    Ok(PlantedData {
        tables,
        truth: truth_from_layout(&slots, p.clusters),
    })
}
