//! One-off calibration sweep for the synthetic text benchmark.
//!
//! Generates the 4-table synthetic dataset, scores every attribute, and runs
//! the full matcher over a grid of merge thresholds, printing tuple-F1 for
//! each. The frozen thresholds used by the test suite come from this output
//! (see `calibration/text_pipeline.txt`).
//!
//! Run with `cargo run --release -p tablematch-core --example calibrate`.

use tablematch_core::attributes::select_attributes;
use tablematch_core::evaluation::{score, TruthSet};
use tablematch_core::model::validate_dataset;
use tablematch_core::pipeline::match_dataset;
use tablematch_core::synth::{generate_synthetic, SynthParams};
use tablematch_core::PipelineConfig;

fn main() -> tablematch_core::Result<()> {
    let params = SynthParams {
        tables: 4,
        rows: 100,
        clusters: 50,
        noise: 0.05,
        seed: 7,
    };
    let data = generate_synthetic(&params)?;
    let truth = TruthSet::new(data.truth.clone())?;
    let dataset = validate_dataset(data.tables.clone())?;
    let base = PipelineConfig::default();
    println!("embedder: {:?}", base.embedder);

    println!("\nattribute significance (mean post-shuffle cosine similarity), r = 1.0");
    for seed in 0..5u64 {
        let rep = select_attributes(&dataset, &base.embedder, 1.0, base.gamma, seed)?;
        let row: Vec<String> = rep
            .attributes
            .iter()
            .map(|a| format!("{}={:.4}{}", a.name, a.significance, if a.selected { "*" } else { "" }))
            .collect();
        println!("  seed {seed}: {}", row.join("  "));
    }

    println!("\nmerge threshold sweep (k = 1, gamma = 0.9, epsilon = 1.0, min_pts = 2)");
    println!("  {:>5} {:>9} {:>9} {:>8} {:>8}", "m", "tuple_f1", "pair_f1", "pred", "truth");
    for m in [0.05, 0.1, 0.2, 0.3, 0.35, 0.4, 0.5, 0.6, 0.7] {
        let cfg = PipelineConfig { m, ..base.clone() };
        let out = match_dataset(&dataset, &cfg)?;
        let rep = score(&out.tuples, &truth);
        println!(
            "  {m:>5.2} {:>9.4} {:>9.4} {:>8} {:>8}",
            rep.f1,
            rep.pair_f1,
            rep.predicted_tuples,
            rep.truth_tuples
        );
    }

    println!("\nfrozen setting m = 0.5, gamma = 0.9 across generator seeds");
    for seed in 0..10u64 {
        let data = generate_synthetic(&SynthParams { seed, ..params.clone() })?;
        let truth = TruthSet::new(data.truth.clone())?;
        let dataset = validate_dataset(data.tables)?;
        let cfg = PipelineConfig { m: 0.5, ..base.clone() };
        let out = match_dataset(&dataset, &cfg)?;
        let rep = score(&out.tuples, &truth);
        println!(
            "  data seed {seed}: tuple_f1 {:.4} pair_f1 {:.4} selected {:?}",
            rep.f1,
            rep.pair_f1,
            out.attributes.selected()
        );
    }

    println!("\ndistance spread under the selected attributes");
    let rep = select_attributes(&dataset, &base.embedder, base.r, base.gamma, base.seed)?;
    let selected = rep.selected();
    let tables = tablematch_core::merging::init_working_tables(&dataset, &selected, &base.embedder)?;
    let store = tablematch_core::merging::embedding_store(&tables);
    let mut max_dup: f64 = 0.0;
    for t in &data.truth {
        let v: Vec<_> = t.iter().map(|r| store.get(*r).unwrap()).collect();
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                max_dup = max_dup.max(1.0 - v[i].dot(v[j]));
            }
        }
    }
    let refs = dataset.entity_refs();
    let mut min_non: f64 = 2.0;
    let cluster_of = |r| data.truth.iter().position(|t| t.contains(&r));
    for (i, a) in refs.iter().enumerate() {
        for b in &refs[i + 1..] {
            if a.source_id == b.source_id {
                continue;
            }
            let same = cluster_of(*a).is_some() && cluster_of(*a) == cluster_of(*b);
            if !same {
                min_non = min_non.min(1.0 - store.get(*a).unwrap().dot(store.get(*b).unwrap()));
            }
        }
    }
    println!("  selected = {selected:?}");
    println!("  max cosine distance within a duplicate cluster: {max_dup:.4}");
    println!("  min cosine distance across non-duplicates:      {min_non:.4}");
    Ok(())
}
