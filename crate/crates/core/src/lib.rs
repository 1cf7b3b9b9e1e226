//! Unsupervised entity matching across many tables that share a schema.
//!
//! Records are serialized and embedded, tables are merged two at a time in a
//! hierarchy using mutual top-K nearest neighbours, and every resulting tuple
//! is pruned of density outliers.

pub mod ann;
pub mod attributes;
pub mod bench;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod merging;
pub mod model;
pub mod pipeline;
pub mod pruning;
pub mod rng;
pub mod synth;
pub mod union_find;

pub use error::{Error, Result};
pub use model::{Dataset, Entity, EntityGroup, EntityRef, PipelineConfig, RawTable};
