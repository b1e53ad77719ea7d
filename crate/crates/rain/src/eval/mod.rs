//! Single-shot cross-resolution retrieval evaluation.
//!
//! Queries are low-resolution images, the gallery holds exactly one
//! high-resolution image per identity. A query counts as matched at rank
//! `k` when its identity appears among the `k` nearest gallery entries.
//! Ties are broken by gallery index so rankings are reproducible across
//! platforms.

mod metrics;
mod probe;
mod report;
mod runner;

pub use metrics::{
    average_precision, cmc, distance_matrix, map_score, rank_list, ranked_gallery,
};
pub use probe::{invariance_probe_on_embeddings, linear_probe_accuracy, InvarianceProbe};
pub use report::EvalReport;
pub use runner::{
    embed_set, evaluate, export_embeddings_csv, invariance_probe, read_embeddings_csv,
    records_to_batch, unseen_resolution_eval, EvalOptions,
};
