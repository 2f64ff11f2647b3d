//! Dataset generation, ingestion and file formats.

pub mod ingest;
pub mod io;
pub mod synthetic;

pub use ingest::{ingest_interactions, IngestConfig, Interaction, InteractionLog};
pub use io::{read_dataset, read_policy, read_samples, write_dataset, write_policy, write_samples};
pub use synthetic::{gen_synthetic, ground_truth, sample_pl_ranking, SyntheticConfig};

/// Train/valid/test sizes for an 8:1:1 split of `n` items (each within ±1 of
/// the exact ratio).
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = ((n as f64) * 0.8).round() as usize;
    let valid = (((n as f64) * 0.1).round() as usize).min(n - train);
    (train, valid, n - train - valid)
}
