//! Stratified experience retrieval over the strategy-embedding space.
//!
//! The archive is partitioned by k-means over strategy embeddings; inspirations
//! for a mutation are picked by complementarity (normalized Hamming distance
//! between behavior vectors, or fitness when only a scalar score exists) from
//! the parent's own cluster and from a randomly drawn other cluster.

mod kmeans;
mod select;

use std::io::Write;

pub use kmeans::{cluster, ClusterError, ClusterState, MAX_LLOYD_ITERATIONS};
pub use select::{
    behavioral_score, score, select_inspirations, InspirationSet, Pick, Role, ScoreError,
    SelectError, SelectionMode,
};

use crate::archive::{Archive, EntryId};

/// Id and embedding of every live entry, in id order.
pub fn archive_embeddings(archive: &Archive) -> Vec<(EntryId, Vec<f64>)> {
    archive.entries().iter().map(|e| (e.id, e.strategy_embedding.clone())).collect()
}

/// Whether clustered retrieval is active: past warm-up and with at least C+1 entries.
pub fn clustering_active(generation: u64, warmup: u64, archive_len: usize, clusters: usize) -> bool {
    generation >= warmup && archive_len > clusters
}

/// Writes `id, generation, fitness, cluster, e_0..e_{d-1}` rows for every live entry.
pub fn export_embeddings<W: Write>(
    archive: &Archive,
    clusters: &ClusterState,
    out: W,
) -> Result<(), csv::Error> {
    let dim = archive.entries().first().map_or(0, |e| e.strategy_embedding.len());
    let mut writer = csv::Writer::from_writer(out);
    let mut header: Vec<String> =
        ["id", "generation", "fitness", "cluster"].iter().map(|s| s.to_string()).collect();
    header.extend((0..dim).map(|i| format!("e_{i}")));
    writer.write_record(&header)?;
    for e in archive.entries() {
        let cluster = clusters.cluster_of(e.id).map(|c| c.to_string()).unwrap_or_default();
        let mut row = vec![e.id.to_string(), e.generation.to_string(), e.fitness.to_string(), cluster];
        row.extend(e.strategy_embedding.iter().map(|x| x.to_string()));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
