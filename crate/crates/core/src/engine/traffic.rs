//! Byte accounting: the per-iteration ledger kept during training, and the
//! estimator for what a conventional (non-isolated) system would move.

use std::collections::HashSet;

use rand::seq::SliceRandom;

use crate::error::Result;
use crate::graph::Graph;
use crate::partition::{ChunkAssignment, Partition};
use crate::rng::stream;
use crate::sampler::sample_batch;

/// Bytes moved by one optimizer step. In isolated training the remote
/// columns stay zero; they exist so the invariant is checked, not assumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IterationTraffic {
    pub epoch: u32,
    pub gradient_bytes: u64,
    pub remote_feature_bytes: u64,
    pub remote_activation_bytes: u64,
}

/// Append-only log of per-iteration traffic for a whole run.
#[derive(Debug, Clone, Default)]
pub struct TrafficLedger {
    pub iterations: Vec<IterationTraffic>,
}

impl TrafficLedger {
    pub fn record_iteration(&mut self, entry: IterationTraffic) {
        self.iterations.push(entry);
    }

    /// Sums the counters of one epoch's iterations.
    pub fn epoch_rollup(&self, epoch: u32) -> IterationTraffic {
        let mut total = IterationTraffic { epoch, ..IterationTraffic::default() };
        for it in self.iterations.iter().filter(|it| it.epoch == epoch) {
            total.gradient_bytes += it.gradient_bytes;
            total.remote_feature_bytes += it.remote_feature_bytes;
            total.remote_activation_bytes += it.remote_activation_bytes;
        }
        total
    }

    pub fn total_gradient_bytes(&self) -> u64 {
        self.iterations.iter().map(|it| it.gradient_bytes).sum()
    }
}

/// Estimates the remote bytes a conventional sampling-based system moves in
/// one epoch when the chunk layout is used directly as the partition layout.
///
/// Each partition batches its own seed nodes but samples neighborhoods over
/// the full graph, so any sampled source owned elsewhere is a fetch: raw
/// features (4-byte scalars, `feature_dim` wide) for the deepest layer,
/// activations (`hidden_dim` wide) for the rest. Distinct sources are
/// counted once per batch and layer. Returns bytes per partition.
pub fn conventional_traffic_estimate(
    graph: &Graph,
    chunks: &ChunkAssignment,
    fanouts: &[usize],
    batch_size: usize,
    feature_dim: usize,
    hidden_dim: usize,
    seed: u64,
) -> Result<Vec<u64>> {
    if fanouts.is_empty() || batch_size == 0 {
        return Err(crate::error::Error::InvalidParameter(
            "traffic estimate needs fanouts and a positive batch size".into(),
        ));
    }
    let whole = Partition::whole_graph(graph);
    let fallback_labels;
    let labels: &[u32] = match graph.labels() {
        Some(l) => l,
        None => {
            fallback_labels = vec![0u32; graph.num_nodes()];
            &fallback_labels
        }
    };
    // Config lists fanouts seed-side first; layers index from the far end.
    let mut by_layer = fanouts.to_vec();
    by_layer.reverse();

    let feature_row = feature_dim as u64 * 4;
    let activation_row = hidden_dim as u64 * 4;
    let mut bytes = vec![0u64; chunks.num_chunks()];

    for p in 0..chunks.num_chunks() as u32 {
        // Whole-graph locals coincide with global ids, so chunk ownership
        // filters the seed list directly.
        let mut seeds: Vec<u32> =
            whole.train_locals().iter().copied().filter(|&v| chunks.owner(v) == p).collect();
        if seeds.is_empty() {
            continue;
        }
        let mut shuffle = stream(seed, "traffic-shuffle", &[p as u64]);
        seeds.shuffle(&mut shuffle);

        for (i, batch_seeds) in seeds.chunks(batch_size).enumerate() {
            let mut rng = stream(seed, "traffic-sample", &[p as u64, i as u64]);
            let batch = sample_batch(&whole, labels, batch_seeds, &by_layer, &mut rng)?;
            for (level, layer) in batch.layers.iter().enumerate() {
                let sources: HashSet<u32> =
                    layer.src_index.iter().map(|&pos| layer.nodes[pos as usize]).collect();
                let remote = sources.iter().filter(|&&v| chunks.owner(v) != p).count() as u64;
                bytes[p as usize] +=
                    remote * if level == 0 { feature_row } else { activation_row };
            }
        }
    }
    Ok(bytes)
}
