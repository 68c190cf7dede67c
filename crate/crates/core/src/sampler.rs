//! Isolated mini-batch sampling.
//!
//! Batches are built top-down from the seed nodes: the final layer's targets
//! are the (deduplicated) seeds, each target draws up to `fanout` distinct
//! neighbors uniformly without replacement from its partition-local list, and
//! the union of targets and drawn sources becomes the next layer down's
//! target set. A batch therefore never references a node outside its
//! partition, which is the structural guarantee behind gradient-only
//! communication.
//!
//! Every node records, the first time it appears as an aggregation target,
//! the triple (visible degree, global degree, realized sample size). Those
//! stats are all the correction estimators need.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::partition::Partition;

/// One message-passing layer of a batch, in forward order. `nodes` is the
/// layer's input universe (local ids); its first `num_targets` entries are
/// the aggregation targets, in order, and equal the next layer's `nodes`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerBlock {
    pub nodes: Vec<u32>,
    pub num_targets: usize,
    /// `src_index[src_offsets[i]..src_offsets[i+1]]` are target i's sampled
    /// sources, as positions into `nodes`.
    pub src_offsets: Vec<usize>,
    pub src_index: Vec<u32>,
    /// Visible (in-partition) degree of each `nodes` entry.
    pub d_local: Vec<u32>,
}

impl LayerBlock {
    pub fn sources_of(&self, target: usize) -> &[u32] {
        &self.src_index[self.src_offsets[target]..self.src_offsets[target + 1]]
    }

    /// Sampled in-batch degree used by degree-based normalization: the
    /// realized source-list length for targets, and the visible degree for
    /// source-only nodes (whose lists were never drawn).
    pub fn sampled_degree(&self, position: usize) -> u32 {
        if position < self.num_targets {
            (self.src_offsets[position + 1] - self.src_offsets[position]) as u32
        } else {
            self.d_local[position]
        }
    }
}

/// Coverage bookkeeping for one aggregation target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TargetStat {
    /// Local node id.
    pub node: u32,
    pub is_seed: bool,
    pub d_local: u32,
    pub d_global: u32,
    /// Source-list length realized when the node was first targeted.
    pub num_sampled: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatch {
    /// Seeds as given (duplicates allowed; the loss is a mean over this list).
    pub seeds: Vec<u32>,
    /// Position of each seed in the final layer's target list.
    pub seed_positions: Vec<u32>,
    pub seed_labels: Vec<u32>,
    /// Forward order: `layers[0]` consumes raw features.
    pub layers: Vec<LayerBlock>,
    /// Global ids of `layers[0].nodes`, for feature gathering.
    pub layer0_globals: Vec<NodeId>,
    /// One entry per distinct target node across all layers.
    pub stats: Vec<TargetStat>,
    /// RNG draws consumed while sampling (debug metadata).
    pub rng_draws: u64,
}

impl MiniBatch {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn num_outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.num_targets)
    }

    /// Text dump with sorted node lists per layer; stable fixture format.
    pub fn debug_dump(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(out, "seeds {:?}", self.seeds).unwrap();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut targets: Vec<u32> = layer.nodes[..layer.num_targets].to_vec();
            targets.sort_unstable();
            let mut sources: Vec<u32> =
                layer.src_index.iter().map(|&p| layer.nodes[p as usize]).collect();
            sources.sort_unstable();
            sources.dedup();
            writeln!(out, "layer {i}: targets {targets:?} sources {sources:?}").unwrap();
        }
        let mut stats = self.stats.clone();
        stats.sort_unstable_by_key(|s| s.node);
        for s in stats {
            writeln!(
                out,
                "stat node {} seed {} d_local {} d_global {} sampled {}",
                s.node, s.is_seed, s.d_local, s.d_global, s.num_sampled
            )
            .unwrap();
        }
        out
    }
}

/// Draws `min(fanout, len)` distinct elements uniformly. Equal counts take
/// the list as-is so full-neighborhood batches consume no randomness.
fn sample_distinct(list: &[u32], fanout: usize, rng: &mut ChaCha8Rng, draws: &mut u64) -> Vec<u32> {
    if fanout >= list.len() {
        return list.to_vec();
    }
    let mut pool = list.to_vec();
    for i in 0..fanout {
        let j = rng.random_range(i..pool.len());
        *draws += 1;
        pool.swap(i, j);
    }
    pool.truncate(fanout);
    pool
}

/// Samples a layered batch from `partition`. `seeds` are core train-node
/// local ids; `fanouts[l]` caps layer `l`'s per-target sample. `labels` is
/// indexed by global node id.
pub fn sample_batch(
    partition: &Partition,
    labels: &[u32],
    seeds: &[u32],
    fanouts: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<MiniBatch> {
    if fanouts.is_empty() || fanouts.iter().any(|&f| f == 0) {
        return Err(Error::InvalidParameter("fanouts must be non-empty and positive".into()));
    }
    build_batch(partition, labels, seeds, fanouts.len(), Some((fanouts, rng)))
}

/// Deterministic batch over all core train nodes with full visible
/// neighborhoods; the no-sampling special case of [`sample_batch`].
pub fn full_partition_batch(
    partition: &Partition,
    labels: &[u32],
    depth: usize,
) -> Result<MiniBatch> {
    if depth == 0 {
        return Err(Error::InvalidParameter("depth must be positive".into()));
    }
    let seeds: Vec<u32> = partition.train_locals().to_vec();
    build_batch(partition, labels, &seeds, depth, None)
}

fn build_batch(
    partition: &Partition,
    labels: &[u32],
    seeds: &[u32],
    depth: usize,
    mut sampling: Option<(&[usize], &mut ChaCha8Rng)>,
) -> Result<MiniBatch> {
    if seeds.is_empty() {
        return Err(Error::InvalidParameter("empty seed set".into()));
    }
    for &s in seeds {
        if (s as usize) >= partition.num_local() || !partition.is_core(s) {
            return Err(Error::InvalidParameter(format!("seed {s} is not a core node")));
        }
        if partition.train_locals().binary_search(&s).is_err() {
            return Err(Error::InvalidParameter(format!("seed {s} is not a train node")));
        }
    }

    // Deduplicate seeds in first-occurrence order; they are the final layer's
    // targets.
    let mut frontier: Vec<u32> = Vec::new();
    let mut pos_of_seed: HashMap<u32, u32> = HashMap::new();
    for &s in seeds {
        pos_of_seed.entry(s).or_insert_with(|| {
            frontier.push(s);
            frontier.len() as u32 - 1
        });
    }
    let seed_positions: Vec<u32> = seeds.iter().map(|s| pos_of_seed[s]).collect();

    let mut draws = 0u64;
    let mut stats: Vec<TargetStat> = Vec::new();
    let mut stat_seen: HashMap<u32, ()> = HashMap::new();
    let mut layers_rev: Vec<LayerBlock> = Vec::with_capacity(depth);

    for level in (0..depth).rev() {
        let targets = frontier;
        let mut nodes = targets.clone();
        let mut pos_of: HashMap<u32, u32> =
            nodes.iter().enumerate().map(|(i, &v)| (v, i as u32)).collect();
        let mut src_offsets = Vec::with_capacity(targets.len() + 1);
        src_offsets.push(0usize);
        let mut src_index: Vec<u32> = Vec::new();

        for &t in &targets {
            let list = partition.local_neighbors(t);
            let sampled = match sampling.as_mut() {
                Some((fanouts, rng)) => sample_distinct(list, fanouts[level], rng, &mut draws),
                None => list.to_vec(),
            };
            for s in &sampled {
                let pos = *pos_of.entry(*s).or_insert_with(|| {
                    nodes.push(*s);
                    nodes.len() as u32 - 1
                });
                src_index.push(pos);
            }
            src_offsets.push(src_index.len());
            if stat_seen.insert(t, ()).is_none() {
                stats.push(TargetStat {
                    node: t,
                    is_seed: pos_of_seed.contains_key(&t),
                    d_local: partition.d_local(t),
                    d_global: partition.d_global(t),
                    num_sampled: sampled.len() as u32,
                });
            }
        }

        let d_local = nodes.iter().map(|&v| partition.d_local(v)).collect();
        layers_rev.push(LayerBlock {
            num_targets: targets.len(),
            src_offsets,
            src_index,
            d_local,
            nodes: nodes.clone(),
        });
        frontier = nodes;
    }

    layers_rev.reverse();
    let layer0_globals: Vec<NodeId> =
        layers_rev[0].nodes.iter().map(|&l| partition.global_of(l)).collect();
    let seed_labels = seeds
        .iter()
        .map(|&s| {
            let g = partition.global_of(s) as usize;
            labels.get(g).copied().ok_or_else(|| {
                Error::DimensionMismatch(format!("no label for global node {g}"))
            })
        })
        .collect::<Result<Vec<u32>>>()?;

    Ok(MiniBatch {
        seeds: seeds.to_vec(),
        seed_positions,
        seed_labels,
        layers: layers_rev,
        layer0_globals,
        stats,
        rng_draws: draws,
    })
}

/// Batch over the full graph in which every layer targets every node with
/// full neighbor lists: the canonical unsampled forward pass, used for
/// evaluation and exact-gradient references. `seeds` select the loss nodes.
pub fn full_graph_batch(graph: &Graph, depth: usize, seeds: &[NodeId]) -> Result<MiniBatch> {
    if depth == 0 {
        return Err(Error::InvalidParameter("depth must be positive".into()));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidParameter("empty seed set".into()));
    }
    let n = graph.num_nodes();
    for &s in seeds {
        if s as usize >= n {
            return Err(Error::OutOfRange { index: s as usize, limit: n });
        }
    }
    let nodes: Vec<u32> = (0..n as u32).collect();
    let mut src_offsets = Vec::with_capacity(n + 1);
    src_offsets.push(0usize);
    let mut src_index = Vec::new();
    for v in 0..n as NodeId {
        src_index.extend_from_slice(graph.neighbors(v));
        src_offsets.push(src_index.len());
    }
    let d_local: Vec<u32> = (0..n as NodeId).map(|v| graph.degree(v).unwrap()).collect();
    let layer = LayerBlock {
        nodes: nodes.clone(),
        num_targets: n,
        src_offsets,
        src_index,
        d_local: d_local.clone(),
    };
    let layers = vec![layer; depth];
    let seed_set: HashMap<u32, ()> = seeds.iter().map(|&s| (s, ())).collect();
    let stats = (0..n as u32)
        .map(|v| TargetStat {
            node: v,
            is_seed: seed_set.contains_key(&v),
            d_local: d_local[v as usize],
            d_global: d_local[v as usize],
            num_sampled: d_local[v as usize],
        })
        .collect();
    let labels: Vec<u32> = match graph.labels() {
        Some(l) => seeds.iter().map(|&s| l[s as usize]).collect(),
        None => vec![0; seeds.len()],
    };
    Ok(MiniBatch {
        seeds: seeds.to_vec(),
        seed_positions: seeds.to_vec(),
        seed_labels: labels,
        layers,
        layer0_globals: nodes,
        stats,
        rng_draws: 0,
    })
}

/// Shuffled train-node batches for one epoch.
pub fn epoch_iterator(
    partition: &Partition,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<u32>>> {
    if batch_size == 0 {
        return Err(Error::InvalidParameter("batch_size must be positive".into()));
    }
    let mut ids: Vec<u32> = partition.train_locals().to_vec();
    if ids.is_empty() {
        return Err(Error::InvalidParameter("partition has no train nodes".into()));
    }
    use rand::seq::SliceRandom;
    ids.shuffle(rng);
    Ok(ids.chunks(batch_size).map(|c| c.to_vec()).collect())
}
