//! In-memory graph: CSR adjacency plus per-node features, labels, and split
//! assignment. Adjacency is undirected, deduplicated, self-loop free, and
//! sorted per node. Features are stored as 32-bit floats (the on-disk format)
//! and widened to 64-bit by consumers that do training math.

mod generate;
mod io;

pub use generate::{generate_rmat, generate_sbm, RmatParams, SbmParams};
pub use io::{EDGES_FILE, FEATURES_FILE, LABELS_FILE};

use crate::error::{Error, Result};
use crate::rng::mix64;

pub type NodeId = u32;

/// Train / validation / test membership of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<NodeId>,
    features: Vec<f32>,
    feature_dim: usize,
    labels: Option<Vec<u32>>,
    split: Option<Vec<Split>>,
}

impl Graph {
    /// Builds a graph from a directed edge list. Edges are symmetrized,
    /// deduplicated, and self-loops dropped. `features` is row-major with
    /// `feature_dim` columns and one row per node; the row count defines the
    /// node count. Labels, when present, must cover every node; a split is
    /// then assigned per node by deterministic hash (60/20/20).
    pub fn from_edges(
        edges: &[(NodeId, NodeId)],
        features: Vec<f32>,
        feature_dim: usize,
        labels: Option<Vec<u32>>,
    ) -> Result<Graph> {
        if feature_dim == 0 {
            return Err(Error::InvalidParameter("feature_dim must be positive".into()));
        }
        if features.len() % feature_dim != 0 {
            return Err(Error::DimensionMismatch(format!(
                "feature buffer length {} is not a multiple of feature_dim {}",
                features.len(),
                feature_dim
            )));
        }
        let num_nodes = features.len() / feature_dim;
        if let Some(ref l) = labels {
            if l.len() != num_nodes {
                return Err(Error::DimensionMismatch(format!(
                    "{} labels for {} nodes",
                    l.len(),
                    num_nodes
                )));
            }
        }
        let mut pairs = Vec::with_capacity(edges.len() * 2);
        for &(u, v) in edges {
            if u as usize >= num_nodes || v as usize >= num_nodes {
                return Err(Error::MalformedInput(format!(
                    "edge ({u}, {v}) references a node outside 0..{num_nodes}"
                )));
            }
            if u == v {
                continue;
            }
            pairs.push((u, v));
            pairs.push((v, u));
        }
        pairs.sort_unstable();
        pairs.dedup();

        let mut offsets = vec![0usize; num_nodes + 1];
        for &(u, _) in &pairs {
            offsets[u as usize + 1] += 1;
        }
        for i in 0..num_nodes {
            offsets[i + 1] += offsets[i];
        }
        let neighbors = pairs.iter().map(|&(_, v)| v).collect();

        let split = labels.as_ref().map(|_| assign_splits(num_nodes));
        Ok(Graph { offsets, neighbors, features, feature_dim, labels, split })
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn degree(&self, v: NodeId) -> Result<u32> {
        let v = v as usize;
        if v >= self.num_nodes() {
            return Err(Error::OutOfRange { index: v, limit: self.num_nodes() });
        }
        Ok((self.offsets[v + 1] - self.offsets[v]) as u32)
    }

    /// Sorted neighbor slice of `v`. Panics on out-of-range ids; use
    /// [`Graph::degree`] for checked access.
    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.neighbors[self.offsets[v as usize]..self.offsets[v as usize + 1]]
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Feature row of `v` as stored (32-bit).
    pub fn feature_row(&self, v: NodeId) -> &[f32] {
        let d = self.feature_dim;
        &self.features[v as usize * d..(v as usize + 1) * d]
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn split(&self) -> Option<&[Split]> {
        self.split.as_deref()
    }

    /// Number of label classes (max label + 1); zero when unlabeled.
    pub fn num_classes(&self) -> usize {
        self.labels.as_ref().map_or(0, |l| l.iter().copied().max().map_or(0, |m| m as usize + 1))
    }

    /// Nodes of the given split, ascending.
    pub fn split_nodes(&self, which: Split) -> Vec<NodeId> {
        match &self.split {
            None => Vec::new(),
            Some(s) => (0..self.num_nodes() as NodeId)
                .filter(|&v| s[v as usize] == which)
                .collect(),
        }
    }
}

/// 60/20/20 split by hashed node id. Hashing (rather than an RNG stream)
/// keeps the split identical across runs and independent of sampling seeds.
fn assign_splits(num_nodes: usize) -> Vec<Split> {
    (0..num_nodes as u64)
        .map(|v| {
            let h = mix64(v ^ 0x5157_5f53_504c_4954);
            let frac = (h >> 11) as f64 / (1u64 << 53) as f64;
            if frac < 0.6 {
                Split::Train
            } else if frac < 0.8 {
                Split::Valid
            } else {
                Split::Test
            }
        })
        .collect()
}
