//! Synthetic graph generators: a stochastic block model with planted
//! community features, and a recursive-matrix (quadrant recursion) generator
//! used as a scalability stand-in. Both are deterministic per seed.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Debug, Clone)]
pub struct SbmParams {
    pub communities: usize,
    pub nodes_per_community: usize,
    /// Edge probability within a community.
    pub p_in: f64,
    /// Edge probability across communities; must be strictly below `p_in`.
    pub p_out: f64,
    pub feature_dim: usize,
    /// Scale of the one-hot community mean added to unit Gaussian noise.
    pub feature_signal: f64,
    pub seed: u64,
}

/// Community-labelled graph: each unordered node pair is an edge with
/// probability `p_in` (same community) or `p_out` (different). Features are
/// `one_hot(community) * feature_signal + N(0, 1)` per dimension, labels are
/// community ids, and the 60/20/20 split comes from the node-id hash.
pub fn generate_sbm(params: &SbmParams) -> Result<Graph> {
    if params.communities == 0 || params.nodes_per_community == 0 {
        return Err(Error::InvalidParameter("communities and nodes_per_community must be positive".into()));
    }
    if !(0.0..=1.0).contains(&params.p_in) || !(0.0..=1.0).contains(&params.p_out) {
        return Err(Error::InvalidParameter("edge probabilities must lie in [0, 1]".into()));
    }
    if params.p_out >= params.p_in {
        return Err(Error::InvalidParameter(format!(
            "p_out ({}) must be strictly below p_in ({})",
            params.p_out, params.p_in
        )));
    }
    if params.feature_dim == 0 || params.feature_signal <= 0.0 {
        return Err(Error::InvalidParameter("feature_dim and feature_signal must be positive".into()));
    }
    let n = params.communities * params.nodes_per_community;
    if n > (1usize << 22) {
        return Err(Error::CapacityExceeded(format!("{n} nodes exceeds the desk-scale limit")));
    }

    let community = |v: usize| v / params.nodes_per_community;
    let mut edge_rng = stream(params.seed, "sbm-edges", &[]);
    let mut edges: Vec<(NodeId, NodeId)> = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if community(u) == community(v) { params.p_in } else { params.p_out };
            if edge_rng.random::<f64>() < p {
                edges.push((u as NodeId, v as NodeId));
            }
        }
    }

    let mut feat_rng = stream(params.seed, "sbm-features", &[]);
    let mut features = Vec::with_capacity(n * params.feature_dim);
    for v in 0..n {
        let hot = community(v) % params.feature_dim;
        for d in 0..params.feature_dim {
            let noise: f64 = StandardNormal.sample(&mut feat_rng);
            let mean = if d == hot { params.feature_signal } else { 0.0 };
            features.push((mean + noise) as f32);
        }
    }

    let labels: Vec<u32> = (0..n).map(|v| community(v) as u32).collect();
    Graph::from_edges(&edges, features, params.feature_dim, Some(labels))
}

#[derive(Debug, Clone)]
pub struct RmatParams {
    /// log2 of the node count.
    pub scale: u32,
    /// Directed edge samples per node (`edge_factor << scale` total draws).
    pub edge_factor: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub feature_dim: usize,
    pub seed: u64,
}

/// Power-law-ish graph on `2^scale` nodes built by recursive quadrant
/// sampling, then symmetrized and deduplicated. Features are unit Gaussian;
/// no labels (the generator exists for traffic and capacity experiments).
pub fn generate_rmat(params: &RmatParams) -> Result<Graph> {
    if params.scale == 0 || params.scale > 22 {
        return Err(Error::CapacityExceeded(format!("scale {} outside 1..=22", params.scale)));
    }
    if params.edge_factor == 0 {
        return Err(Error::InvalidParameter("edge_factor must be positive".into()));
    }
    let sum = params.a + params.b + params.c + params.d;
    if (sum - 1.0).abs() > 1e-9 || [params.a, params.b, params.c, params.d].iter().any(|p| *p < 0.0) {
        return Err(Error::InvalidParameter("quadrant probabilities must be non-negative and sum to 1".into()));
    }
    if params.feature_dim == 0 {
        return Err(Error::InvalidParameter("feature_dim must be positive".into()));
    }

    let n = 1usize << params.scale;
    let samples = params.edge_factor << params.scale;
    let mut rng = stream(params.seed, "rmat-edges", &[]);
    let mut edges = Vec::with_capacity(samples);
    for _ in 0..samples {
        let (mut u, mut v) = (0u32, 0u32);
        for _ in 0..params.scale {
            let r = rng.random::<f64>();
            let (ub, vb) = if r < params.a {
                (0, 0)
            } else if r < params.a + params.b {
                (0, 1)
            } else if r < params.a + params.b + params.c {
                (1, 0)
            } else {
                (1, 1)
            };
            u = (u << 1) | ub;
            v = (v << 1) | vb;
        }
        edges.push((u, v));
    }

    let mut feat_rng = stream(params.seed, "rmat-features", &[]);
    let features: Vec<f32> = (0..n * params.feature_dim)
        .map(|_| {
            let x: f64 = StandardNormal.sample(&mut feat_rng);
            x as f32
        })
        .collect();
    Graph::from_edges(&edges, features, params.feature_dim, None)
}
