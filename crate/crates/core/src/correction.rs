//! Coverage correction for gradients computed on a partition.
//!
//! A partition hides part of each node's neighborhood, so neighbor
//! aggregations are computed over a thinner support than the full graph
//! provides. The estimators here compensate in two styles:
//!
//! - node level: each target's aggregation is scaled by p/q, the ratio of
//!   the full-graph sampling probability of its neighbors to the in-partition
//!   one (for uniform sampling this is d_local / d_global);
//! - batch level: a single scalar multiplies the whole gradient, derived
//!   from the coverage statistics of the batch (`uniform`, `general`, and
//!   `resampling` variants).
//!
//! Batch factors are clamped to `c_max` and fall back to 1 whenever their
//! denominators degenerate, so a pathological batch dampens the step instead
//! of exploding it.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::GradVector;
use crate::sampler::TargetStat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionKind {
    None,
    NodeLevel,
    BatchUniform,
    BatchGeneral,
    BatchResampling,
}

impl std::str::FromStr for CorrectionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => CorrectionKind::None,
            "node-level" => CorrectionKind::NodeLevel,
            "batch-uniform" => CorrectionKind::BatchUniform,
            "batch-general" => CorrectionKind::BatchGeneral,
            "batch-resampling" => CorrectionKind::BatchResampling,
            other => return Err(Error::Config(format!("unknown correction kind `{other}`"))),
        })
    }
}

impl std::fmt::Display for CorrectionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CorrectionKind::None => "none",
            CorrectionKind::NodeLevel => "node-level",
            CorrectionKind::BatchUniform => "batch-uniform",
            CorrectionKind::BatchGeneral => "batch-general",
            CorrectionKind::BatchResampling => "batch-resampling",
        })
    }
}

/// Which targets enter a batch-level factor: just the seeds, or every
/// aggregation target across all layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SumDomain {
    Seeds,
    AllTargets,
}

impl std::str::FromStr for SumDomain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "seeds" => SumDomain::Seeds,
            "all-targets" => SumDomain::AllTargets,
            other => return Err(Error::Config(format!("unknown sum domain `{other}`"))),
        })
    }
}

impl std::fmt::Display for SumDomain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SumDomain::Seeds => "seeds",
            SumDomain::AllTargets => "all-targets",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionConfig {
    pub kind: CorrectionKind,
    pub sum_domain: SumDomain,
    /// Degenerate-denominator threshold for the resampling factor.
    pub epsilon: f64,
    /// Upper clamp on any batch-level factor.
    pub c_max: f64,
}

impl CorrectionConfig {
    pub fn new(kind: CorrectionKind, sum_domain: SumDomain) -> CorrectionConfig {
        CorrectionConfig { kind, sum_domain, epsilon: 1e-9, c_max: 10.0 }
    }
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        CorrectionConfig::new(CorrectionKind::None, SumDomain::Seeds)
    }
}

/// Neighbor sampling distributions of one target under the full graph (`p`)
/// and under the partition (`q`), keyed by neighbor node id. Both sum to 1
/// over their supports; `q`'s support must be a subset of `p`'s.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborProbabilities {
    p: BTreeMap<u32, f64>,
    q: BTreeMap<u32, f64>,
}

impl NeighborProbabilities {
    pub fn new(p: BTreeMap<u32, f64>, q: BTreeMap<u32, f64>) -> Result<NeighborProbabilities> {
        for (name, dist) in [("p", &p), ("q", &q)] {
            if dist.values().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must assign positive finite mass"
                )));
            }
            let total: f64 = dist.values().sum();
            if !dist.is_empty() && (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "{name} sums to {total}, expected 1"
                )));
            }
        }
        if let Some(u) = q.keys().find(|u| !p.contains_key(u)) {
            return Err(Error::SupportViolation(format!(
                "partition distribution covers node {u} that the full graph does not"
            )));
        }
        Ok(NeighborProbabilities { p, q })
    }

    /// Uniform distributions over the full and local neighbor lists.
    pub fn uniform(full: &[u32], local: &[u32]) -> Result<NeighborProbabilities> {
        let spread = |nodes: &[u32]| -> BTreeMap<u32, f64> {
            let w = 1.0 / nodes.len() as f64;
            nodes.iter().map(|&u| (u, w)).collect()
        };
        let p = if full.is_empty() { BTreeMap::new() } else { spread(full) };
        let q = if local.is_empty() { BTreeMap::new() } else { spread(local) };
        NeighborProbabilities::new(p, q)
    }

    /// Expected importance ratio E_{u~q}[p(u)/q(u)], which telescopes to the
    /// full-graph probability mass the partition still covers. With both
    /// sides uniform this is exactly d_local / d_global. A target with no
    /// local neighbors contributes 1: it carries no neighbor gradient, so
    /// there is nothing to correct.
    pub fn mean_ratio(&self) -> f64 {
        if self.p.is_empty() || self.q.is_empty() {
            return 1.0;
        }
        self.q.keys().map(|u| self.p[u]).sum()
    }
}

/// Node-level weight for one target under uniform neighbor sampling:
/// d_local / d_global, or 1 when the node has no neighbors anywhere.
pub fn node_weight(stat: &TargetStat) -> f64 {
    if stat.d_global == 0 {
        1.0
    } else {
        stat.d_local as f64 / stat.d_global as f64
    }
}

fn domain<'a>(
    stats: &'a [TargetStat],
    sum_domain: SumDomain,
) -> impl Iterator<Item = &'a TargetStat> {
    stats.iter().filter(move |s| match sum_domain {
        SumDomain::Seeds => s.is_seed,
        SumDomain::AllTargets => true,
    })
}

/// Mean of d_local / d_global over the domain (isolated nodes count 1, a
/// fully hidden neighborhood counts 0). Example: stats {(2,4), (3,3)} give
/// (0.5 + 1.0) / 2 = 0.75.
pub fn batch_factor_uniform(stats: &[TargetStat], config: &CorrectionConfig) -> Result<f64> {
    let mut acc = 0.0;
    let mut n = 0usize;
    for s in domain(stats, config.sum_domain) {
        acc += node_weight(s);
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidParameter("batch factor over an empty domain".into()));
    }
    Ok(clamp(acc / n as f64, config.c_max))
}

/// Mean over the domain of each target's expected importance ratio
/// E_q[p/q]. The caller supplies one distribution pair per target, aligned
/// with the stat order. With uniform distributions this reduces to
/// [`batch_factor_uniform`] whenever every counted target kept at least one
/// neighbor (a fully hidden neighborhood counts 1 here but 0 there).
pub fn batch_factor_general(
    stats: &[TargetStat],
    probabilities: &[NeighborProbabilities],
    config: &CorrectionConfig,
) -> Result<f64> {
    if stats.len() != probabilities.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} stats but {} probability pairs",
            stats.len(),
            probabilities.len()
        )));
    }
    let mut acc = 0.0;
    let mut n = 0usize;
    for (s, pq) in stats.iter().zip(probabilities) {
        let keep = match config.sum_domain {
            SumDomain::Seeds => s.is_seed,
            SumDomain::AllTargets => true,
        };
        if keep {
            acc += pq.mean_ratio();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidParameter("batch factor over an empty domain".into()));
    }
    Ok(clamp(acc / n as f64, config.c_max))
}

/// Inverse expected resampling overhead: 1 / D with
/// D = sum_v (d_global/d_local - 1) * |S_v| over the domain. Targets whose
/// entire neighborhood survived contribute 0 to D; targets with no local
/// neighbors are skipped (there is nothing to resample from). D below
/// `epsilon` means the partition lost nothing, so the factor is 1.
pub fn batch_factor_resampling(stats: &[TargetStat], config: &CorrectionConfig) -> f64 {
    let mut d = 0.0;
    for s in domain(stats, config.sum_domain) {
        if s.d_local == 0 {
            continue;
        }
        let deficit = s.d_global as f64 / s.d_local as f64 - 1.0;
        d += deficit * s.num_sampled as f64;
    }
    if d < config.epsilon {
        return 1.0;
    }
    clamp(1.0 / d, config.c_max)
}

fn clamp(c: f64, c_max: f64) -> f64 {
    if c > c_max {
        c_max
    } else {
        c
    }
}

/// Batch-level factor for the configured kind. `None` and `NodeLevel` apply
/// no scalar (the node-level weights act inside the forward pass instead).
pub fn batch_factor(stats: &[TargetStat], config: &CorrectionConfig) -> Result<f64> {
    match config.kind {
        CorrectionKind::None | CorrectionKind::NodeLevel => Ok(1.0),
        CorrectionKind::BatchUniform => batch_factor_uniform(stats, config),
        CorrectionKind::BatchGeneral => {
            // Training uses uniform neighbor sampling, for which the general
            // estimator collapses to the uniform one.
            batch_factor_uniform(stats, config)
        }
        CorrectionKind::BatchResampling => Ok(batch_factor_resampling(stats, config)),
    }
}

/// Scales a gradient in place by a batch factor, guarding against overflow.
pub fn apply_correction(grad: &mut GradVector, factor: f64) -> Result<()> {
    if !factor.is_finite() || factor <= 0.0 {
        return Err(Error::NonFinite(format!("correction factor {factor}")));
    }
    grad.scale(factor);
    if grad.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("corrected gradient".into()));
    }
    Ok(())
}

/// Per-target node-level weights for a batch, indexed by partition-local id.
/// Nodes that never appear as targets keep weight 1.
pub fn node_weights_for_batch(stats: &[TargetStat], num_local: usize) -> Vec<f64> {
    let mut weights = vec![1.0; num_local];
    for s in stats {
        weights[s.node as usize] = node_weight(s);
    }
    weights
}

/// Gradient of the batch loss with each target's neighbor aggregation
/// pre-multiplied by its weight (self paths untouched). `weights` is indexed
/// by partition-local node id and must cover every node the batch touches.
pub fn apply_node_level(
    batch: &crate::sampler::MiniBatch,
    weights: &[f64],
    params: &crate::model::ModelParams,
    features: &[f32],
    feature_dim: usize,
) -> Result<(f64, GradVector)> {
    for layer in &batch.layers {
        if let Some(&node) = layer.nodes.iter().find(|&&n| n as usize >= weights.len()) {
            return Err(Error::OutOfRange { index: node as usize, limit: weights.len() });
        }
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
        return Err(Error::NonFinite(format!("node weight {w}")));
    }
    crate::model::loss_and_grad(
        batch,
        params,
        features,
        feature_dim,
        &mut crate::model::Regime::Eval,
        Some(weights),
    )
}
