//! Brute-force verification of the estimator math on tiny instances.
//!
//! Everything here is deliberately slow and direct: full-neighborhood
//! gradients, per-coordinate finite differences, exhaustive enumeration of
//! schedule slots, and grid search. The training engine is never trusted to
//! check itself; these oracles recompute the reference quantities from
//! scratch so the fast paths have something independent to agree with.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::correction::node_weights_for_batch;
use crate::error::{Error, Result};
use crate::graph::{generate_sbm, Graph, SbmParams, Split};
use crate::model::{
    init_params, loss_and_grad, params_from_flat, Arch, GradVector, ModelParams, Regime,
};
use crate::partition::{build_partition, ChunkAssignment, Partition, PartitionMode};
use crate::rng::stream;
use crate::sampler::{full_graph_batch, sample_batch, MiniBatch};
use crate::schedule::{pair_coverage, sweep_schedule, SweepSchedule};

/// One verified quantity: a reference value, an estimate, and a verdict
/// against a stated tolerance on the absolute error.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub quantity: String,
    pub reference: f64,
    pub estimate: f64,
    /// Standard-error band where the estimate is a Monte Carlo mean, else 0.
    pub band: f64,
    pub samples: u64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleCheck {
    pub fn assess(
        quantity: impl Into<String>,
        reference: f64,
        estimate: f64,
        band: f64,
        samples: u64,
        tolerance: f64,
    ) -> OracleCheck {
        let quantity = quantity.into();
        let pass = (estimate - reference).abs() <= tolerance;
        OracleCheck { quantity, reference, estimate, band, samples, tolerance, pass }
    }

    pub fn abs_error(&self) -> f64 {
        (self.estimate - self.reference).abs()
    }

    pub fn rel_error(&self) -> f64 {
        self.abs_error() / self.reference.abs().max(1e-300)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleReport {
    pub checks: Vec<OracleCheck>,
}

impl OracleReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn merge(&mut self, other: OracleReport) {
        self.checks.extend(other.checks);
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "[{}] {}: estimate {:.6e} vs reference {:.6e} (abs {:.3e}, band {:.3e}, n={}, tol {:.1e})\n",
                if c.pass { "ok" } else { "FAIL" },
                c.quantity,
                c.estimate,
                c.reference,
                c.abs_error(),
                c.band,
                c.samples,
                c.tolerance,
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "quantity,reference,estimate,abs_error,band,samples,tolerance,pass")?;
        for c in &self.checks {
            writeln!(
                w,
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{},{:.17e},{}",
                c.quantity,
                c.reference,
                c.estimate,
                c.abs_error(),
                c.band,
                c.samples,
                c.tolerance,
                c.pass
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Exact loss gradient over the full graph: every train node is a seed,
/// every neighbor list is complete, no dropout. Guarded to small graphs
/// because the batch materializes all nodes at every layer.
pub fn full_graph_gradient(graph: &Graph, params: &ModelParams) -> Result<GradVector> {
    const NODE_GUARD: usize = 10_000;
    if graph.num_nodes() > NODE_GUARD {
        return Err(Error::CapacityExceeded(format!(
            "exact gradient wants <= {NODE_GUARD} nodes, graph has {}",
            graph.num_nodes()
        )));
    }
    let seeds = graph.split_nodes(Split::Train);
    if seeds.is_empty() {
        return Err(Error::InvalidParameter("graph has no train nodes".into()));
    }
    let batch = full_graph_batch(graph, params.depth(), &seeds)?;
    let (_, grad) =
        loss_and_grad(&batch, params, graph.features(), graph.feature_dim(), &mut Regime::Eval, None)?;
    Ok(grad)
}

/// Central differences of `f` at `theta`, one coordinate at a time.
pub fn central_difference<F>(mut f: F, theta: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("step {eps} must be positive")));
    }
    let mut point = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        point[i] = theta[i] + eps;
        let plus = f(&point)?;
        point[i] = theta[i] - eps;
        let minus = f(&point)?;
        point[i] = theta[i];
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(grad)
}

/// Finite-difference gradient of the batch loss, for checking the analytic
/// backward pass. Dropout must be off; the loss is otherwise the same one
/// the model reports.
pub fn finite_difference_gradient(
    batch: &MiniBatch,
    params: &ModelParams,
    features: &[f32],
    feature_dim: usize,
    eps: f64,
) -> Result<GradVector> {
    let arch = params.arch();
    let dims = params.dims().to_vec();
    let values = central_difference(
        |theta| {
            let p = params_from_flat(arch, &dims, theta.to_vec())?;
            let (loss, _) =
                loss_and_grad(batch, &p, features, feature_dim, &mut Regime::Eval, None)?;
            Ok(loss)
        },
        params.theta(),
        eps,
    )?;
    Ok(GradVector { values, layout_id: params.layout_id() })
}

/// Per-coordinate relative disagreement between two gradients, the usual
/// gradient-check metric.
pub fn max_relative_error(a: &GradVector, b: &GradVector) -> f64 {
    a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs() / (x.abs() + y.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Knobs for the corrected-gradient estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub partition_mode: PartitionMode,
    /// Per-layer fanouts; `None` takes every visible neighbor.
    pub fanouts: Option<Vec<usize>>,
    /// Seeds drawn per batch (uniform over the resident train nodes, with
    /// replacement); `None` takes all of them.
    pub seeds_per_batch: Option<usize>,
    /// Apply the per-node coverage weights; `false` measures the raw bias.
    pub corrected: bool,
    /// Pass threshold on the relative L2 error against the exact gradient.
    pub tolerance: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            partition_mode: PartitionMode::InducedCore,
            fanouts: None,
            seeds_per_batch: None,
            corrected: true,
            tolerance: 0.05,
        }
    }
}

/// All (super-epoch, worker) slots of one sweep cycle, with partitions built
/// lazily and shared between the two orderings of each chunk pair.
struct SlotUniverse<'g> {
    graph: &'g Graph,
    chunks: &'g ChunkAssignment,
    mode: PartitionMode,
    slots: Vec<(u32, u32)>,
    cache: HashMap<(u32, u32), Partition>,
}

impl<'g> SlotUniverse<'g> {
    fn new(
        graph: &'g Graph,
        chunks: &'g ChunkAssignment,
        schedule: &SweepSchedule,
        mode: PartitionMode,
    ) -> Result<SlotUniverse<'g>> {
        let coverage = pair_coverage(schedule);
        if !coverage.is_complete() {
            return Err(Error::SupportViolation(format!(
                "schedule leaves {} chunk pairs uncovered",
                coverage.missing.len()
            )));
        }
        let mut slots = Vec::new();
        for t in 0..schedule.cycle_length() {
            for &(base, swept) in schedule.assignments(t) {
                slots.push((base.min(swept), base.max(swept)));
            }
        }
        Ok(SlotUniverse { graph, chunks, mode, slots, cache: HashMap::new() })
    }

    fn partition(&mut self, slot: (u32, u32)) -> Result<&Partition> {
        if !self.cache.contains_key(&slot) {
            let part = build_partition(self.graph, self.chunks, slot.0, slot.1, self.mode)?;
            self.cache.insert(slot, part);
        }
        Ok(&self.cache[&slot])
    }
}

fn slot_gradient(
    graph: &Graph,
    partition: &Partition,
    params: &ModelParams,
    config: &McConfig,
    rng: &mut ChaCha8Rng,
) -> Result<GradVector> {
    let labels = graph
        .labels()
        .ok_or_else(|| Error::InvalidParameter("corrected-gradient oracle needs labels".into()))?;
    let resident = partition.train_locals();
    if resident.is_empty() {
        return Err(Error::InvalidParameter(
            "partition holds no train nodes; enlarge chunks or reseed the split".into(),
        ));
    }
    let seeds: Vec<u32> = match config.seeds_per_batch {
        Some(k) => (0..k).map(|_| resident[rng.random_range(0..resident.len())]).collect(),
        None => resident.to_vec(),
    };
    let fanouts = match &config.fanouts {
        Some(f) => f.clone(),
        None => vec![usize::MAX; params.depth()],
    };
    let batch = sample_batch(partition, labels, &seeds, &fanouts, rng)?;
    let weights = config
        .corrected
        .then(|| node_weights_for_batch(&batch.stats, partition.num_local()));
    let (_, grad) = loss_and_grad(
        &batch,
        params,
        graph.features(),
        graph.feature_dim(),
        &mut Regime::Eval,
        weights.as_deref(),
    )?;
    Ok(grad)
}

/// Exact expectation of the per-slot gradient under uniform slot choice:
/// every (super-epoch, worker) slot of one cycle evaluated once with all its
/// resident train nodes as seeds and full neighbor lists. This is what the
/// Monte Carlo estimator converges to.
pub fn enumerate_corrected_expectation(
    graph: &Graph,
    chunks: &ChunkAssignment,
    schedule: &SweepSchedule,
    params: &ModelParams,
    config: &McConfig,
) -> Result<GradVector> {
    let mut universe = SlotUniverse::new(graph, chunks, schedule, config.partition_mode)?;
    let full = McConfig { fanouts: None, seeds_per_batch: None, ..config.clone() };
    let mut mean = GradVector::zeros_like(params);
    let slots = universe.slots.clone();
    // The rng is never consumed: full lists draw nothing and seeds are fixed.
    let mut rng = stream(0, "slot-enumeration", &[]);
    for &slot in &slots {
        let part = universe.partition(slot)?;
        let g = slot_gradient(graph, part, params, &full, &mut rng)?;
        for (m, v) in mean.values.iter_mut().zip(&g.values) {
            *m += v / slots.len() as f64;
        }
    }
    Ok(mean)
}

/// Monte Carlo mean of the (optionally corrected) per-batch gradient over
/// uniformly drawn schedule slots, plus its standard-error band.
pub fn mc_mean_gradient(
    graph: &Graph,
    chunks: &ChunkAssignment,
    schedule: &SweepSchedule,
    params: &ModelParams,
    config: &McConfig,
    num_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(GradVector, f64)> {
    if num_samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let mut universe = SlotUniverse::new(graph, chunks, schedule, config.partition_mode)?;
    let root = rng.next_u64();
    let mut sum = GradVector::zeros_like(params);
    let mut sum_sq_norm = 0.0f64;
    for i in 0..num_samples {
        let mut sample_rng = stream(root, "mc-sample", &[i as u64]);
        let slot = universe.slots[sample_rng.random_range(0..universe.slots.len())];
        let part = universe.partition(slot)?;
        let g = slot_gradient(graph, part, params, config, &mut sample_rng)?;
        let mut norm_sq = 0.0;
        for (s, v) in sum.values.iter_mut().zip(&g.values) {
            *s += v;
            norm_sq += v * v;
        }
        sum_sq_norm += norm_sq;
    }
    let n = num_samples as f64;
    let mut mean = sum;
    mean.scale(1.0 / n);
    let mean_norm_sq: f64 = mean.values.iter().map(|v| v * v).sum();
    let band = if num_samples > 1 {
        ((sum_sq_norm - n * mean_norm_sq).max(0.0) / (n * (n - 1.0))).sqrt()
    } else {
        0.0
    };
    Ok((mean, band))
}

/// Compares the Monte Carlo corrected-gradient mean against the exact
/// full-graph gradient and reports the relative L2 error with a standard
/// error band (both normalized by the exact gradient's norm).
pub fn mc_corrected_gradient(
    graph: &Graph,
    chunks: &ChunkAssignment,
    schedule: &SweepSchedule,
    params: &ModelParams,
    config: &McConfig,
    num_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<OracleReport> {
    let exact = full_graph_gradient(graph, params)?;
    let exact_norm = exact.l2_norm().max(1e-300);
    let (mean, band) =
        mc_mean_gradient(graph, chunks, schedule, params, config, num_samples, rng)?;
    let diff: f64 = mean
        .values
        .iter()
        .zip(&exact.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let rel = diff / exact_norm;
    let label = if config.corrected {
        "corrected-gradient relative L2 error"
    } else {
        "uncorrected-gradient relative L2 error"
    };
    Ok(OracleReport {
        checks: vec![OracleCheck::assess(
            label,
            0.0,
            rel,
            band / exact_norm,
            num_samples as u64,
            config.tolerance,
        )],
    })
}

/// Exhaustively checks the importance-sampling identity on one enumerated
/// neighborhood: with p uniform over `d_global` neighbors and q uniform over
/// the surviving subset, E_{u~q}[(p/q) g(u)] must equal the p-mass-weighted
/// sum over the subset, and with full support the full expectation E_p[g].
pub fn verify_importance_identity(
    d_global: u32,
    local_subset: &[u32],
    values: &[f64],
) -> Result<OracleReport> {
    if d_global == 0 {
        return Err(Error::InvalidParameter("neighborhood must be non-empty".into()));
    }
    if values.len() != d_global as usize {
        return Err(Error::DimensionMismatch(format!(
            "{} values for {d_global} neighbors",
            values.len()
        )));
    }
    if local_subset.is_empty() {
        return Err(Error::InvalidParameter("local subset must be non-empty".into()));
    }
    let mut seen = vec![false; d_global as usize];
    for &u in local_subset {
        if u >= d_global {
            return Err(Error::OutOfRange { index: u as usize, limit: d_global as usize });
        }
        if std::mem::replace(&mut seen[u as usize], true) {
            return Err(Error::InvalidParameter(format!("neighbor {u} listed twice")));
        }
    }

    let p = 1.0 / d_global as f64;
    let q = 1.0 / local_subset.len() as f64;
    let lhs: f64 = local_subset.iter().map(|&u| q * (p / q) * values[u as usize]).sum();
    let partial: f64 = local_subset.iter().map(|&u| p * values[u as usize]).sum();

    let mut checks = vec![OracleCheck::assess(
        "restricted-support importance identity",
        partial,
        lhs,
        0.0,
        local_subset.len() as u64,
        1e-12,
    )];
    if local_subset.len() == d_global as usize {
        let full_expectation = values.iter().sum::<f64>() / d_global as f64;
        checks.push(OracleCheck::assess(
            "full-support importance identity",
            full_expectation,
            lhs,
            0.0,
            d_global as u64,
            1e-12,
        ));
    }
    Ok(OracleReport { checks })
}

/// Runs [`verify_importance_identity`] over every non-empty subset of every
/// neighborhood size up to `max_d`, with deterministic pseudo-random values.
pub fn enumerate_importance_identities(max_d: u32, seed: u64) -> Result<OracleReport> {
    let mut rng = stream(seed, "importance-values", &[]);
    let mut report = OracleReport::default();
    for d in 1..=max_d {
        let values: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        for mask in 1u32..(1 << d) {
            let subset: Vec<u32> = (0..d).filter(|&u| mask & (1 << u) != 0).collect();
            report.merge(verify_importance_identity(d, &subset, &values)?);
        }
    }
    Ok(report)
}

/// Exhaustive importance-identity run reduced to one worst-case check per
/// identity kind, which keeps reports readable (the full enumeration spans
/// hundreds of subsets).
pub fn verify_importance_suite(seed: u64) -> Result<OracleReport> {
    let full = enumerate_importance_identities(8, seed)?;
    let mut families: Vec<(String, f64, u64)> = Vec::new();
    for check in &full.checks {
        match families.iter_mut().find(|(q, _, _)| *q == check.quantity) {
            Some((_, worst, count)) => {
                *worst = worst.max(check.abs_error());
                *count += 1;
            }
            None => families.push((check.quantity.clone(), check.abs_error(), 1)),
        }
    }
    Ok(OracleReport {
        checks: families
            .into_iter()
            .map(|(quantity, worst, count)| {
                OracleCheck::assess(
                    format!("{quantity} (worst case, exhaustive d <= 8)"),
                    0.0,
                    worst,
                    0.0,
                    count,
                    1e-12,
                )
            })
            .collect(),
    })
}

/// How synthetic importance ratios are drawn for the projection check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioKind {
    /// Every ratio is 1 (nothing was hidden).
    Constant,
    /// Half the ratios 0.5, half 1.0.
    TwoPoint,
    /// Uniform on [0.1, 1).
    Uniform,
}

impl std::fmt::Display for RatioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RatioKind::Constant => "constant",
            RatioKind::TwoPoint => "two-point",
            RatioKind::Uniform => "uniform",
        })
    }
}

pub fn ratio_samples(kind: RatioKind, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match kind {
        RatioKind::Constant => vec![1.0; n],
        RatioKind::TwoPoint => (0..n).map(|i| if i % 2 == 0 { 0.5 } else { 1.0 }).collect(),
        RatioKind::Uniform => (0..n).map(|_| rng.random_range(0.1..1.0)).collect(),
    }
}

/// Checks that the analytic batch-correction scalar (the mean importance
/// ratio) really is the minimizer of ‖E[corrected] − c·E[raw]‖₂, by grid
/// search. Gradient samples are degenerate at a random mean vector μ, the
/// setting in which the scalar has a closed form.
pub fn verify_projection(
    mu_dim: usize,
    ratios: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<OracleReport> {
    if mu_dim == 0 {
        return Err(Error::InvalidParameter("mu_dim must be positive".into()));
    }
    if ratios.is_empty() || ratios.iter().any(|r| !r.is_finite() || *r <= 0.0) {
        return Err(Error::InvalidParameter("ratios must be positive and finite".into()));
    }
    let mu: Vec<f64> = (0..mu_dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mu_norm = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
    if mu_norm < 1e-9 {
        return Err(Error::InvalidParameter("mean vector degenerated to zero".into()));
    }

    let c_star = ratios.iter().sum::<f64>() / ratios.len() as f64;

    // E[corrected] estimated from the sample: mean over draws of ratio * mu.
    let mut corrected_mean = vec![0.0f64; mu_dim];
    for &r in ratios {
        for (m, &u) in corrected_mean.iter_mut().zip(&mu) {
            *m += r * u / ratios.len() as f64;
        }
    }

    let objective = |c: f64| -> f64 {
        corrected_mean
            .iter()
            .zip(&mu)
            .map(|(m, &u)| (m - c * u) * (m - c * u))
            .sum::<f64>()
            .sqrt()
    };

    const STEP: f64 = 1e-3;
    let steps = (3.0 * c_star / STEP).ceil() as usize;
    let mut best_c = 0.0;
    let mut best = objective(0.0);
    for k in 1..=steps {
        let c = k as f64 * STEP;
        let value = objective(c);
        if value < best {
            best = value;
            best_c = c;
        }
    }

    Ok(OracleReport {
        checks: vec![OracleCheck::assess(
            format!("projection argmin (dim {mu_dim})"),
            c_star,
            best_c,
            0.0,
            ratios.len() as u64,
            2e-3,
        )],
    })
}

/// All nine projection cases: mean dimension {1, 8, 64} crossed with the
/// three ratio distributions.
pub fn verify_projection_suite(seed: u64) -> Result<OracleReport> {
    let mut report = OracleReport::default();
    for (i, &dim) in [1usize, 8, 64].iter().enumerate() {
        for (j, kind) in [RatioKind::Constant, RatioKind::TwoPoint, RatioKind::Uniform]
            .into_iter()
            .enumerate()
        {
            let mut rng = stream(seed, "projection", &[i as u64, j as u64]);
            let ratios = ratio_samples(kind, 200, &mut rng);
            let mut case = verify_projection(dim, &ratios, &mut rng)?;
            for check in &mut case.checks {
                check.quantity = format!("projection argmin (dim {dim}, {kind} ratios)");
            }
            report.merge(case);
        }
    }
    Ok(report)
}

/// Analytic-vs-finite-difference gradient checks for both architectures at
/// depths 1 through 3 on a fixed 10-node graph.
pub fn verify_gradients(seed: u64) -> Result<OracleReport> {
    let graph = generate_sbm(&SbmParams {
        communities: 2,
        nodes_per_community: 5,
        p_in: 0.8,
        p_out: 0.2,
        feature_dim: 5,
        feature_signal: 1.5,
        seed,
    })?;
    let all: Vec<u32> = (0..graph.num_nodes() as u32).collect();
    let mut report = OracleReport::default();
    for arch in [Arch::Gcn, Arch::Sage] {
        for depth in 1..=3usize {
            let mut dims = vec![graph.feature_dim()];
            dims.extend(std::iter::repeat(7).take(depth - 1));
            dims.push(graph.num_classes());
            let params = init_params(arch, &dims, seed.wrapping_add(depth as u64))?;
            let batch = full_graph_batch(&graph, depth, &all)?;
            let (_, analytic) = loss_and_grad(
                &batch,
                &params,
                graph.features(),
                graph.feature_dim(),
                &mut Regime::Eval,
                None,
            )?;
            let numeric = finite_difference_gradient(
                &batch,
                &params,
                graph.features(),
                graph.feature_dim(),
                1e-6,
            )?;
            report.checks.push(OracleCheck::assess(
                format!("gradient check ({arch}, depth {depth})"),
                0.0,
                max_relative_error(&analytic, &numeric),
                0.0,
                params.theta().len() as u64,
                1e-5,
            ));
        }
    }
    Ok(report)
}

/// Certifies the sweep schedule: over every (chunks, workers) combination up
/// to `max_chunks`, no unordered chunk pair goes uncovered within the cycle.
pub fn verify_coverage(max_chunks: u32) -> Result<OracleReport> {
    let mut missing = 0u64;
    let mut combos = 0u64;
    for c in 2..=max_chunks {
        for w in 1..=c {
            let schedule = sweep_schedule(c, w)?;
            missing += pair_coverage(&schedule).missing.len() as u64;
            combos += 1;
        }
    }
    Ok(OracleReport {
        checks: vec![OracleCheck::assess(
            format!("uncovered chunk pairs over C=2..={max_chunks}, W=1..=C"),
            0.0,
            missing as f64,
            0.0,
            combos,
            0.0,
        )],
    })
}

/// The frozen small instance on which asymptotic unbiasedness is measured:
/// a 24-node six-community SBM chunked along community boundaries, a full
/// three-worker sweep cycle, and a fixed depth-1 aggregation model.
/// Constants are pinned so the reference numbers stay stable; change them
/// only together with the recorded expectations.
pub struct UnbiasednessInstance {
    pub graph: Graph,
    pub chunks: ChunkAssignment,
    pub schedule: SweepSchedule,
    pub params: ModelParams,
    pub mc: McConfig,
}

pub fn unbiasedness_instance() -> Result<UnbiasednessInstance> {
    let graph = generate_sbm(&SbmParams {
        communities: 6,
        nodes_per_community: 4,
        p_in: 0.8,
        p_out: 0.02,
        feature_dim: 6,
        feature_signal: 3.0,
        seed: 13,
    })?;
    // Chunks are the community pairs (0,5), (1,2), (3,4). Two properties
    // matter. First, every chunk ends up with exactly four train nodes (the
    // split hash gives the six communities 2/3/1/3/1/2), so each chunk pair
    // seeds batches at the same rate and the slot average does not silently
    // reweight nodes. Second, chunk boundaries coincide with community
    // boundaries, so a neighbor hidden by partitioning carries a genuinely
    // different feature distribution and dropping it shows up as bias
    // instead of cancelling against the visible neighbors.
    let owner: Vec<u32> = (0..24u32)
        .map(|v| match v / 4 {
            0 | 5 => 0,
            1 | 2 => 1,
            _ => 2,
        })
        .collect();
    let chunks = ChunkAssignment::from_owners(3, owner)?;
    let schedule = sweep_schedule(3, 3)?;
    let mut params = init_params(Arch::Sage, &[6, 6], 11)?;
    // Shrink the frozen weights so the softmax stays in its near-linear
    // regime; the estimator averages gradients, and a well-conditioned
    // loss surface keeps the Monte Carlo band tight.
    for w in params.theta_mut() {
        *w *= 0.5;
    }
    let mc = McConfig {
        partition_mode: PartitionMode::InducedCore,
        fanouts: None,
        seeds_per_batch: Some(4),
        corrected: true,
        tolerance: 0.05,
    };
    Ok(UnbiasednessInstance { graph, chunks, schedule, params, mc })
}

/// Monte Carlo unbiasedness check on the frozen instance: the corrected
/// estimator must land within tolerance of the exact full-graph gradient,
/// and dropping the correction must measurably widen the error.
pub fn verify_unbiasedness(num_samples: usize, seed: u64) -> Result<OracleReport> {
    let inst = unbiasedness_instance()?;
    let mut rng = stream(seed, "unbiasedness", &[]);
    let mut report = mc_corrected_gradient(
        &inst.graph,
        &inst.chunks,
        &inst.schedule,
        &inst.params,
        &inst.mc,
        num_samples,
        &mut rng,
    )?;
    let uncorrected_mc =
        McConfig { corrected: false, tolerance: f64::INFINITY, ..inst.mc.clone() };
    let mut rng = stream(seed, "unbiasedness", &[]);
    let uncorrected = mc_corrected_gradient(
        &inst.graph,
        &inst.chunks,
        &inst.schedule,
        &inst.params,
        &uncorrected_mc,
        num_samples,
        &mut rng,
    )?;
    let corrected_err = report.checks[0].estimate;
    let uncorrected_err = uncorrected.checks[0].estimate;
    report.merge(uncorrected);
    report.checks.push(OracleCheck {
        quantity: "correction shrinks the estimator error".into(),
        reference: uncorrected_err,
        estimate: corrected_err,
        band: 0.0,
        samples: num_samples as u64,
        tolerance: f64::INFINITY,
        pass: corrected_err < uncorrected_err,
    });
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::{make_chunks, ChunkStrategy};
    use crate::sampler::full_partition_batch;

    fn small_sbm(seed: u64) -> Graph {
        generate_sbm(&SbmParams {
            communities: 3,
            nodes_per_community: 8,
            p_in: 0.8,
            p_out: 0.05,
            feature_dim: 4,
            feature_signal: 2.0,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn central_difference_is_exact_on_linear_functions() {
        let x = vec![3.0, -1.5, 0.25];
        let f = |theta: &[f64]| Ok(theta.iter().zip(&x).map(|(t, v)| t * v).sum());
        for eps in [1e-2, 1e-5, 1.0] {
            let g = central_difference(f, &[0.7, 0.2, -0.9], eps).unwrap();
            for (a, b) in g.iter().zip(&x) {
                assert!((a - b).abs() < 1e-9, "linear functions differentiate exactly");
            }
        }
    }

    #[test]
    fn richardson_halving_quarters_quadratic_error() {
        // f(t) = t^4 has f'(1) = 4 and central-difference error 4 eps^2 + O(eps^4).
        let f = |theta: &[f64]| Ok(theta[0].powi(4));
        let coarse = central_difference(f, &[1.0], 1e-3).unwrap()[0] - 4.0;
        let fine = central_difference(f, &[1.0], 5e-4).unwrap()[0] - 4.0;
        let ratio = coarse / fine;
        assert!((ratio - 4.0).abs() < 0.1, "halving eps should quarter the error, got {ratio}");
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let g = small_sbm(41);
        let seeds = g.split_nodes(Split::Train);
        let batch = full_graph_batch(&g, 2, &seeds).unwrap();
        for arch in [Arch::Gcn, Arch::Sage] {
            let params = init_params(arch, &[4, 6, 3], 7).unwrap();
            let (_, analytic) = loss_and_grad(
                &batch,
                &params,
                g.features(),
                g.feature_dim(),
                &mut Regime::Eval,
                None,
            )
            .unwrap();
            let numeric =
                finite_difference_gradient(&batch, &params, g.features(), g.feature_dim(), 1e-5)
                    .unwrap();
            let err = max_relative_error(&analytic, &numeric);
            assert!(err <= 1e-5, "{arch}: max relative error {err}");
        }
    }

    #[test]
    fn weighted_gradients_also_match_finite_differences() {
        // The coverage weights enter the forward pass, so the check must
        // differentiate the weighted loss. Reuses the generic helper with a
        // weighted closure instead of the plain one.
        let g = small_sbm(43);
        let chunks = make_chunks(&g, 3, ChunkStrategy::BfsGrow, 5).unwrap();
        let part = build_partition(&g, &chunks, 0, 1, PartitionMode::InducedCore).unwrap();
        let batch = full_partition_batch(&part, g.labels().unwrap(), 2).unwrap();
        let weights = node_weights_for_batch(&batch.stats, part.num_local());
        let params = init_params(Arch::Gcn, &[4, 5, 3], 17).unwrap();
        let (_, analytic) = loss_and_grad(
            &batch,
            &params,
            g.features(),
            g.feature_dim(),
            &mut Regime::Eval,
            Some(&weights),
        )
        .unwrap();
        let numeric = central_difference(
            |theta| {
                let p = params_from_flat(Arch::Gcn, &[4, 5, 3], theta.to_vec())?;
                let (loss, _) = loss_and_grad(
                    &batch,
                    &p,
                    g.features(),
                    g.feature_dim(),
                    &mut Regime::Eval,
                    Some(&weights),
                )?;
                Ok(loss)
            },
            params.theta(),
            1e-5,
        )
        .unwrap();
        let numeric = GradVector { values: numeric, layout_id: analytic.layout_id };
        assert!(max_relative_error(&analytic, &numeric) <= 1e-5);
    }

    #[test]
    fn full_graph_gradient_agrees_with_whole_graph_partition() {
        let g = small_sbm(47);
        let params = init_params(Arch::Sage, &[4, 6, 3], 3).unwrap();
        let exact = full_graph_gradient(&g, &params).unwrap();
        let part = Partition::whole_graph(&g);
        let batch = full_partition_batch(&part, g.labels().unwrap(), 2).unwrap();
        let (_, other) = loss_and_grad(
            &batch,
            &params,
            g.features(),
            g.feature_dim(),
            &mut Regime::Eval,
            None,
        )
        .unwrap();
        for (a, b) in exact.values.iter().zip(&other.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn full_graph_gradient_refuses_oversized_graphs() {
        // Only the guard matters; build a path graph just over the limit.
        let n = 10_001u32;
        let edges: Vec<(u32, u32)> = (0..n - 1).map(|v| (v, v + 1)).collect();
        let feats = vec![0.0f32; n as usize];
        let g = Graph::from_edges(&edges, feats, 1, Some(vec![0; n as usize])).unwrap();
        let params = init_params(Arch::Gcn, &[1, 2], 0).unwrap();
        assert!(matches!(full_graph_gradient(&g, &params), Err(Error::CapacityExceeded(_))));
    }

    #[test]
    fn whole_graph_pair_makes_correction_exact() {
        // Two chunks, one pair: the partition holds the entire graph, all
        // coverage weights are 1, and the slot expectation is the exact
        // gradient.
        let g = small_sbm(53);
        let chunks = make_chunks(&g, 2, ChunkStrategy::Random, 9).unwrap();
        let schedule = sweep_schedule(2, 2).unwrap();
        let params = init_params(Arch::Gcn, &[4, 5, 3], 29).unwrap();
        let exact = full_graph_gradient(&g, &params).unwrap();
        let config = McConfig::default();
        let mean =
            enumerate_corrected_expectation(&g, &chunks, &schedule, &params, &config).unwrap();
        let diff: f64 = mean
            .values
            .iter()
            .zip(&exact.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(diff / exact.l2_norm() < 1e-10);

        let mut rng = stream(1, "mc", &[]);
        let report =
            mc_corrected_gradient(&g, &chunks, &schedule, &params, &config, 64, &mut rng).unwrap();
        assert!(report.checks[0].estimate < 1e-10);
        assert!(report.all_pass());
    }

    #[test]
    fn mc_mean_converges_to_enumerated_expectation() {
        let g = small_sbm(59);
        let chunks = make_chunks(&g, 3, ChunkStrategy::BfsGrow, 11).unwrap();
        let schedule = sweep_schedule(3, 3).unwrap();
        let params = init_params(Arch::Sage, &[4, 3], 31).unwrap();
        let config = McConfig::default();
        let target =
            enumerate_corrected_expectation(&g, &chunks, &schedule, &params, &config).unwrap();
        let mut rng = stream(2, "mc", &[]);
        let (mean, band) =
            mc_mean_gradient(&g, &chunks, &schedule, &params, &config, 4_000, &mut rng).unwrap();
        let diff: f64 = mean
            .values
            .iter()
            .zip(&target.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(
            diff < 5.0 * band.max(1e-12),
            "Monte Carlo mean {diff} strays beyond 5 standard errors ({band})"
        );
    }

    #[test]
    fn error_band_decays_like_inverse_sqrt_n() {
        let g = small_sbm(61);
        let chunks = make_chunks(&g, 3, ChunkStrategy::BfsGrow, 13).unwrap();
        let schedule = sweep_schedule(3, 3).unwrap();
        let params = init_params(Arch::Sage, &[4, 3], 37).unwrap();
        let config = McConfig { seeds_per_batch: Some(4), ..McConfig::default() };
        let mut bands_small = Vec::new();
        let mut bands_large = Vec::new();
        for seed in 0..5u64 {
            let mut rng = stream(seed, "band", &[]);
            let (_, b1) =
                mc_mean_gradient(&g, &chunks, &schedule, &params, &config, 250, &mut rng).unwrap();
            let mut rng = stream(seed, "band-large", &[]);
            let (_, b2) =
                mc_mean_gradient(&g, &chunks, &schedule, &params, &config, 1_000, &mut rng)
                    .unwrap();
            bands_small.push(b1);
            bands_large.push(b2);
        }
        bands_small.sort_by(|a, b| a.total_cmp(b));
        bands_large.sort_by(|a, b| a.total_cmp(b));
        let median_small = bands_small[2];
        let median_large = bands_large[2];
        assert!(
            median_large <= median_small / 2.0 * 1.15,
            "quadrupling samples should halve the band: {median_small} -> {median_large}"
        );
    }

    #[test]
    fn incomplete_schedule_is_rejected() {
        let g = small_sbm(67);
        let chunks = make_chunks(&g, 4, ChunkStrategy::Random, 15).unwrap();
        let full = sweep_schedule(4, 2).unwrap();
        let schedule = crate::schedule::SweepSchedule::for_tests(
            4,
            2,
            vec![full.assignments(0).to_vec()],
        );
        let params = init_params(Arch::Gcn, &[4, 3], 0).unwrap();
        let mut rng = stream(3, "mc", &[]);
        let err = mc_corrected_gradient(
            &g,
            &chunks,
            &schedule,
            &params,
            &McConfig::default(),
            10,
            &mut rng,
        );
        assert!(matches!(err, Err(Error::SupportViolation(_))));
    }

    #[test]
    fn importance_identity_examples() {
        // d_global = 4, two survivors {0, 1}, uniform p: the weighted local
        // expectation collapses to (g0 + g1) / 4.
        let values = vec![2.0, -1.0, 5.0, 0.5];
        let report = verify_importance_identity(4, &[0, 1], &values).unwrap();
        assert!(report.all_pass());
        assert!((report.checks[0].estimate - (2.0 - 1.0) / 4.0).abs() < 1e-15);

        // Full support: equals E_p[g] too.
        let report = verify_importance_identity(4, &[0, 1, 2, 3], &values).unwrap();
        assert_eq!(report.checks.len(), 2);
        assert!(report.all_pass());
        assert!((report.checks[1].estimate - values.iter().sum::<f64>() / 4.0).abs() < 1e-15);

        // Point mass on a single surviving neighbor.
        let report = verify_importance_identity(4, &[2], &values).unwrap();
        assert!((report.checks[0].estimate - 5.0 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn importance_identity_enumerated_through_degree_eight() {
        let report = enumerate_importance_identities(8, 71).unwrap();
        assert!(report.all_pass());
        // 2^d - 1 subsets per degree, plus one extra check for full support.
        let expected: usize = (1..=8u32).map(|d| (1usize << d) - 1 + 1).sum();
        assert_eq!(report.checks.len(), expected);
    }

    #[test]
    fn importance_identity_rejects_malformed_subsets() {
        assert!(verify_importance_identity(4, &[], &[0.0; 4]).is_err());
        assert!(verify_importance_identity(4, &[4], &[0.0; 4]).is_err());
        assert!(verify_importance_identity(4, &[1, 1], &[0.0; 4]).is_err());
        assert!(verify_importance_identity(4, &[0], &[0.0; 3]).is_err());
    }

    #[test]
    fn projection_finds_the_mean_ratio() {
        let mut rng = stream(5, "proj", &[]);
        // All ratios 1: the minimizer is exactly 1.
        let report = verify_projection(8, &vec![1.0; 100], &mut rng).unwrap();
        assert!(report.all_pass());
        assert!((report.checks[0].estimate - 1.0).abs() <= 2e-3);

        // Balanced {0.5, 1.0} gives 0.75.
        let ratios = ratio_samples(RatioKind::TwoPoint, 200, &mut rng);
        let report = verify_projection(8, &ratios, &mut rng).unwrap();
        assert!((report.checks[0].reference - 0.75).abs() < 1e-12);
        assert!(report.all_pass());
    }

    #[test]
    fn projection_is_invariant_to_mu_scale() {
        // Homogeneity: the objective scales by |mu|, the argmin does not.
        // Drawing mu from the same stream twice gives the same direction, so
        // compare runs with identical rng state.
        let ratios = vec![0.4, 0.9, 0.6, 0.7];
        let a = verify_projection(3, &ratios, &mut stream(9, "proj", &[])).unwrap();
        let b = verify_projection(3, &ratios, &mut stream(9, "proj", &[])).unwrap();
        assert_eq!(a.checks[0].estimate, b.checks[0].estimate);
        assert!(a.all_pass());
    }

    #[test]
    fn projection_covers_all_required_cases() {
        let mut rng = stream(11, "proj-all", &[]);
        for dim in [1usize, 8, 64] {
            for kind in [RatioKind::Constant, RatioKind::TwoPoint, RatioKind::Uniform] {
                let ratios = ratio_samples(kind, 500, &mut rng);
                let report = verify_projection(dim, &ratios, &mut rng).unwrap();
                assert!(report.all_pass(), "dim {dim}, ratios {kind}");
            }
        }
    }

    #[test]
    fn verification_suites_pass_end_to_end() {
        assert!(verify_gradients(3).unwrap().all_pass());
        assert!(verify_coverage(8).unwrap().all_pass());
        assert!(verify_importance_suite(71).unwrap().all_pass());
        assert!(verify_projection_suite(5).unwrap().all_pass());
    }

    #[test]
    fn corrected_estimator_beats_uncorrected_on_the_frozen_instance() {
        // 4000 samples keep this fast; the acceptance run uses 50000.
        let report = verify_unbiasedness(4_000, 0).unwrap();
        assert!(report.all_pass(), "{}", report.render_text());
        let improvement = report
            .checks
            .iter()
            .find(|c| c.quantity.contains("shrinks"))
            .expect("improvement check present");
        assert!(improvement.estimate < improvement.reference);
    }

    #[test]
    fn frozen_instance_balances_train_seeds_across_chunks() {
        let inst = unbiasedness_instance().unwrap();
        let split = inst.graph.split().unwrap();
        let mut counts = vec![0usize; inst.chunks.num_chunks()];
        for v in 0..inst.graph.num_nodes() {
            if split[v] == Split::Train {
                counts[inst.chunks.owner(v as u32) as usize] += 1;
            }
        }
        assert!(counts.iter().all(|&c| c == counts[0]), "train counts {counts:?}");
    }

    #[test]
    fn report_rendering_includes_verdicts() {
        let report = OracleReport {
            checks: vec![
                OracleCheck::assess("alpha", 1.0, 1.0005, 0.0, 10, 1e-2),
                OracleCheck::assess("beta", 1.0, 2.0, 0.1, 10, 1e-2),
            ],
        };
        let text = report.render_text();
        assert!(text.contains("[ok] alpha"));
        assert!(text.contains("[FAIL] beta"));
        assert!(!report.all_pass());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        report.write_csv(&path).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        assert!(body.starts_with("quantity,reference,estimate"));
        assert_eq!(body.lines().count(), 3);
    }
}
