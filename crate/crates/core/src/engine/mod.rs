//! Training orchestration: super-epochs, phases, the simulated all-reduce,
//! and the repartitioning controller.
//!
//! One epoch runs every worker once, in `ceil(W / phases_max)` sequential
//! phases. Workers inside a phase proceed in lock step: each iteration every
//! active worker samples a batch from its own partition, computes a
//! corrected gradient, and the mean gradient (reduced in worker-id order)
//! updates the shared parameters. Nothing but gradients ever crosses a
//! partition boundary, which is the invariant the traffic ledger certifies.
//!
//! Randomness is derived per (purpose, epoch, worker, iteration), so a run
//! is bit-identical whether workers execute sequentially or on threads, and
//! across repeated invocations with the same config.

mod report;
mod traffic;

pub use report::{format_row, write_metrics_csv, EpochRow, TrainReport, METRICS_HEADER};
pub use traffic::{conventional_traffic_estimate, IterationTraffic, TrafficLedger};

use std::str::FromStr;
use std::time::Instant;

use crate::correction::{
    apply_correction, batch_factor, batch_factor_uniform, node_weights_for_batch, CorrectionConfig,
    CorrectionKind, SumDomain,
};
use crate::error::{Error, Result};
use crate::graph::{Graph, Split};
use crate::model::{
    init_params, loss_and_grad, Arch, GradVector, ModelParams, Regime,
};
use crate::partition::{
    build_partition, make_chunks, ChunkAssignment, ChunkStrategy, Partition, PartitionMode,
};
use crate::rng::stream;
use crate::sampler::{epoch_iterator, full_graph_batch, sample_batch};
use crate::schedule::sweep_schedule;

/// Everything a training run needs. Field names double as config-file keys.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub arch: Arch,
    pub depth: usize,
    /// Per-hop sample caps, seed side first (`fanouts[0]` bounds the seeds'
    /// immediate neighbors).
    pub fanouts: Vec<usize>,
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub epochs: u32,
    pub chunks: u32,
    pub workers: u32,
    pub phases_max: u32,
    pub correction: CorrectionConfig,
    pub partition_mode: PartitionMode,
    pub chunk_strategy: ChunkStrategy,
    pub fixed_partitions: bool,
    pub seed: u64,
    /// Record wall-clock seconds in the report. Off by default so reports
    /// are byte-identical across runs.
    pub timing: bool,
    /// Execute workers within a phase on threads. Results are identical to
    /// the sequential path either way.
    pub parallel_workers: bool,
    pub deficit_threshold: f64,
    pub streak_threshold: u32,
    pub ema_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: Arch::Gcn,
            depth: 2,
            fanouts: vec![10, 10],
            hidden_dim: 128,
            learning_rate: 0.003,
            dropout: 0.5,
            batch_size: 32,
            epochs: 10,
            chunks: 4,
            workers: 4,
            phases_max: 4,
            correction: CorrectionConfig::new(CorrectionKind::BatchResampling, SumDomain::AllTargets),
            partition_mode: PartitionMode::Halo1,
            chunk_strategy: ChunkStrategy::BfsGrow,
            fixed_partitions: false,
            seed: 17,
            timing: false,
            parallel_workers: false,
            deficit_threshold: 0.5,
            streak_threshold: 20,
            ema_decay: 0.9,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.depth != self.fanouts.len() {
            return Err(Error::Config(format!(
                "depth {} needs exactly that many fanouts, got {}",
                self.depth,
                self.fanouts.len()
            )));
        }
        if self.fanouts.iter().any(|&f| f == 0) {
            return Err(Error::Config("fanouts must be positive".into()));
        }
        if self.chunks < 2 {
            return Err(Error::Config("need at least 2 chunks".into()));
        }
        if !(1 <= self.phases_max && self.phases_max <= self.workers && self.workers <= self.chunks)
        {
            return Err(Error::Config(format!(
                "need 1 <= phases_max <= workers <= chunks, got {} <= {} <= {}",
                self.phases_max, self.workers, self.chunks
            )));
        }
        if self.hidden_dim == 0 || self.batch_size == 0 {
            return Err(Error::Config("hidden_dim and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("bad learning rate {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::Config(format!("ema_decay {} outside [0, 1)", self.ema_decay)));
        }
        Ok(())
    }

    /// Layer widths for a labeled graph: input features, `depth - 1` hidden
    /// layers, classes.
    pub fn model_dims(&self, graph: &Graph) -> Result<Vec<usize>> {
        let classes = graph.num_classes();
        if classes == 0 {
            return Err(Error::InvalidParameter("training needs labels".into()));
        }
        let mut dims = vec![graph.feature_dim()];
        dims.extend(std::iter::repeat(self.hidden_dim).take(self.depth - 1));
        dims.push(classes);
        Ok(dims)
    }

    /// Fanouts reordered to match layer indexing (layer 0 is farthest from
    /// the seeds).
    fn fanouts_by_layer(&self) -> Vec<usize> {
        let mut f = self.fanouts.clone();
        f.reverse();
        f
    }
}

/// Tracks the coverage deficit and decides when the current super-epoch has
/// run its course. The monitored statistic is the uniform coverage factor
/// (mean d_local / d_global over the batch), regardless of which correction
/// the run applies, so the deficit is a coverage fraction in [0, 1] even
/// when the applied factor is an inverse-overhead scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub super_epoch: u32,
    pub epochs_in_super_epoch: u32,
    pub target_length: u32,
    pub ema: f64,
    seeded: bool,
    pub deficit_streak: u32,
    pub deficit_threshold: f64,
    pub streak_threshold: u32,
    pub ema_decay: f64,
    pub fixed_partitions: bool,
}

impl ControllerState {
    pub fn new(config: &TrainConfig) -> ControllerState {
        // One sweep cycle has chunks - 1 super-epochs' worth of fresh pair
        // combinations per worker; spreading the epoch budget across them
        // gives each combination equal training time.
        let target_length = config.epochs.div_ceil(config.chunks.saturating_sub(1).max(1)).max(1);
        ControllerState {
            super_epoch: 0,
            epochs_in_super_epoch: 0,
            target_length,
            ema: 1.0,
            seeded: false,
            deficit_streak: 0,
            deficit_threshold: config.deficit_threshold,
            streak_threshold: config.streak_threshold,
            ema_decay: config.ema_decay,
            fixed_partitions: config.fixed_partitions,
        }
    }

    pub fn deficit(&self) -> f64 {
        1.0 - self.ema
    }

    /// Feeds one batch's coverage factor into the running average.
    pub fn observe_factor(&mut self, factor: f64) {
        if self.seeded {
            self.ema = self.ema_decay * self.ema + (1.0 - self.ema_decay) * factor;
        } else {
            self.ema = factor;
            self.seeded = true;
        }
        if self.deficit() > self.deficit_threshold {
            self.deficit_streak += 1;
        } else {
            self.deficit_streak = 0;
        }
    }

    pub fn finished_epoch(&mut self) {
        self.epochs_in_super_epoch += 1;
    }

    /// True when the super-epoch should advance: its epoch budget is spent,
    /// or the coverage deficit has persisted past the streak threshold.
    pub fn should_switch(&self) -> bool {
        if self.fixed_partitions {
            return false;
        }
        self.epochs_in_super_epoch >= self.target_length
            || (self.deficit_streak >= self.streak_threshold
                && self.deficit() > self.deficit_threshold)
    }

    pub fn advance(&mut self) {
        self.super_epoch += 1;
        self.epochs_in_super_epoch = 0;
        self.deficit_streak = 0;
    }
}

/// Elementwise mean of congruent gradients, accumulated in the order given
/// (callers pass worker-id order, which fixes the floating-point result).
pub fn all_reduce(grads: &[GradVector]) -> Result<GradVector> {
    let first = grads
        .first()
        .ok_or_else(|| Error::InvalidParameter("all_reduce over no gradients".into()))?;
    for g in grads {
        if g.layout_id != first.layout_id || g.values.len() != first.values.len() {
            return Err(Error::LayoutMismatch(format!(
                "gradient layouts differ ({:#x} vs {:#x})",
                g.layout_id, first.layout_id
            )));
        }
    }
    let mut mean = GradVector { values: vec![0.0; first.values.len()], layout_id: first.layout_id };
    for g in grads {
        for (m, v) in mean.values.iter_mut().zip(&g.values) {
            *m += v;
        }
    }
    let inv = 1.0 / grads.len() as f64;
    for m in &mut mean.values {
        *m *= inv;
        if !m.is_finite() {
            return Err(Error::NonFinite("reduced gradient".into()));
        }
    }
    Ok(mean)
}

/// Plain SGD update.
pub fn optimizer_step(params: &mut ModelParams, grad: &GradVector, lr: f64) -> Result<()> {
    if grad.layout_id != params.layout_id() {
        return Err(Error::LayoutMismatch("gradient does not match parameter layout".into()));
    }
    if grad.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient in optimizer step".into()));
    }
    for (p, g) in params.theta_mut().iter_mut().zip(&grad.values) {
        *p -= lr * g;
    }
    Ok(())
}

/// What one worker contributes to an iteration.
struct WorkerOutput {
    grad: GradVector,
    loss: f64,
    applied_factor: f64,
    monitor_factor: f64,
}

/// A worker's state for the current phase: its partition and its epoch batch
/// stream (seed lists, cycled when another worker has more batches).
struct ActiveWorker {
    id: u32,
    partition: Partition,
    batches: Vec<Vec<u32>>,
}

fn worker_iteration(
    worker: &ActiveWorker,
    batch_seeds: &[u32],
    graph: &Graph,
    params: &ModelParams,
    config: &TrainConfig,
    fanouts_by_layer: &[usize],
    monitor: &CorrectionConfig,
    epoch: u32,
    iteration: usize,
) -> Result<WorkerOutput> {
    let labels = graph.labels().expect("validated at train start");
    let mut sample_rng =
        stream(config.seed, "sample", &[epoch as u64, worker.id as u64, iteration as u64]);
    let batch =
        sample_batch(&worker.partition, labels, batch_seeds, fanouts_by_layer, &mut sample_rng)?;

    let weights = (config.correction.kind == CorrectionKind::NodeLevel)
        .then(|| node_weights_for_batch(&batch.stats, worker.partition.num_local()));

    let mut dropout_rng =
        stream(config.seed, "dropout", &[epoch as u64, worker.id as u64, iteration as u64]);
    let mut regime = if config.dropout > 0.0 {
        Regime::Train { dropout: config.dropout, rng: &mut dropout_rng }
    } else {
        Regime::Eval
    };
    let (loss, mut grad) = loss_and_grad(
        &batch,
        params,
        graph.features(),
        graph.feature_dim(),
        &mut regime,
        weights.as_deref(),
    )?;

    let applied_factor = batch_factor(&batch.stats, &config.correction)?;
    apply_correction(&mut grad, applied_factor)?;
    let monitor_factor = batch_factor_uniform(&batch.stats, monitor)?;
    Ok(WorkerOutput { grad, loss, applied_factor, monitor_factor })
}

/// Full-graph evaluation: exact neighborhoods, no dropout, no isolation.
/// Returns (train, valid, test) accuracy and the mean cross-entropy over
/// train nodes.
fn evaluate(graph: &Graph, params: &ModelParams) -> Result<(f64, f64, f64, f64)> {
    let n = graph.num_nodes();
    let all: Vec<u32> = (0..n as u32).collect();
    let batch = full_graph_batch(graph, params.depth(), &all)?;
    let (logits, _) = crate::model::forward(
        &batch,
        params,
        graph.features(),
        graph.feature_dim(),
        &mut Regime::Eval,
        None,
    )?;
    let classes = params.num_classes();
    let labels = graph
        .labels()
        .ok_or_else(|| Error::InvalidParameter("evaluation needs labels".into()))?;
    let split = graph
        .split()
        .ok_or_else(|| Error::InvalidParameter("evaluation needs a split".into()))?;

    let mut hits = [0usize; 3];
    let mut totals = [0usize; 3];
    let mut train_loss = 0.0;
    for v in 0..n {
        let row = &logits[v * classes..(v + 1) * classes];
        let mut best = 0usize;
        for c in 1..classes {
            if row[c] > row[best] {
                best = c;
            }
        }
        let which = match split[v] {
            Split::Train => 0,
            Split::Valid => 1,
            Split::Test => 2,
        };
        totals[which] += 1;
        if best == labels[v] as usize {
            hits[which] += 1;
        }
        if which == 0 {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = row.iter().map(|&x| (x - max).exp()).sum();
            train_loss += denom.ln() + max - row[labels[v] as usize];
        }
    }
    let acc = |i: usize| if totals[i] == 0 { 0.0 } else { hits[i] as f64 / totals[i] as f64 };
    let loss = if totals[0] == 0 { 0.0 } else { train_loss / totals[0] as f64 };
    Ok((acc(0), acc(1), acc(2), loss))
}

/// Bytes moved when a chunk's features and adjacency are loaded onto a
/// worker: 4 bytes per feature scalar, 8 per adjacency slot (one offset plus
/// the neighbor list).
fn chunk_load_bytes(graph: &Graph, chunks: &ChunkAssignment, chunk: u32) -> u64 {
    chunks
        .members(chunk)
        .iter()
        .map(|&v| {
            graph.feature_dim() as u64 * 4 + (1 + graph.degree(v).unwrap_or(0) as u64) * 8
        })
        .sum()
}

/// Bytes to realize `new` pairs given `old` ones: each worker loads only the
/// chunks it does not already hold. `old = None` means the initial load.
fn repartition_bytes(
    graph: &Graph,
    chunks: &ChunkAssignment,
    old: Option<&[(u32, u32)]>,
    new: &[(u32, u32)],
) -> u64 {
    let mut total = 0u64;
    for (w, &(base, swept)) in new.iter().enumerate() {
        let held: Vec<u32> = match old {
            Some(pairs) => vec![pairs[w].0, pairs[w].1],
            None => Vec::new(),
        };
        for c in [base, swept] {
            if !held.contains(&c) {
                total += chunk_load_bytes(graph, chunks, c);
            }
        }
    }
    total
}

/// Runs the full training loop, invoking `on_row` as each epoch row is
/// finalized (the CLI streams rows to disk so an aborted run still leaves a
/// usable partial report).
pub fn train_with<F>(graph: &Graph, config: &TrainConfig, mut on_row: F) -> Result<TrainReport>
where
    F: FnMut(&EpochRow) -> Result<()>,
{
    config.validate()?;
    if graph.labels().is_none() || graph.split().is_none() {
        return Err(Error::InvalidParameter("training needs a labeled, split graph".into()));
    }
    let dims = config.model_dims(graph)?;
    let fanouts_by_layer = config.fanouts_by_layer();
    let monitor = CorrectionConfig {
        kind: CorrectionKind::BatchUniform,
        ..config.correction
    };

    let chunks = make_chunks(graph, config.chunks as usize, config.chunk_strategy, config.seed)?;
    let schedule = sweep_schedule(config.chunks, config.workers)?;
    let mut params = init_params(config.arch, &dims, config.seed)?;
    let theta_bytes = params.theta().len() as u64 * 8;

    let mut controller = ControllerState::new(config);
    let mut ledger = TrafficLedger::default();
    let mut report = TrainReport::new(config.clone());
    let mut current_pairs: Vec<(u32, u32)> = schedule.assignments(0).to_vec();
    let mut pending_load = repartition_bytes(graph, &chunks, None, &current_pairs);
    let mut peak_resident = 0u32;

    let start = Instant::now();
    let clock = |enabled: bool, from: f64| -> f64 {
        if enabled {
            start.elapsed().as_secs_f64() - from
        } else {
            0.0
        }
    };

    // Row 0: the untouched model, evaluated before any partitioning effect.
    {
        let t0 = clock(config.timing, 0.0);
        let (train_acc, valid_acc, test_acc, loss) = evaluate(graph, &params)?;
        let row = EpochRow {
            epoch: 0,
            super_epoch: 0,
            phases: 0,
            loss,
            train_acc,
            valid_acc,
            test_acc,
            coverage_factor_mean: 1.0,
            grad_bytes: 0,
            remote_bytes: 0,
            repartition_bytes: 0,
            seconds: clock(config.timing, t0),
        };
        on_row(&row)?;
        report.rows.push(row);
    }

    for epoch in 1..=config.epochs {
        let epoch_start = clock(config.timing, 0.0);

        if epoch > 1 && controller.should_switch() {
            controller.advance();
            let next = schedule.assignments(controller.super_epoch as usize).to_vec();
            pending_load += repartition_bytes(graph, &chunks, Some(&current_pairs), &next);
            current_pairs = next;
        }
        let epoch_repartition = std::mem::take(&mut pending_load);

        let phase_count = config.workers.div_ceil(config.phases_max);
        let mut epoch_loss = 0.0;
        let mut factor_sum = 0.0;
        let mut contributions = 0usize;
        let worker_ids: Vec<u32> = (0..config.workers).collect();

        for phase_workers in worker_ids.chunks(config.phases_max as usize) {
            let mut active = Vec::with_capacity(phase_workers.len());
            for &w in phase_workers {
                let (base, swept) = current_pairs[w as usize];
                let partition = build_partition(graph, &chunks, base, swept, config.partition_mode)
                    .map_err(|e| e.in_worker(w))?;
                let mut shuffle_rng =
                    stream(config.seed, "epoch-shuffle", &[epoch as u64, w as u64]);
                let batches = epoch_iterator(&partition, config.batch_size, &mut shuffle_rng)
                    .map_err(|e| e.in_worker(w))?;
                if batches.is_empty() {
                    return Err(Error::InvalidParameter(format!(
                        "worker {w}: partition ({base}, {swept}) has no train nodes"
                    )));
                }
                active.push(ActiveWorker { id: w, partition, batches });
            }
            peak_resident = peak_resident.max(active.len() as u32);

            let iterations = active.iter().map(|a| a.batches.len()).max().unwrap_or(0);
            for iteration in 0..iterations {
                let outputs = run_iteration(
                    &active,
                    graph,
                    &params,
                    config,
                    &fanouts_by_layer,
                    &monitor,
                    epoch,
                    iteration,
                )?;
                let grads: Vec<GradVector> = outputs.iter().map(|o| o.grad.clone()).collect();
                let reduced = all_reduce(&grads)?;
                optimizer_step(&mut params, &reduced, config.learning_rate)?;
                for o in &outputs {
                    epoch_loss += o.loss;
                    factor_sum += o.applied_factor;
                    contributions += 1;
                    controller.observe_factor(o.monitor_factor);
                }
                ledger.record_iteration(IterationTraffic {
                    epoch,
                    gradient_bytes: active.len() as u64 * theta_bytes,
                    remote_feature_bytes: 0,
                    remote_activation_bytes: 0,
                });
            }
        }

        controller.finished_epoch();
        let (train_acc, valid_acc, test_acc, _) = evaluate(graph, &params)?;
        let rollup = ledger.epoch_rollup(epoch);
        let row = EpochRow {
            epoch,
            super_epoch: controller.super_epoch,
            phases: phase_count,
            loss: epoch_loss / contributions.max(1) as f64,
            train_acc,
            valid_acc,
            test_acc,
            coverage_factor_mean: factor_sum / contributions.max(1) as f64,
            grad_bytes: rollup.gradient_bytes,
            remote_bytes: rollup.remote_feature_bytes + rollup.remote_activation_bytes,
            repartition_bytes: epoch_repartition,
            seconds: clock(config.timing, epoch_start),
        };
        on_row(&row)?;
        report.rows.push(row);
    }

    report.peak_resident_partitions = peak_resident;
    report.final_params = Some(params);
    report.ledger = ledger;
    Ok(report)
}

/// One lock-step iteration across the active workers, sequential or
/// threaded; outputs arrive in worker order either way.
#[allow(clippy::too_many_arguments)]
fn run_iteration(
    active: &[ActiveWorker],
    graph: &Graph,
    params: &ModelParams,
    config: &TrainConfig,
    fanouts_by_layer: &[usize],
    monitor: &CorrectionConfig,
    epoch: u32,
    iteration: usize,
) -> Result<Vec<WorkerOutput>> {
    let job = |worker: &ActiveWorker| -> Result<WorkerOutput> {
        let seeds = &worker.batches[iteration % worker.batches.len()];
        worker_iteration(
            worker,
            seeds,
            graph,
            params,
            config,
            fanouts_by_layer,
            monitor,
            epoch,
            iteration,
        )
        .map_err(|e| e.in_worker(worker.id))
    };

    if config.parallel_workers && active.len() > 1 {
        let job = &job;
        std::thread::scope(|scope| {
            let handles: Vec<_> = active.iter().map(|w| scope.spawn(move || job(w))).collect();
            handles.into_iter().map(|h| h.join().expect("worker thread panicked")).collect()
        })
    } else {
        active.iter().map(job).collect()
    }
}

/// Trains and returns the report without streaming rows anywhere.
pub fn train(graph: &Graph, config: &TrainConfig) -> Result<TrainReport> {
    train_with(graph, config, |_| Ok(()))
}

/// Parses flat `key = value` entries into a [`TrainConfig`] starting from
/// defaults. Unknown keys are reported by name.
pub fn train_config_from_pairs<'a, I>(pairs: I) -> Result<TrainConfig>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut config = TrainConfig::default();
    let mut sum_domain_set = false;
    let mut mode_seen = false;
    for (key, value) in pairs {
        let bad = |what: &str| Error::Config(format!("key `{key}`: {what} (got `{value}`)"));
        match key {
            "arch" => config.arch = Arch::from_str(value)?,
            "depth" => config.depth = value.parse().map_err(|_| bad("expected integer"))?,
            "fanouts" => {
                config.fanouts = value
                    .split(',')
                    .map(|s| s.trim().parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("expected comma-separated integers"))?;
            }
            "hidden_dim" => config.hidden_dim = value.parse().map_err(|_| bad("expected integer"))?,
            "learning_rate" => {
                config.learning_rate = value.parse().map_err(|_| bad("expected float"))?
            }
            "dropout" => config.dropout = value.parse().map_err(|_| bad("expected float"))?,
            "batch_size" => config.batch_size = value.parse().map_err(|_| bad("expected integer"))?,
            "epochs" => config.epochs = value.parse().map_err(|_| bad("expected integer"))?,
            "chunks" => config.chunks = value.parse().map_err(|_| bad("expected integer"))?,
            "workers" => config.workers = value.parse().map_err(|_| bad("expected integer"))?,
            "phases_max" => config.phases_max = value.parse().map_err(|_| bad("expected integer"))?,
            "correction" => config.correction.kind = CorrectionKind::from_str(value)?,
            "sum_domain" => {
                config.correction.sum_domain = SumDomain::from_str(value)?;
                sum_domain_set = true;
            }
            "epsilon" => config.correction.epsilon = value.parse().map_err(|_| bad("expected float"))?,
            "c_max" => config.correction.c_max = value.parse().map_err(|_| bad("expected float"))?,
            "partition_mode" => {
                config.partition_mode = PartitionMode::from_str(value)?;
                mode_seen = true;
            }
            "chunk_strategy" => config.chunk_strategy = ChunkStrategy::from_str(value)?,
            "fixed_partitions" => {
                config.fixed_partitions = value.parse().map_err(|_| bad("expected true/false"))?
            }
            "seed" => config.seed = value.parse().map_err(|_| bad("expected integer"))?,
            "timing" => config.timing = value.parse().map_err(|_| bad("expected true/false"))?,
            "parallel_workers" => {
                config.parallel_workers = value.parse().map_err(|_| bad("expected true/false"))?
            }
            "deficit_threshold" => {
                config.deficit_threshold = value.parse().map_err(|_| bad("expected float"))?
            }
            "streak_threshold" => {
                config.streak_threshold = value.parse().map_err(|_| bad("expected integer"))?
            }
            "ema_decay" => config.ema_decay = value.parse().map_err(|_| bad("expected float"))?,
            other => return Err(Error::Config(format!("unknown training key `{other}`"))),
        }
    }
    if !sum_domain_set && mode_seen {
        // Induced-core hides neighbors of seeds directly, so the seed-level
        // statistics carry the signal; halo-1 defers the loss to deeper
        // hops, where only the all-targets domain sees it.
        config.correction.sum_domain = match config.partition_mode {
            PartitionMode::InducedCore => SumDomain::Seeds,
            PartitionMode::Halo1 => SumDomain::AllTargets,
        };
    }
    Ok(config)
}
