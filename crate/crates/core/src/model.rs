//! Two-architecture GNN with hand-written reverse-mode gradients.
//!
//! - `gcn`: h'_v = act(W * sum_{u in S(v) + v} h_u / sqrt((deg(v)+1)(deg(u)+1)))
//!   where deg is the sampled in-batch degree (realized source-list length
//!   for targets, visible degree for source-only nodes) and the +1 is the
//!   virtual self-loop.
//! - `sage`: h'_v = act(W_self h_v + W_nbr mean_{u in S(v)} h_u), zero
//!   neighbor term when the sample is empty.
//!
//! Hidden layers use ReLU, the output layer is linear, and the loss is mean
//! softmax cross-entropy over the seed list. Per-target multipliers on the
//! neighbor aggregation (used by node-level coverage correction) are applied
//! inside the same forward/backward pair, so the gradient is exact for the
//! weighted objective too. All math is in f64; features widen from f32 on
//! gather. Accumulation order is fixed, so identical inputs give bit
//! identical results.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::binio::*;
use crate::error::{Error, Result};
use crate::rng::{stream, stream_seed};
use crate::sampler::MiniBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    Gcn,
    Sage,
}

impl std::str::FromStr for Arch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(Arch::Gcn),
            "sage" => Ok(Arch::Sage),
            other => Err(Error::Config(format!("unknown architecture `{other}`"))),
        }
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Arch::Gcn => "gcn",
            Arch::Sage => "sage",
        })
    }
}

/// Shape and flat offset of one weight matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixSpec {
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

/// Model parameters: architecture, layer dimensions
/// `[input, hidden.., classes]`, and the flat weight vector. No biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    arch: Arch,
    dims: Vec<usize>,
    theta: Vec<f64>,
}

/// Flat gradient with a fingerprint of the layout it was computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct GradVector {
    pub values: Vec<f64>,
    pub layout_id: u64,
}

impl GradVector {
    pub fn zeros_like(params: &ModelParams) -> GradVector {
        GradVector { values: vec![0.0; params.theta.len()], layout_id: params.layout_id() }
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }
}

/// Matrices per layer: one for `gcn`, (self, neighbor) for `sage`.
fn matrices_per_layer(arch: Arch) -> usize {
    match arch {
        Arch::Gcn => 1,
        Arch::Sage => 2,
    }
}

impl ModelParams {
    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn depth(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn num_classes(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    /// Total flat length implied by `arch` and `dims`.
    pub fn flat_len(arch: Arch, dims: &[usize]) -> usize {
        let per = matrices_per_layer(arch);
        dims.windows(2).map(|w| per * w[0] * w[1]).sum()
    }

    /// Flat layout, one [`MatrixSpec`] per matrix in layer order (for `sage`:
    /// self then neighbor within each layer).
    pub fn layout(&self) -> Vec<MatrixSpec> {
        let mut specs = Vec::new();
        let mut offset = 0;
        for w in self.dims.windows(2) {
            let (rows, cols) = (w[1], w[0]);
            for _ in 0..matrices_per_layer(self.arch) {
                specs.push(MatrixSpec { rows, cols, offset });
                offset += rows * cols;
            }
        }
        specs
    }

    /// Fingerprint of (arch, dims); gradients carry it so mismatched
    /// aggregation is caught instead of silently mixing layouts.
    pub fn layout_id(&self) -> u64 {
        let salts: Vec<u64> = self.dims.iter().map(|&d| d as u64).collect();
        stream_seed(
            match self.arch {
                Arch::Gcn => 1,
                Arch::Sage => 2,
            },
            "layout",
            &salts,
        )
    }

    fn matrix<'a>(&'a self, spec: MatrixSpec) -> &'a [f64] {
        &self.theta[spec.offset..spec.offset + spec.rows * spec.cols]
    }
}

/// Glorot-uniform initialization: each matrix is drawn from
/// U(-a, a) with a = sqrt(6 / (fan_in + fan_out)). Deterministic per seed.
pub fn init_params(arch: Arch, dims: &[usize], seed: u64) -> Result<ModelParams> {
    if dims.len() < 2 {
        return Err(Error::InvalidParameter("dims needs at least input and output".into()));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::InvalidParameter("zero-width layer".into()));
    }
    let mut rng = stream(seed, "init", &[]);
    let mut theta = Vec::with_capacity(ModelParams::flat_len(arch, dims));
    for w in dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for _ in 0..matrices_per_layer(arch) * fan_in * fan_out {
            theta.push(rng.random_range(-a..a));
        }
    }
    Ok(ModelParams { arch, dims: dims.to_vec(), theta })
}

/// Builds params from an existing flat vector (checkpoint restore, tests).
pub fn params_from_flat(arch: Arch, dims: &[usize], theta: Vec<f64>) -> Result<ModelParams> {
    if theta.len() != ModelParams::flat_len(arch, dims) {
        return Err(Error::DimensionMismatch(format!(
            "flat length {} does not match layout {}",
            theta.len(),
            ModelParams::flat_len(arch, dims)
        )));
    }
    Ok(ModelParams { arch, dims: dims.to_vec(), theta })
}

/// Per-layer activation cache for the backward pass.
pub struct Activations {
    /// Post-dropout inputs per layer (`nodes x in_dim`).
    inputs: Vec<Vec<f64>>,
    /// Dropout multipliers (empty in eval mode).
    masks: Vec<Vec<f64>>,
    /// Aggregated messages per layer (`targets x in_dim` for gcn, neighbor
    /// means for sage).
    aggregates: Vec<Vec<f64>>,
    /// Pre-activations per layer (`targets x out_dim`).
    preacts: Vec<Vec<f64>>,
}

/// Dropout behavior for a forward pass.
pub enum Regime<'r> {
    Eval,
    Train { dropout: f64, rng: &'r mut ChaCha8Rng },
}

/// Optional per-target multipliers on the neighbor aggregation, indexed by
/// partition-local node id. Self paths are never scaled.
pub type NodeWeights<'a> = Option<&'a [f64]>;

fn gather_features(batch: &MiniBatch, features: &[f32], dim: usize) -> Result<Vec<f64>> {
    let mut h = Vec::with_capacity(batch.layer0_globals.len() * dim);
    for &g in &batch.layer0_globals {
        let start = g as usize * dim;
        if start + dim > features.len() {
            return Err(Error::DimensionMismatch(format!(
                "feature row {g} out of range"
            )));
        }
        h.extend(features[start..start + dim].iter().map(|&x| x as f64));
    }
    Ok(h)
}

fn validate(batch: &MiniBatch, params: &ModelParams, feature_dim: usize) -> Result<()> {
    if batch.depth() != params.depth() {
        return Err(Error::DimensionMismatch(format!(
            "batch depth {} vs model depth {}",
            batch.depth(),
            params.depth()
        )));
    }
    if feature_dim != params.dims[0] {
        return Err(Error::DimensionMismatch(format!(
            "feature dim {feature_dim} vs model input {}",
            params.dims[0]
        )));
    }
    Ok(())
}

/// Runs the network over a batch. Returns logits for the final layer's
/// targets (row-major `num_outputs x classes`) plus the cache needed by
/// [`loss_and_grad`]. `weights` scales each target's neighbor aggregation.
pub fn forward(
    batch: &MiniBatch,
    params: &ModelParams,
    features: &[f32],
    feature_dim: usize,
    regime: &mut Regime,
    weights: NodeWeights,
) -> Result<(Vec<f64>, Activations)> {
    validate(batch, params, feature_dim)?;
    let layout = params.layout();
    let mut cache = Activations {
        inputs: Vec::with_capacity(batch.depth()),
        masks: Vec::with_capacity(batch.depth()),
        aggregates: Vec::with_capacity(batch.depth()),
        preacts: Vec::with_capacity(batch.depth()),
    };

    let mut h = gather_features(batch, features, feature_dim)?;
    for (level, layer) in batch.layers.iter().enumerate() {
        let in_dim = params.dims[level];
        let out_dim = params.dims[level + 1];
        debug_assert_eq!(h.len(), layer.nodes.len() * in_dim);

        let mask = match regime {
            Regime::Train { dropout, rng } if *dropout > 0.0 => {
                let p = *dropout;
                if !(0.0..1.0).contains(&p) {
                    return Err(Error::InvalidParameter(format!("dropout {p} outside [0, 1)")));
                }
                let keep = 1.0 - p;
                let mask: Vec<f64> = (0..h.len())
                    .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                for (x, m) in h.iter_mut().zip(&mask) {
                    *x *= m;
                }
                mask
            }
            _ => Vec::new(),
        };

        let targets = layer.num_targets;
        let mut agg = vec![0.0f64; targets * in_dim];
        match params.arch {
            Arch::Gcn => {
                for t in 0..targets {
                    let w_t = weights.map_or(1.0, |w| w[layer.nodes[t] as usize]);
                    let self_norm = 1.0 / (layer.sampled_degree(t) as f64 + 1.0);
                    let row = &mut agg[t * in_dim..(t + 1) * in_dim];
                    for (d, slot) in row.iter_mut().enumerate() {
                        *slot = self_norm * h[t * in_dim + d];
                    }
                    let denom_t = (layer.sampled_degree(t) as f64 + 1.0).sqrt();
                    for &pos in layer.sources_of(t) {
                        let pos = pos as usize;
                        let norm =
                            w_t / (denom_t * (layer.sampled_degree(pos) as f64 + 1.0).sqrt());
                        for d in 0..in_dim {
                            row[d] += norm * h[pos * in_dim + d];
                        }
                    }
                }
            }
            Arch::Sage => {
                for t in 0..targets {
                    let sources = layer.sources_of(t);
                    if sources.is_empty() {
                        continue;
                    }
                    let inv = 1.0 / sources.len() as f64;
                    let row = &mut agg[t * in_dim..(t + 1) * in_dim];
                    for &pos in sources {
                        let pos = pos as usize;
                        for d in 0..in_dim {
                            row[d] += inv * h[pos * in_dim + d];
                        }
                    }
                    if let Some(w) = weights {
                        let w_t = w[layer.nodes[t] as usize];
                        for d in row.iter_mut() {
                            *d *= w_t;
                        }
                    }
                }
            }
        }

        let mut z = vec![0.0f64; targets * out_dim];
        match params.arch {
            Arch::Gcn => {
                let w = params.matrix(layout[level]);
                for t in 0..targets {
                    matvec(w, out_dim, in_dim, &agg[t * in_dim..(t + 1) * in_dim], &mut z[t * out_dim..(t + 1) * out_dim]);
                }
            }
            Arch::Sage => {
                let w_self = params.matrix(layout[2 * level]);
                let w_nbr = params.matrix(layout[2 * level + 1]);
                for t in 0..targets {
                    let zrow = &mut z[t * out_dim..(t + 1) * out_dim];
                    matvec(w_self, out_dim, in_dim, &h[t * in_dim..(t + 1) * in_dim], zrow);
                    matvec_add(w_nbr, out_dim, in_dim, &agg[t * in_dim..(t + 1) * in_dim], zrow);
                }
            }
        }

        let last = level + 1 == batch.depth();
        let h_out = if last { z.clone() } else { z.iter().map(|&x| x.max(0.0)).collect() };

        cache.inputs.push(h);
        cache.masks.push(mask);
        cache.aggregates.push(agg);
        cache.preacts.push(z);
        h = h_out;
    }

    Ok((h, cache))
}

fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let mut acc = 0.0;
        let row = &w[r * cols..(r + 1) * cols];
        for c in 0..cols {
            acc += row[c] * x[c];
        }
        out[r] = acc;
    }
}

fn matvec_add(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let mut acc = 0.0;
        let row = &w[r * cols..(r + 1) * cols];
        for c in 0..cols {
            acc += row[c] * x[c];
        }
        out[r] += acc;
    }
}

/// `W^T d` accumulated into `out`.
fn matvec_t_add(w: &[f64], rows: usize, cols: usize, d: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let dr = d[r];
        if dr == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for c in 0..cols {
            out[c] += dr * row[c];
        }
    }
}

/// Mean softmax cross-entropy over the seed list and its exact gradient.
/// The dropout draws consumed here match a standalone [`forward`] call with
/// the same generator state.
pub fn loss_and_grad(
    batch: &MiniBatch,
    params: &ModelParams,
    features: &[f32],
    feature_dim: usize,
    regime: &mut Regime,
    weights: NodeWeights,
) -> Result<(f64, GradVector)> {
    let (logits, cache) = forward(batch, params, features, feature_dim, regime, weights)?;
    let classes = params.num_classes();
    let outputs = batch.num_outputs();
    let n = batch.seeds.len() as f64;

    let mut loss = 0.0;
    let mut dlogits = vec![0.0f64; outputs * classes];
    for (i, &pos) in batch.seed_positions.iter().enumerate() {
        let label = batch.seed_labels[i] as usize;
        if label >= classes {
            return Err(Error::InvalidParameter(format!(
                "label {label} outside {classes} classes"
            )));
        }
        let row = &logits[pos as usize * classes..(pos as usize + 1) * classes];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &x in row {
            denom += (x - max).exp();
        }
        let log_denom = denom.ln() + max;
        loss += (log_denom - row[label]) / n;
        let drow = &mut dlogits[pos as usize * classes..(pos as usize + 1) * classes];
        for c in 0..classes {
            let p = (row[c] - max).exp() / denom;
            drow[c] += (p - if c == label { 1.0 } else { 0.0 }) / n;
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }

    let layout = params.layout();
    let mut grad = GradVector::zeros_like(params);
    let mut d_out = dlogits;

    for level in (0..batch.depth()).rev() {
        let layer = &batch.layers[level];
        let in_dim = params.dims[level];
        let out_dim = params.dims[level + 1];
        let targets = layer.num_targets;
        let h_in = &cache.inputs[level];
        let agg = &cache.aggregates[level];
        let z = &cache.preacts[level];

        // ReLU backward on hidden layers.
        let mut dz = d_out;
        if level + 1 != batch.depth() {
            for (i, g) in dz.iter_mut().enumerate() {
                if z[i] <= 0.0 {
                    *g = 0.0;
                }
            }
        }

        let mut dh_in = vec![0.0f64; layer.nodes.len() * in_dim];
        match params.arch {
            Arch::Gcn => {
                let w = params.matrix(layout[level]);
                let gw = &mut grad.values[layout[level].offset..layout[level].offset + out_dim * in_dim];
                let mut dagg = vec![0.0f64; in_dim];
                for t in 0..targets {
                    let dzrow = &dz[t * out_dim..(t + 1) * out_dim];
                    let arow = &agg[t * in_dim..(t + 1) * in_dim];
                    for r in 0..out_dim {
                        let dr = dzrow[r];
                        if dr == 0.0 {
                            continue;
                        }
                        let grow = &mut gw[r * in_dim..(r + 1) * in_dim];
                        for c in 0..in_dim {
                            grow[c] += dr * arow[c];
                        }
                    }
                    dagg.iter_mut().for_each(|x| *x = 0.0);
                    matvec_t_add(w, out_dim, in_dim, dzrow, &mut dagg);

                    let w_t = weights.map_or(1.0, |wv| wv[layer.nodes[t] as usize]);
                    let self_norm = 1.0 / (layer.sampled_degree(t) as f64 + 1.0);
                    for d in 0..in_dim {
                        dh_in[t * in_dim + d] += self_norm * dagg[d];
                    }
                    let denom_t = (layer.sampled_degree(t) as f64 + 1.0).sqrt();
                    for &pos in layer.sources_of(t) {
                        let pos = pos as usize;
                        let norm =
                            w_t / (denom_t * (layer.sampled_degree(pos) as f64 + 1.0).sqrt());
                        for d in 0..in_dim {
                            dh_in[pos * in_dim + d] += norm * dagg[d];
                        }
                    }
                }
            }
            Arch::Sage => {
                let (s_spec, n_spec) = (layout[2 * level], layout[2 * level + 1]);
                let w_self = params.matrix(s_spec);
                let w_nbr = params.matrix(n_spec);
                let mut dnbr = vec![0.0f64; in_dim];
                for t in 0..targets {
                    let dzrow = &dz[t * out_dim..(t + 1) * out_dim];
                    let hrow = &h_in[t * in_dim..(t + 1) * in_dim];
                    let arow = &agg[t * in_dim..(t + 1) * in_dim];
                    {
                        let gs = &mut grad.values[s_spec.offset..s_spec.offset + out_dim * in_dim];
                        for r in 0..out_dim {
                            let dr = dzrow[r];
                            if dr == 0.0 {
                                continue;
                            }
                            let grow = &mut gs[r * in_dim..(r + 1) * in_dim];
                            for c in 0..in_dim {
                                grow[c] += dr * hrow[c];
                            }
                        }
                    }
                    {
                        let gn = &mut grad.values[n_spec.offset..n_spec.offset + out_dim * in_dim];
                        for r in 0..out_dim {
                            let dr = dzrow[r];
                            if dr == 0.0 {
                                continue;
                            }
                            let grow = &mut gn[r * in_dim..(r + 1) * in_dim];
                            for c in 0..in_dim {
                                grow[c] += dr * arow[c];
                            }
                        }
                    }
                    matvec_t_add(w_self, out_dim, in_dim, dzrow, &mut dh_in[t * in_dim..(t + 1) * in_dim]);

                    let sources = layer.sources_of(t);
                    if sources.is_empty() {
                        continue;
                    }
                    dnbr.iter_mut().for_each(|x| *x = 0.0);
                    matvec_t_add(w_nbr, out_dim, in_dim, dzrow, &mut dnbr);
                    let w_t = weights.map_or(1.0, |wv| wv[layer.nodes[t] as usize]);
                    let scale = w_t / sources.len() as f64;
                    for &pos in sources {
                        let pos = pos as usize;
                        for d in 0..in_dim {
                            dh_in[pos * in_dim + d] += scale * dnbr[d];
                        }
                    }
                }
            }
        }

        // Undo dropout scaling to reach the previous layer's outputs.
        if !cache.masks[level].is_empty() {
            for (g, m) in dh_in.iter_mut().zip(&cache.masks[level]) {
                *g *= m;
            }
        }
        d_out = dh_in;
    }

    if grad.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    Ok((loss, grad))
}

const CHECKPOINT_MAGIC: [u8; 4] = *b"CKP1";
const CHECKPOINT_VERSION: u32 = 1;

/// Writes arch, dims, and the flat weights; restore is bit-exact.
pub fn save_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&CHECKPOINT_MAGIC)?;
    write_u32(&mut w, CHECKPOINT_VERSION)?;
    w.write_all(&[match params.arch {
        Arch::Gcn => 0u8,
        Arch::Sage => 1u8,
    }])?;
    write_u32(&mut w, params.dims.len() as u32)?;
    for &d in &params.dims {
        write_u64(&mut w, d as u64)?;
    }
    for &v in &params.theta {
        write_f64(&mut w, v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let mut r = BufReader::new(File::open(path)?);
    expect_magic(&mut r, &CHECKPOINT_MAGIC, "checkpoint")?;
    expect_version(&mut r, CHECKPOINT_VERSION, "checkpoint")?;
    let mut byte = [0u8; 1];
    std::io::Read::read_exact(&mut r, &mut byte)?;
    let arch = match byte[0] {
        0 => Arch::Gcn,
        1 => Arch::Sage,
        a => return Err(Error::MalformedInput(format!("checkpoint: bad arch byte {a}"))),
    };
    let ndims = read_u32(&mut r)? as usize;
    if !(2..=16).contains(&ndims) {
        return Err(Error::MalformedInput(format!("checkpoint: implausible dim count {ndims}")));
    }
    let dims: Vec<usize> =
        (0..ndims).map(|_| read_u64(&mut r).map(|v| v as usize)).collect::<Result<_>>()?;
    let len = ModelParams::flat_len(arch, &dims);
    let theta: Vec<f64> = (0..len).map(|_| read_f64(&mut r)).collect::<Result<_>>()?;
    params_from_flat(arch, &dims, theta)
}
