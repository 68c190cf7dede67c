//! Partitioned GNN training where partitions never exchange features or
//! activations, only gradients.
//!
//! The pieces, bottom up:
//!
//! - [`graph`]: CSR graphs, dataset files, and synthetic generators.
//! - [`partition`]: chunking strategies and per-worker isolated partitions.
//! - [`schedule`]: the chunk-sweep rotation that restores edge coverage
//!   across super-epochs, with a verifiable pair-coverage certificate.
//! - [`sampler`]: layered neighbor sampling inside a partition.
//! - [`model`]: GCN and GraphSAGE forward/backward in plain `f64`.
//! - [`correction`]: coverage statistics and the batch correction factors
//!   that undo partition-induced sampling bias.
//! - [`engine`]: phase-parallel training, the controller, byte ledgers, and
//!   the conventional-traffic estimator.
//! - [`oracle`]: brute-force references (finite differences, exhaustive
//!   enumeration, Monte Carlo) that check the estimators numerically.
//! - [`config`]: flat key-value experiment configs shared by the CLI.
//!
//! Everything is deterministic per seed: named RNG streams are derived per
//! purpose and iteration, so results do not depend on thread interleaving.

pub mod config;
pub mod correction;
pub mod engine;
pub mod error;
pub mod graph;
pub mod model;
pub mod oracle;
pub mod partition;
pub mod rng;
pub mod sampler;
pub mod schedule;

mod binio;

pub use error::{Error, Result};
