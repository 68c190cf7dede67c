//! Per-epoch metrics and their CSV serialization.

use std::io::Write;
use std::path::Path;

use crate::engine::{TrafficLedger, TrainConfig};
use crate::error::Result;
use crate::model::ModelParams;

/// One line of the training log. The column set is part of the output
/// contract: downstream tooling joins these files across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: u32,
    pub super_epoch: u32,
    /// Sequential phases the epoch needed (0 for the pre-training row).
    pub phases: u32,
    /// Mean training-batch loss; for row 0, the full-graph train loss.
    pub loss: f64,
    pub train_acc: f64,
    pub valid_acc: f64,
    pub test_acc: f64,
    /// Mean applied correction factor over the epoch's batches.
    pub coverage_factor_mean: f64,
    pub grad_bytes: u64,
    pub remote_bytes: u64,
    pub repartition_bytes: u64,
    pub seconds: f64,
}

/// Everything a run produces: the per-epoch rows, the iteration-level
/// traffic ledger, and the trained parameters.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub rows: Vec<EpochRow>,
    pub ledger: TrafficLedger,
    pub peak_resident_partitions: u32,
    pub final_params: Option<ModelParams>,
}

impl TrainReport {
    pub fn new(config: TrainConfig) -> TrainReport {
        TrainReport {
            config,
            rows: Vec::new(),
            ledger: TrafficLedger::default(),
            peak_resident_partitions: 0,
            final_params: None,
        }
    }

    pub fn final_row(&self) -> Option<&EpochRow> {
        self.rows.last()
    }

    /// Optimizer steps taken, summed over phases and epochs.
    pub fn total_steps(&self) -> u64 {
        self.ledger.iterations.len() as u64
    }
}

pub const METRICS_HEADER: &str = "epoch,super_epoch,phases,loss,train_acc,valid_acc,test_acc,\
                                  coverage_factor_mean,grad_bytes,remote_bytes,repartition_bytes,seconds";

pub fn format_row(row: &EpochRow) -> String {
    format!(
        "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{:.6}",
        row.epoch,
        row.super_epoch,
        row.phases,
        row.loss,
        row.train_acc,
        row.valid_acc,
        row.test_acc,
        row.coverage_factor_mean,
        row.grad_bytes,
        row.remote_bytes,
        row.repartition_bytes,
        row.seconds
    )
}

pub fn write_metrics_csv(path: &Path, rows: &[EpochRow]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{}", METRICS_HEADER)?;
    for row in rows {
        writeln!(out, "{}", format_row(row))?;
    }
    out.flush()?;
    Ok(())
}
