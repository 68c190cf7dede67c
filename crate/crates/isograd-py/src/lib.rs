//! Python bindings: graph construction and I/O, chunk layouts, sweep
//! schedules, training, the conventional-traffic estimator, and the
//! verification suites. Training configuration arrives as keyword
//! arguments with the same names and value syntax as the CLI config keys,
//! so an experiment written in Python reproduces a CLI run exactly.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use isograd::engine::{
    conventional_traffic_estimate, train_config_from_pairs, train_with, EpochRow,
};
use isograd::error::Error;
use isograd::graph::{generate_rmat, generate_sbm, RmatParams, SbmParams, Split};
use isograd::oracle::{
    verify_coverage, verify_gradients, verify_importance_suite, verify_projection_suite,
    verify_unbiasedness, OracleReport,
};
use isograd::partition::ChunkStrategy;
use isograd::schedule::pair_coverage;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        Error::Config(_) | Error::InvalidParameter(_) | Error::MalformedInput(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// An undirected graph with node features and optional labels plus the
/// deterministic train/valid/test split.
#[pyclass(frozen)]
struct Graph {
    inner: isograd::graph::Graph,
}

#[pymethods]
impl Graph {
    /// Stochastic block model: `communities` groups whose members connect
    /// with probability `p_in` inside and `p_out` across; labels are the
    /// community ids.
    #[staticmethod]
    #[pyo3(signature = (communities=4, nodes_per_community=100, p_in=0.1, p_out=0.005,
                        feature_dim=32, feature_signal=1.0, seed=17))]
    fn sbm(
        communities: usize,
        nodes_per_community: usize,
        p_in: f64,
        p_out: f64,
        feature_dim: usize,
        feature_signal: f64,
        seed: u64,
    ) -> PyResult<Graph> {
        let inner = generate_sbm(&SbmParams {
            communities,
            nodes_per_community,
            p_in,
            p_out,
            feature_dim,
            feature_signal,
            seed,
        })
        .map_err(to_py)?;
        Ok(Graph { inner })
    }

    /// Recursive-matrix generator for skewed degree distributions
    /// (unlabeled, so it suits traffic studies rather than training).
    #[staticmethod]
    #[pyo3(signature = (scale=10, edge_factor=8, a=0.57, b=0.19, c=0.19, d=0.05,
                        feature_dim=32, seed=17))]
    #[allow(clippy::too_many_arguments)]
    fn rmat(
        scale: u32,
        edge_factor: usize,
        a: f64,
        b: f64,
        c: f64,
        d: f64,
        feature_dim: usize,
        seed: u64,
    ) -> PyResult<Graph> {
        let inner = generate_rmat(&RmatParams { scale, edge_factor, a, b, c, d, feature_dim, seed })
            .map_err(to_py)?;
        Ok(Graph { inner })
    }

    /// Reads the three dataset files written by `save` (or the CLI's
    /// `generate` command) from a directory.
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Graph> {
        Ok(Graph { inner: isograd::graph::Graph::load_dataset(&dir).map_err(to_py)? })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        std::fs::create_dir_all(&dir)?;
        self.inner.write_dataset(&dir).map_err(to_py)
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.num_edges()
    }

    #[getter]
    fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    fn degree(&self, node: u32) -> PyResult<u32> {
        self.inner.degree(node).map_err(to_py)
    }

    fn neighbors(&self, node: u32) -> PyResult<Vec<u32>> {
        if node as usize >= self.inner.num_nodes() {
            return Err(to_py(Error::OutOfRange {
                index: node as usize,
                limit: self.inner.num_nodes(),
            }));
        }
        Ok(self.inner.neighbors(node).to_vec())
    }

    fn label(&self, node: u32) -> PyResult<Option<u32>> {
        match self.inner.labels() {
            None => Ok(None),
            Some(labels) => labels
                .get(node as usize)
                .copied()
                .map(Some)
                .ok_or_else(|| to_py(Error::OutOfRange {
                    index: node as usize,
                    limit: self.inner.num_nodes(),
                })),
        }
    }

    /// Node counts per split as `{"train": n, "valid": n, "test": n}`.
    fn split_counts<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let counts = PyDict::new(py);
        for (name, which) in [("train", Split::Train), ("valid", Split::Valid), ("test", Split::Test)]
        {
            let n = match self.inner.split() {
                Some(split) => split.iter().filter(|&&s| s == which).count(),
                None => 0,
            };
            counts.set_item(name, n)?;
        }
        Ok(counts)
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(nodes={}, edges={}, feature_dim={}, classes={})",
            self.inner.num_nodes(),
            self.inner.num_edges(),
            self.inner.feature_dim(),
            self.inner.num_classes()
        )
    }
}

/// A static node-to-chunk map; partitions are built from pairs of chunks.
#[pyclass(frozen)]
struct ChunkLayout {
    inner: isograd::partition::ChunkAssignment,
}

#[pymethods]
impl ChunkLayout {
    #[getter]
    fn num_chunks(&self) -> usize {
        self.inner.num_chunks()
    }

    fn owner_of(&self, node: u32) -> PyResult<u32> {
        if node as usize >= self.inner.owners().len() {
            return Err(to_py(Error::OutOfRange {
                index: node as usize,
                limit: self.inner.owners().len(),
            }));
        }
        Ok(self.inner.owner(node))
    }

    fn sizes(&self) -> Vec<usize> {
        self.inner.sizes()
    }

    fn members(&self, chunk: u32) -> PyResult<Vec<u32>> {
        if chunk as usize >= self.inner.num_chunks() {
            return Err(to_py(Error::OutOfRange {
                index: chunk as usize,
                limit: self.inner.num_chunks(),
            }));
        }
        Ok(self.inner.members(chunk))
    }

    fn __repr__(&self) -> String {
        format!("ChunkLayout(chunks={}, sizes={:?})", self.inner.num_chunks(), self.inner.sizes())
    }
}

/// The per-super-epoch rotation of (base, swept) chunk pairs across
/// workers.
#[pyclass(frozen)]
struct Schedule {
    inner: isograd::schedule::SweepSchedule,
}

#[pymethods]
impl Schedule {
    #[getter]
    fn num_chunks(&self) -> u32 {
        self.inner.num_chunks()
    }

    #[getter]
    fn num_workers(&self) -> u32 {
        self.inner.num_workers()
    }

    /// Super-epochs before the pair rotation repeats.
    #[getter]
    fn cycle_length(&self) -> usize {
        self.inner.cycle_length()
    }

    /// One (base, swept) pair per worker for super-epoch `t` (wraps past
    /// the cycle).
    fn assignments(&self, t: usize) -> Vec<(u32, u32)> {
        self.inner.assignments(t).to_vec()
    }

    /// True when every unordered chunk pair co-resides in some partition
    /// within one cycle.
    fn covers_all_pairs(&self) -> bool {
        pair_coverage(&self.inner).is_complete()
    }

    fn __repr__(&self) -> String {
        format!(
            "Schedule(chunks={}, workers={}, cycle_length={})",
            self.inner.num_chunks(),
            self.inner.num_workers(),
            self.inner.cycle_length()
        )
    }
}

/// Splits the graph into `chunks` pieces: `"random"` deals shuffled nodes
/// evenly, `"bfs-grow"` grows connected regions from spread-out seeds.
#[pyfunction]
#[pyo3(signature = (graph, chunks, strategy="bfs-grow", seed=17))]
fn make_chunks(graph: &Graph, chunks: usize, strategy: &str, seed: u64) -> PyResult<ChunkLayout> {
    let strategy: ChunkStrategy = strategy.parse().map_err(to_py)?;
    let inner =
        isograd::partition::make_chunks(&graph.inner, chunks, strategy, seed).map_err(to_py)?;
    Ok(ChunkLayout { inner })
}

#[pyfunction]
fn sweep_schedule(chunks: u32, workers: u32) -> PyResult<Schedule> {
    Ok(Schedule { inner: isograd::schedule::sweep_schedule(chunks, workers).map_err(to_py)? })
}

fn config_value_to_string(value: &Bound<'_, PyAny>) -> PyResult<String> {
    // Python booleans stringify as True/False; the config parser wants
    // lowercase. Check bools before ints (bool subclasses int).
    if let Ok(b) = value.extract::<bool>() {
        return Ok(if b { "true" } else { "false" }.to_string());
    }
    if let Ok(list) = value.extract::<Vec<i64>>() {
        return Ok(list.iter().map(i64::to_string).collect::<Vec<_>>().join(","));
    }
    Ok(value.str()?.to_string())
}

fn row_to_dict<'py>(py: Python<'py>, row: &EpochRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("epoch", row.epoch)?;
    d.set_item("super_epoch", row.super_epoch)?;
    d.set_item("phases", row.phases)?;
    d.set_item("loss", row.loss)?;
    d.set_item("train_acc", row.train_acc)?;
    d.set_item("valid_acc", row.valid_acc)?;
    d.set_item("test_acc", row.test_acc)?;
    d.set_item("coverage_factor_mean", row.coverage_factor_mean)?;
    d.set_item("grad_bytes", row.grad_bytes)?;
    d.set_item("remote_bytes", row.remote_bytes)?;
    d.set_item("repartition_bytes", row.repartition_bytes)?;
    d.set_item("seconds", row.seconds)?;
    Ok(d)
}

/// Trains on `graph` with the configuration given as keyword arguments
/// (same keys and value syntax as the CLI, e.g. `epochs=10`,
/// `fanouts=[25, 10]`, `correction="batch-resampling"`). Returns a dict
/// with the per-epoch `rows`, `total_steps`, and
/// `peak_resident_partitions`.
#[pyfunction]
#[pyo3(signature = (graph, **config))]
fn train<'py>(
    py: Python<'py>,
    graph: &Graph,
    config: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    if let Some(kwargs) = config {
        for (key, value) in kwargs.iter() {
            pairs.push((key.extract::<String>()?, config_value_to_string(&value)?));
        }
    }
    let train_config =
        train_config_from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            .map_err(to_py)?;
    let report = train_with(&graph.inner, &train_config, |_| Ok(())).map_err(to_py)?;

    let rows = PyList::empty(py);
    for row in &report.rows {
        rows.append(row_to_dict(py, row)?)?;
    }
    let out = PyDict::new(py);
    out.set_item("rows", rows)?;
    out.set_item("total_steps", report.total_steps())?;
    out.set_item("peak_resident_partitions", report.peak_resident_partitions)?;
    out.set_item("total_gradient_bytes", report.ledger.total_gradient_bytes())?;
    Ok(out)
}

/// Remote bytes per partition that a conventional sampling system would
/// fetch in one epoch if the chunk layout were used directly as the
/// partition layout.
#[pyfunction]
#[pyo3(signature = (graph, partitions, strategy="bfs-grow", fanouts=vec![10, 10],
                    batch_size=32, hidden_dim=64, seed=17))]
fn traffic_estimate(
    graph: &Graph,
    partitions: usize,
    strategy: &str,
    fanouts: Vec<usize>,
    batch_size: usize,
    hidden_dim: usize,
    seed: u64,
) -> PyResult<Vec<u64>> {
    let strategy: ChunkStrategy = strategy.parse().map_err(to_py)?;
    let chunks = if partitions == 1 {
        isograd::partition::single_chunk_layout(&graph.inner)
    } else {
        isograd::partition::make_chunks(&graph.inner, partitions, strategy, seed).map_err(to_py)?
    };
    conventional_traffic_estimate(
        &graph.inner,
        &chunks,
        &fanouts,
        batch_size,
        graph.inner.feature_dim(),
        hidden_dim,
        seed,
    )
    .map_err(to_py)
}

/// Runs the numerical verification suites and returns one dict per check.
/// `only` restricts the run to a subset of
/// {"gradients", "identity", "projection", "unbiasedness", "coverage"}.
#[pyfunction]
#[pyo3(signature = (only=None, samples=50_000, seed=17))]
fn verify<'py>(
    py: Python<'py>,
    only: Option<Vec<String>>,
    samples: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyList>> {
    const SUITES: &[&str] = &["gradients", "identity", "projection", "unbiasedness", "coverage"];
    if let Some(names) = &only {
        for name in names {
            if !SUITES.contains(&name.as_str()) {
                return Err(PyValueError::new_err(format!(
                    "unknown suite `{name}` (expected one of {})",
                    SUITES.join(", ")
                )));
            }
        }
    }
    let wanted =
        |name: &str| only.as_ref().is_none_or(|names| names.iter().any(|n| n == name));

    let mut report = OracleReport::default();
    if wanted("gradients") {
        report.merge(verify_gradients(seed).map_err(to_py)?);
    }
    if wanted("identity") {
        report.merge(verify_importance_suite(seed).map_err(to_py)?);
    }
    if wanted("projection") {
        report.merge(verify_projection_suite(seed).map_err(to_py)?);
    }
    if wanted("unbiasedness") {
        report.merge(verify_unbiasedness(samples, seed).map_err(to_py)?);
    }
    if wanted("coverage") {
        report.merge(verify_coverage(8).map_err(to_py)?);
    }

    let rows = PyList::empty(py);
    for check in &report.checks {
        let d = PyDict::new(py);
        d.set_item("quantity", &check.quantity)?;
        d.set_item("reference", check.reference)?;
        d.set_item("estimate", check.estimate)?;
        d.set_item("abs_error", check.abs_error())?;
        d.set_item("band", check.band)?;
        d.set_item("samples", check.samples)?;
        d.set_item("tolerance", check.tolerance)?;
        d.set_item("pass", check.pass)?;
        rows.append(d)?;
    }
    Ok(rows)
}

#[pymodule]
fn isograd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Graph>()?;
    m.add_class::<ChunkLayout>()?;
    m.add_class::<Schedule>()?;
    m.add_function(wrap_pyfunction!(make_chunks, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(traffic_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
