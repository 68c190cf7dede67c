//! Experiment driver: generate data, lay out chunks, train, estimate what a
//! conventional system would have fetched, and run the verification suites.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage error, 3 runtime
//! error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use isograd::config::{write_manifest, ConfigMap, Generator};
use isograd::engine::{
    conventional_traffic_estimate, format_row, train_with, METRICS_HEADER,
};
use isograd::error::Error;
use isograd::graph::{generate_rmat, generate_sbm, Graph};
use isograd::model::save_checkpoint;
use isograd::oracle::{
    verify_coverage, verify_gradients, verify_importance_suite, verify_projection_suite,
    verify_unbiasedness, OracleReport,
};
use isograd::partition::{make_chunks, single_chunk_layout, ChunkStrategy};
use isograd::schedule::{sweep_schedule, write_layout_snapshot};
use isograd::Result;

#[derive(Parser)]
#[command(name = "isograd", version, about = "Partitioned GNN training with gradient-only communication")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset into the output directory
    Generate(CommonArgs),
    /// Build the chunk layout and sweep schedule for a dataset
    Partition(CommonArgs),
    /// Train a model and write the per-epoch metrics
    Train(CommonArgs),
    /// Estimate the remote bytes a conventional system would move
    Traffic(CommonArgs),
    /// Run the numerical verification suites
    Verify(VerifyArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config file (flat `key = value` lines)
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory (created if missing)
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Override one config key (repeatable, wins over the file)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Overwrite existing output files
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory for the verification CSV (report prints regardless)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    force: bool,
    /// Run only the named suites (repeatable): gradients, identity,
    /// projection, unbiasedness, coverage
    #[arg(long, value_name = "SUITE")]
    only: Vec<String>,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 2,
                _ => 3,
            }
        }
    };
    std::process::exit(code);
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Generate(args) => cmd_generate(&args).map(|()| 0),
        Command::Partition(args) => cmd_partition(&args).map(|()| 0),
        Command::Train(args) => cmd_train(&args).map(|()| 0),
        Command::Traffic(args) => cmd_traffic(&args).map(|()| 0),
        Command::Verify(args) => cmd_verify(&args),
    }
}

fn load_config(path: &Option<PathBuf>, sets: &[String]) -> Result<ConfigMap> {
    let mut map = match path {
        Some(p) => ConfigMap::load(p)?,
        None => ConfigMap::new(),
    };
    map.apply_overrides(sets)?;
    Ok(map)
}

/// Refuses to clobber existing outputs unless `--force` was given.
fn claim_outputs(dir: &Path, names: &[&str], force: bool) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    if !force {
        for name in names {
            let path = dir.join(name);
            if path.exists() {
                return Err(Error::Config(format!(
                    "{} exists; pass --force to overwrite",
                    path.display()
                )));
            }
        }
    }
    Ok(())
}

/// The graph a command works on: an explicit dataset directory when the
/// config names one, otherwise generated in memory from the generator keys.
fn obtain_graph(map: &ConfigMap) -> Result<Graph> {
    match map.dataset_dir() {
        Some(dir) => Graph::load_dataset(Path::new(dir)),
        None => match map.generator()? {
            Generator::Sbm => generate_sbm(&map.sbm_params()?),
            Generator::Rmat => generate_rmat(&map.rmat_params()?),
        },
    }
}

fn cmd_generate(args: &CommonArgs) -> Result<()> {
    let map = load_config(&args.config, &args.set)?;
    let graph = match map.generator()? {
        Generator::Sbm => generate_sbm(&map.sbm_params()?),
        Generator::Rmat => generate_rmat(&map.rmat_params()?),
    }?;
    claim_outputs(
        &args.out,
        &[
            isograd::graph::EDGES_FILE,
            isograd::graph::FEATURES_FILE,
            isograd::graph::LABELS_FILE,
            "manifest.txt",
        ],
        args.force,
    )?;
    graph.write_dataset(&args.out)?;
    write_manifest(&args.out.join("manifest.txt"), "generate", &map)?;
    println!(
        "wrote {} nodes, {} edges to {}",
        graph.num_nodes(),
        graph.num_edges(),
        args.out.display()
    );
    Ok(())
}

fn cmd_partition(args: &CommonArgs) -> Result<()> {
    let map = load_config(&args.config, &args.set)?;
    let config = map.train_config()?;
    let graph = obtain_graph(&map)?;
    claim_outputs(&args.out, &["chunks.csv", "layout.bin", "manifest.txt"], args.force)?;

    let chunks = make_chunks(&graph, config.chunks as usize, config.chunk_strategy, config.seed)?;
    let schedule = sweep_schedule(config.chunks, config.workers)?;
    chunks.write_csv(&args.out.join("chunks.csv"))?;
    write_layout_snapshot(&args.out.join("layout.bin"), &chunks, &schedule)?;
    write_manifest(&args.out.join("manifest.txt"), "partition", &map)?;
    println!(
        "{} chunks ({}), sweep cycle of {} super-epochs",
        config.chunks, config.chunk_strategy, schedule.cycle_length()
    );
    Ok(())
}

fn cmd_train(args: &CommonArgs) -> Result<()> {
    let map = load_config(&args.config, &args.set)?;
    let config = map.train_config()?;
    let graph = obtain_graph(&map)?;
    claim_outputs(&args.out, &["metrics.csv", "model.ckpt", "manifest.txt"], args.force)?;
    write_manifest(&args.out.join("manifest.txt"), "train", &map)?;

    // Rows stream to disk as they finish so an aborted run keeps its prefix.
    let metrics_path = args.out.join("metrics.csv");
    let mut metrics = std::io::BufWriter::new(std::fs::File::create(&metrics_path)?);
    writeln!(metrics, "{METRICS_HEADER}")?;
    let report = train_with(&graph, &config, |row| {
        writeln!(metrics, "{}", format_row(row))?;
        metrics.flush()?;
        Ok(())
    })?;

    if let Some(params) = &report.final_params {
        save_checkpoint(&args.out.join("model.ckpt"), params)?;
    }
    if let Some(last) = report.final_row() {
        println!(
            "{} epochs in {} steps: train {:.4}, valid {:.4}, test {:.4}",
            last.epoch,
            report.total_steps(),
            last.train_acc,
            last.valid_acc,
            last.test_acc
        );
    }
    Ok(())
}

fn cmd_traffic(args: &CommonArgs) -> Result<()> {
    let map = load_config(&args.config, &args.set)?;
    let config = map.train_config()?;
    let graph = obtain_graph(&map)?;
    claim_outputs(&args.out, &["traffic.csv", "manifest.txt"], args.force)?;

    let mut out = std::io::BufWriter::new(std::fs::File::create(args.out.join("traffic.csv"))?);
    writeln!(out, "partitions,strategy,bytes")?;
    for p in map.traffic_partitions()? {
        for strategy in [ChunkStrategy::Random, ChunkStrategy::BfsGrow] {
            let chunks = if p == 1 {
                single_chunk_layout(&graph)
            } else {
                make_chunks(&graph, p, strategy, config.seed)?
            };
            let per_partition = conventional_traffic_estimate(
                &graph,
                &chunks,
                &config.fanouts,
                config.batch_size,
                graph.feature_dim(),
                config.hidden_dim,
                config.seed,
            )?;
            let total: u64 = per_partition.iter().sum();
            writeln!(out, "{p},{strategy},{total}")?;
            println!("{p} partitions ({strategy}): {total} remote bytes per epoch");
        }
    }
    out.flush()?;
    write_manifest(&args.out.join("manifest.txt"), "traffic", &map)?;
    Ok(())
}

const SUITES: &[&str] = &["gradients", "identity", "projection", "unbiasedness", "coverage"];

fn cmd_verify(args: &VerifyArgs) -> Result<i32> {
    let map = load_config(&args.config, &args.set)?;
    for name in &args.only {
        if !SUITES.contains(&name.as_str()) {
            return Err(Error::Config(format!(
                "unknown suite `{name}` (expected one of {})",
                SUITES.join(", ")
            )));
        }
    }
    let wanted = |name: &str| args.only.is_empty() || args.only.iter().any(|o| o == name);

    let seed = map.seed()?;
    let mut report = OracleReport::default();
    if wanted("gradients") {
        report.merge(verify_gradients(seed)?);
    }
    if wanted("identity") {
        report.merge(verify_importance_suite(seed)?);
    }
    if wanted("projection") {
        report.merge(verify_projection_suite(seed)?);
    }
    if wanted("unbiasedness") {
        report.merge(verify_unbiasedness(map.verify_samples()?, seed)?);
    }
    if wanted("coverage") {
        report.merge(verify_coverage(8)?);
    }

    print!("{}", report.render_text());
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("verify.csv");
        if path.exists() && !args.force {
            return Err(Error::Config(format!(
                "{} exists; pass --force to overwrite",
                path.display()
            )));
        }
        report.write_csv(&path)?;
        write_manifest(&dir.join("manifest.txt"), "verify", &map)?;
    }
    Ok(if report.all_pass() { 0 } else { 1 })
}
