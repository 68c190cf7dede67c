//! On-disk dataset formats.
//!
//! Edge list: text, one `u v` pair per line, `#` starts a comment, ids are
//! 0-based. Features: binary, little-endian, header `FEA1` magic + u64 node
//! count + u32 dim + u32 scalar width (4), then row-major f32 rows. Labels:
//! text, one integer per line. A dataset directory bundles the three files
//! under fixed names.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Graph, NodeId};
use crate::error::{Error, Result};

pub const EDGES_FILE: &str = "edges.txt";
pub const FEATURES_FILE: &str = "features.bin";
pub const LABELS_FILE: &str = "labels.txt";

const FEATURE_MAGIC: [u8; 4] = *b"FEA1";
const SCALAR_WIDTH: u32 = 4;

impl Graph {
    /// Loads a graph from an edge-list file, a feature file (which defines
    /// the node count), and an optional label file.
    pub fn load_files(edges: &Path, features: &Path, labels: Option<&Path>) -> Result<Graph> {
        let (feat, dim) = read_features(features)?;
        let num_nodes = feat.len() / dim;
        let edge_list = read_edge_list(edges)?;
        let labels = match labels {
            None => None,
            Some(p) => {
                let l = read_labels(p)?;
                if l.len() != num_nodes {
                    return Err(Error::DimensionMismatch(format!(
                        "{} labels for {} feature rows",
                        l.len(),
                        num_nodes
                    )));
                }
                Some(l)
            }
        };
        Graph::from_edges(&edge_list, feat, dim, labels)
    }

    /// Loads `edges.txt` / `features.bin` / `labels.txt` from a directory;
    /// the label file is optional.
    pub fn load_dataset(dir: &Path) -> Result<Graph> {
        let labels = dir.join(LABELS_FILE);
        Graph::load_files(
            &dir.join(EDGES_FILE),
            &dir.join(FEATURES_FILE),
            labels.exists().then_some(labels.as_path()),
        )
    }

    /// Writes the dataset files into `dir` (which must exist). Rewriting the
    /// same graph produces byte-identical files.
    pub fn write_dataset(&self, dir: &Path) -> Result<()> {
        write_edge_list(&dir.join(EDGES_FILE), self)?;
        write_features(&dir.join(FEATURES_FILE), self.features(), self.feature_dim())?;
        if let Some(labels) = self.labels() {
            write_labels(&dir.join(LABELS_FILE), labels)?;
        }
        Ok(())
    }
}

pub fn read_edge_list(path: &Path) -> Result<Vec<(NodeId, NodeId)>> {
    let file = File::open(path)?;
    let mut edges = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut parts = content.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<NodeId> {
            tok.ok_or_else(|| Error::MalformedInput(format!("{}:{}: expected `u v`", path.display(), lineno + 1)))?
                .parse::<NodeId>()
                .map_err(|_| Error::MalformedInput(format!("{}:{}: non-integer node id", path.display(), lineno + 1)))
        };
        let u = parse(parts.next())?;
        let v = parse(parts.next())?;
        if parts.next().is_some() {
            return Err(Error::MalformedInput(format!(
                "{}:{}: more than two fields",
                path.display(),
                lineno + 1
            )));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

/// Writes each undirected edge once, smaller endpoint first, ascending.
pub fn write_edge_list(path: &Path, graph: &Graph) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# undirected edges, one `u v` per line, 0-based ids")?;
    for u in 0..graph.num_nodes() as NodeId {
        for &v in graph.neighbors(u) {
            if u < v {
                writeln!(w, "{u} {v}")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<(Vec<f32>, usize)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::MalformedInput(format!("{}: truncated header", path.display())))?;
    if magic != FEATURE_MAGIC {
        return Err(Error::MalformedInput(format!("{}: bad feature-file magic", path.display())));
    }
    let mut u64buf = [0u8; 8];
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u64buf)?;
    let num_nodes = u64::from_le_bytes(u64buf) as usize;
    r.read_exact(&mut u32buf)?;
    let dim = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf)?;
    let width = u32::from_le_bytes(u32buf);
    if width != SCALAR_WIDTH {
        return Err(Error::MalformedInput(format!(
            "{}: unsupported scalar width {width}",
            path.display()
        )));
    }
    if dim == 0 {
        return Err(Error::MalformedInput(format!("{}: zero feature dim", path.display())));
    }
    let mut data = vec![0u8; num_nodes * dim * 4];
    r.read_exact(&mut data)
        .map_err(|_| Error::MalformedInput(format!("{}: truncated feature rows", path.display())))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::MalformedInput(format!("{}: trailing bytes", path.display())));
    }
    let feat = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((feat, dim))
}

pub fn write_features(path: &Path, features: &[f32], dim: usize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&FEATURE_MAGIC)?;
    w.write_all(&((features.len() / dim) as u64).to_le_bytes())?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    w.write_all(&SCALAR_WIDTH.to_le_bytes())?;
    for x in features {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<u32>> {
    let file = File::open(path)?;
    let mut labels = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        labels.push(t.parse::<u32>().map_err(|_| {
            Error::MalformedInput(format!("{}:{}: non-integer label", path.display(), lineno + 1))
        })?);
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[u32]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for l in labels {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}
