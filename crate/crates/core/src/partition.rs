//! Chunking and partition assembly.
//!
//! The graph is split once into balanced chunks. A partition is the union of
//! two chunks (a base and a swept chunk) together with the adjacency visible
//! to a worker that trains on it in isolation. Two visibility modes exist:
//!
//! - induced-core: the partition contains the core nodes only and the
//!   adjacency induced on them; neighbors outside the core are invisible.
//! - halo-1: the partition additionally carries the 1-hop boundary as
//!   read-only halo nodes. Core targets see their full neighbor lists; halo
//!   nodes have empty aggregation lists, so depth-2 and deeper neighborhoods
//!   are truncated at the halo.
//!
//! In both modes a node's local degree never exceeds its global degree, which
//! is the quantity the coverage corrections are built on.

use std::collections::{HashMap, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::binio::*;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, Split};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkStrategy {
    Random,
    BfsGrow,
}

impl std::str::FromStr for ChunkStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(ChunkStrategy::Random),
            "bfs-grow" => Ok(ChunkStrategy::BfsGrow),
            other => Err(Error::Config(format!("unknown chunk strategy `{other}`"))),
        }
    }
}

impl std::fmt::Display for ChunkStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ChunkStrategy::Random => "random",
            ChunkStrategy::BfsGrow => "bfs-grow",
        })
    }
}

/// Node-to-chunk map produced by [`make_chunks`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkAssignment {
    num_chunks: usize,
    owner: Vec<u32>,
}

impl ChunkAssignment {
    pub(crate) fn from_parts(num_chunks: usize, owner: Vec<u32>) -> ChunkAssignment {
        ChunkAssignment { num_chunks, owner }
    }

    /// Builds an assignment from an explicit per-node owner vector, for
    /// layouts chosen outside [`make_chunks`]. Every chunk id must be in
    /// range and every chunk must own at least one node.
    pub fn from_owners(num_chunks: usize, owner: Vec<u32>) -> Result<ChunkAssignment> {
        if num_chunks == 0 {
            return Err(Error::InvalidParameter("need at least one chunk".into()));
        }
        let mut seen = vec![false; num_chunks];
        for &c in &owner {
            match seen.get_mut(c as usize) {
                Some(slot) => *slot = true,
                None => {
                    return Err(Error::OutOfRange { index: c as usize, limit: num_chunks });
                }
            }
        }
        if let Some(empty) = seen.iter().position(|&s| !s) {
            return Err(Error::InvalidParameter(format!("chunk {empty} owns no nodes")));
        }
        Ok(ChunkAssignment { num_chunks, owner })
    }

    pub fn num_chunks(&self) -> usize {
        self.num_chunks
    }

    pub fn owner(&self, v: NodeId) -> u32 {
        self.owner[v as usize]
    }

    pub fn owners(&self) -> &[u32] {
        &self.owner
    }

    /// Nodes of chunk `c`, ascending.
    pub fn members(&self, c: u32) -> Vec<NodeId> {
        (0..self.owner.len() as NodeId).filter(|&v| self.owner[v as usize] == c).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.num_chunks];
        for &c in &self.owner {
            sizes[c as usize] += 1;
        }
        sizes
    }

    /// Writes `node,chunk` rows with a header line.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "node,chunk")?;
        for (v, c) in self.owner.iter().enumerate() {
            writeln!(w, "{v},{c}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<ChunkAssignment> {
        let file = File::open(path)?;
        let mut rows: Vec<(usize, u32)> = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if lineno == 0 {
                if line.trim() != "node,chunk" {
                    return Err(Error::MalformedInput(format!("{}: bad header", path.display())));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.trim().split(',');
            let bad = || Error::MalformedInput(format!("{}:{}: expected node,chunk", path.display(), lineno + 1));
            let v: usize = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let c: u32 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            rows.push((v, c));
        }
        rows.sort_unstable();
        if rows.iter().enumerate().any(|(i, &(v, _))| i != v) {
            return Err(Error::MalformedInput(format!(
                "{}: node ids must cover 0..n exactly once",
                path.display()
            )));
        }
        let owner: Vec<u32> = rows.into_iter().map(|(_, c)| c).collect();
        let num_chunks = owner.iter().copied().max().map_or(0, |m| m as usize + 1);
        Ok(ChunkAssignment { num_chunks, owner })
    }
}

/// Every node in one chunk: the degenerate layout for single-partition
/// baselines and traffic comparisons (where it moves zero remote bytes).
pub fn single_chunk_layout(graph: &Graph) -> ChunkAssignment {
    ChunkAssignment::from_parts(1, vec![0; graph.num_nodes()])
}

/// Splits the graph into `num_chunks` balanced chunks. `random` shuffles and
/// deals nodes round-robin (sizes differ by at most one). `bfs-grow` grows
/// breadth-first regions from spread-out seed nodes, capped at 110% of the
/// even share, and deals any stragglers to the smallest chunks.
pub fn make_chunks(
    graph: &Graph,
    num_chunks: usize,
    strategy: ChunkStrategy,
    seed: u64,
) -> Result<ChunkAssignment> {
    let n = graph.num_nodes();
    if num_chunks < 2 || num_chunks > n {
        return Err(Error::InvalidParameter(format!(
            "num_chunks {num_chunks} outside 2..={n}"
        )));
    }
    let mut rng = stream(seed, "chunks", &[]);
    let owner = match strategy {
        ChunkStrategy::Random => {
            let mut ids: Vec<NodeId> = (0..n as NodeId).collect();
            ids.shuffle(&mut rng);
            let mut owner = vec![0u32; n];
            for (i, v) in ids.into_iter().enumerate() {
                owner[v as usize] = (i % num_chunks) as u32;
            }
            owner
        }
        ChunkStrategy::BfsGrow => bfs_grow(graph, num_chunks, &mut rng),
    };
    Ok(ChunkAssignment { num_chunks, owner })
}

fn bfs_grow(graph: &Graph, num_chunks: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let n = graph.num_nodes();
    const UNCLAIMED: u32 = u32::MAX;
    let mut owner = vec![UNCLAIMED; n];
    let cap = ((n as f64 / num_chunks as f64) * 1.1).ceil() as usize;

    // Spread seeds by farthest-point traversal: each new seed maximizes its
    // BFS distance to all previous seeds, so separate components are seeded
    // before any component gets two seeds.
    let first = rng.random_range(0..n) as NodeId;
    let mut seeds = vec![first];
    let mut dist = vec![u32::MAX; n];
    bfs_distances(graph, first, &mut dist);
    while seeds.len() < num_chunks {
        let next = (0..n as NodeId)
            .filter(|v| !seeds.contains(v))
            .max_by_key(|&v| (dist[v as usize], std::cmp::Reverse(v)))
            .expect("num_chunks <= n leaves an unused node");
        seeds.push(next);
        let mut d2 = vec![u32::MAX; n];
        bfs_distances(graph, next, &mut d2);
        for i in 0..n {
            dist[i] = dist[i].min(d2[i]);
        }
    }

    let mut frontier: Vec<VecDeque<NodeId>> = Vec::with_capacity(num_chunks);
    let mut sizes = vec![0usize; num_chunks];
    for (c, &s) in seeds.iter().enumerate() {
        owner[s as usize] = c as u32;
        sizes[c] += 1;
        frontier.push(VecDeque::from([s]));
    }

    // Round-robin growth: each chunk claims at most one node per turn, which
    // keeps region sizes in lock-step.
    let mut grew = true;
    while grew {
        grew = false;
        for c in 0..num_chunks {
            if sizes[c] >= cap {
                continue;
            }
            while let Some(&f) = frontier[c].front() {
                let claim = graph.neighbors(f).iter().copied().find(|&u| owner[u as usize] == UNCLAIMED);
                match claim {
                    Some(u) => {
                        owner[u as usize] = c as u32;
                        sizes[c] += 1;
                        frontier[c].push_back(u);
                        grew = true;
                        break;
                    }
                    None => {
                        frontier[c].pop_front();
                    }
                }
            }
        }
    }

    // Stragglers (disconnected from every region or blocked by caps) go to
    // the currently smallest chunk, in shuffled order.
    let mut rest: Vec<NodeId> =
        (0..n as NodeId).filter(|&v| owner[v as usize] == UNCLAIMED).collect();
    rest.shuffle(rng);
    for v in rest {
        let c = (0..num_chunks).min_by_key(|&c| (sizes[c], c)).unwrap();
        owner[v as usize] = c as u32;
        sizes[c] += 1;
    }
    owner
}

fn bfs_distances(graph: &Graph, source: NodeId, dist: &mut [u32]) {
    dist[source as usize] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(v) = queue.pop_front() {
        let d = dist[v as usize];
        for &u in graph.neighbors(v) {
            if dist[u as usize] == u32::MAX {
                dist[u as usize] = d + 1;
                queue.push_back(u);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionMode {
    InducedCore,
    Halo1,
}

impl std::str::FromStr for PartitionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "induced-core" => Ok(PartitionMode::InducedCore),
            "halo-1" => Ok(PartitionMode::Halo1),
            other => Err(Error::Config(format!("unknown partition mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for PartitionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PartitionMode::InducedCore => "induced-core",
            PartitionMode::Halo1 => "halo-1",
        })
    }
}

/// One worker's isolated view of the graph: core nodes (trainable), optional
/// halo nodes (read-only), and the local adjacency. Local ids index cores
/// first (ascending global id) and then halos (ascending global id).
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    mode: PartitionMode,
    pair: Option<(u32, u32)>,
    num_core: usize,
    global_of: Vec<NodeId>,
    local_of: HashMap<NodeId, u32>,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    d_global: Vec<u32>,
    train_locals: Vec<u32>,
}

impl Partition {
    pub fn mode(&self) -> PartitionMode {
        self.mode
    }

    /// The (base, swept) chunk pair, when built from one.
    pub fn pair(&self) -> Option<(u32, u32)> {
        self.pair
    }

    pub fn num_core(&self) -> usize {
        self.num_core
    }

    pub fn num_local(&self) -> usize {
        self.global_of.len()
    }

    pub fn num_halo(&self) -> usize {
        self.global_of.len() - self.num_core
    }

    pub fn global_of(&self, local: u32) -> NodeId {
        self.global_of[local as usize]
    }

    pub fn local_of(&self, global: NodeId) -> Option<u32> {
        self.local_of.get(&global).copied()
    }

    pub fn is_core(&self, local: u32) -> bool {
        (local as usize) < self.num_core
    }

    /// Local-id neighbor list of a local node (empty for halo nodes).
    pub fn local_neighbors(&self, local: u32) -> &[u32] {
        &self.neighbors[self.offsets[local as usize]..self.offsets[local as usize + 1]]
    }

    /// Visible degree; at most [`Partition::d_global`].
    pub fn d_local(&self, local: u32) -> u32 {
        (self.offsets[local as usize + 1] - self.offsets[local as usize]) as u32
    }

    /// Degree in the full graph.
    pub fn d_global(&self, local: u32) -> u32 {
        self.d_global[local as usize]
    }

    /// Local ids of core train nodes, ascending.
    pub fn train_locals(&self) -> &[u32] {
        &self.train_locals
    }

    /// A single partition covering the whole graph with full visibility; the
    /// degenerate case where local and global quantities coincide.
    pub fn whole_graph(graph: &Graph) -> Partition {
        let n = graph.num_nodes();
        let global_of: Vec<NodeId> = (0..n as NodeId).collect();
        let local_of = global_of.iter().map(|&v| (v, v)).collect();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0usize);
        let mut neighbors = Vec::new();
        for v in 0..n as NodeId {
            neighbors.extend_from_slice(graph.neighbors(v));
            offsets.push(neighbors.len());
        }
        let d_global = (0..n as NodeId).map(|v| graph.degree(v).unwrap()).collect();
        // With no split nothing distinguishes nodes, so every node may seed
        // a batch (simulation and estimation uses); training itself rejects
        // unlabeled graphs before it gets here.
        let train_locals = match graph.split() {
            Some(split) => (0..n as u32).filter(|&v| split[v as usize] == Split::Train).collect(),
            None => (0..n as u32).collect(),
        };
        Partition {
            mode: PartitionMode::InducedCore,
            pair: None,
            num_core: n,
            global_of,
            local_of,
            offsets,
            neighbors,
            d_global,
            train_locals,
        }
    }
}

/// Assembles the partition for chunk pair (`base`, `swept`) under the given
/// visibility mode.
pub fn build_partition(
    graph: &Graph,
    chunks: &ChunkAssignment,
    base: u32,
    swept: u32,
    mode: PartitionMode,
) -> Result<Partition> {
    if base == swept {
        return Err(Error::InvalidParameter(format!("base and swept chunk are both {base}")));
    }
    let c = chunks.num_chunks() as u32;
    if base >= c || swept >= c {
        return Err(Error::OutOfRange {
            index: base.max(swept) as usize,
            limit: c as usize,
        });
    }

    let core: Vec<NodeId> = (0..graph.num_nodes() as NodeId)
        .filter(|&v| {
            let o = chunks.owner(v);
            o == base || o == swept
        })
        .collect();
    let in_core: HashMap<NodeId, ()> = core.iter().map(|&v| (v, ())).collect();

    let mut global_of = core.clone();
    if mode == PartitionMode::Halo1 {
        let mut halo: Vec<NodeId> = Vec::new();
        for &v in &core {
            for &u in graph.neighbors(v) {
                if !in_core.contains_key(&u) {
                    halo.push(u);
                }
            }
        }
        halo.sort_unstable();
        halo.dedup();
        global_of.extend(halo);
    }

    let local_of: HashMap<NodeId, u32> =
        global_of.iter().enumerate().map(|(l, &g)| (g, l as u32)).collect();

    let num_core = core.len();
    let mut offsets = Vec::with_capacity(global_of.len() + 1);
    offsets.push(0usize);
    let mut neighbors = Vec::new();
    for (local, &g) in global_of.iter().enumerate() {
        if local < num_core {
            match mode {
                PartitionMode::InducedCore => {
                    neighbors.extend(
                        graph.neighbors(g).iter().filter_map(|u| {
                            in_core.contains_key(u).then(|| local_of[u])
                        }),
                    );
                }
                PartitionMode::Halo1 => {
                    // Every neighbor of a core node is core or halo, so the
                    // full list is visible.
                    neighbors.extend(graph.neighbors(g).iter().map(|u| local_of[u]));
                }
            }
        }
        // Halo nodes keep empty aggregation lists.
        offsets.push(neighbors.len());
    }

    let d_global = global_of.iter().map(|&g| graph.degree(g).unwrap()).collect();
    let train_locals = match graph.split() {
        Some(split) => (0..num_core as u32)
            .filter(|&l| split[global_of[l as usize] as usize] == Split::Train)
            .collect(),
        None => Vec::new(),
    };

    Ok(Partition {
        mode,
        pair: Some((base, swept)),
        num_core,
        global_of,
        local_of,
        offsets,
        neighbors,
        d_global,
        train_locals,
    })
}

const PARTITION_MAGIC: [u8; 4] = *b"PSN1";
const PARTITION_VERSION: u32 = 1;

impl Partition {
    /// Versioned binary snapshot; [`Partition::read_snapshot`] restores it
    /// exactly.
    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&PARTITION_MAGIC)?;
        write_u32(&mut w, PARTITION_VERSION)?;
        w.write_all(&[match self.mode {
            PartitionMode::InducedCore => 0u8,
            PartitionMode::Halo1 => 1u8,
        }])?;
        match self.pair {
            None => w.write_all(&[0u8])?,
            Some((b, s)) => {
                w.write_all(&[1u8])?;
                write_u32(&mut w, b)?;
                write_u32(&mut w, s)?;
            }
        }
        write_u64(&mut w, self.num_core as u64)?;
        write_u64(&mut w, self.global_of.len() as u64)?;
        for &g in &self.global_of {
            write_u32(&mut w, g)?;
        }
        for &o in &self.offsets {
            write_u64(&mut w, o as u64)?;
        }
        write_u64(&mut w, self.neighbors.len() as u64)?;
        for &x in &self.neighbors {
            write_u32(&mut w, x)?;
        }
        for &d in &self.d_global {
            write_u32(&mut w, d)?;
        }
        write_u64(&mut w, self.train_locals.len() as u64)?;
        for &t in &self.train_locals {
            write_u32(&mut w, t)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_snapshot(path: &Path) -> Result<Partition> {
        let mut r = BufReader::new(File::open(path)?);
        expect_magic(&mut r, &PARTITION_MAGIC, "partition snapshot")?;
        expect_version(&mut r, PARTITION_VERSION, "partition snapshot")?;
        let mut byte = [0u8; 1];
        std::io::Read::read_exact(&mut r, &mut byte)?;
        let mode = match byte[0] {
            0 => PartitionMode::InducedCore,
            1 => PartitionMode::Halo1,
            m => return Err(Error::MalformedInput(format!("partition snapshot: bad mode {m}"))),
        };
        std::io::Read::read_exact(&mut r, &mut byte)?;
        let pair = match byte[0] {
            0 => None,
            1 => Some((read_u32(&mut r)?, read_u32(&mut r)?)),
            m => return Err(Error::MalformedInput(format!("partition snapshot: bad pair tag {m}"))),
        };
        let num_core = read_u64(&mut r)? as usize;
        let num_local = read_u64(&mut r)? as usize;
        let global_of: Vec<NodeId> =
            (0..num_local).map(|_| read_u32(&mut r)).collect::<Result<_>>()?;
        let offsets: Vec<usize> =
            (0..num_local + 1).map(|_| read_u64(&mut r).map(|v| v as usize)).collect::<Result<_>>()?;
        let num_neighbors = read_u64(&mut r)? as usize;
        let neighbors: Vec<u32> =
            (0..num_neighbors).map(|_| read_u32(&mut r)).collect::<Result<_>>()?;
        let d_global: Vec<u32> =
            (0..num_local).map(|_| read_u32(&mut r)).collect::<Result<_>>()?;
        let num_train = read_u64(&mut r)? as usize;
        let train_locals: Vec<u32> =
            (0..num_train).map(|_| read_u32(&mut r)).collect::<Result<_>>()?;
        let local_of = global_of.iter().enumerate().map(|(l, &g)| (g, l as u32)).collect();
        Ok(Partition {
            mode,
            pair,
            num_core,
            global_of,
            local_of,
            offsets,
            neighbors,
            d_global,
            train_locals,
        })
    }
}
