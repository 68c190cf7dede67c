//! Chunk-sweep schedule: which (base, swept) chunk pair each worker trains on
//! during each super-epoch, arranged so that every unordered chunk pair
//! co-resides in some partition within one cycle. That co-residence is what
//! lets every edge of the graph become visible to some worker over time.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::binio::*;
use crate::error::{Error, Result};
use crate::partition::ChunkAssignment;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepSchedule {
    num_chunks: u32,
    num_workers: u32,
    /// `cycle[t][w]` = (base, swept) for worker `w` in super-epoch `t`.
    cycle: Vec<Vec<(u32, u32)>>,
}

impl SweepSchedule {
    pub fn num_chunks(&self) -> u32 {
        self.num_chunks
    }

    pub fn num_workers(&self) -> u32 {
        self.num_workers
    }

    /// Super-epochs per full coverage cycle.
    pub fn cycle_length(&self) -> usize {
        self.cycle.len()
    }

    /// Assignments for super-epoch `t` (indexes wrap around the cycle).
    pub fn assignments(&self, t: usize) -> &[(u32, u32)] {
        &self.cycle[t % self.cycle.len()]
    }

    /// Hand-built schedule for exercising coverage failures in tests.
    #[cfg(test)]
    pub(crate) fn for_tests(
        num_chunks: u32,
        num_workers: u32,
        cycle: Vec<Vec<(u32, u32)>>,
    ) -> SweepSchedule {
        SweepSchedule { num_chunks, num_workers, cycle }
    }
}

/// Builds the sweep schedule for `num_chunks` chunks and `num_workers`
/// workers (`1 <= workers <= chunks`, `chunks >= 2`).
///
/// With as many workers as chunks, worker `w` keeps base chunk `w` for the
/// whole cycle and sweeps chunk `(w + t) mod C` in super-epoch `t`, covering
/// all pairs in `C - 1` super-epochs. With fewer workers the unordered pairs
/// are listed lexicographically and dealt to (super-epoch, worker) slots in
/// order, wrapping when the pair list is exhausted, which covers everything
/// in `ceil(C * (C - 1) / (2 * W))` super-epochs.
pub fn sweep_schedule(num_chunks: u32, num_workers: u32) -> Result<SweepSchedule> {
    if num_chunks < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 chunks, got {num_chunks}")));
    }
    if num_workers == 0 || num_workers > num_chunks {
        return Err(Error::InvalidParameter(format!(
            "workers {num_workers} outside 1..={num_chunks}"
        )));
    }
    let c = num_chunks;
    let w = num_workers;
    let cycle = if w == c {
        (1..c)
            .map(|t| (0..w).map(|worker| (worker, (worker + t) % c)).collect())
            .collect()
    } else {
        let pairs: Vec<(u32, u32)> =
            (0..c).flat_map(|i| ((i + 1)..c).map(move |j| (i, j))).collect();
        let len = pairs.len().div_ceil(w as usize);
        (0..len)
            .map(|t| {
                (0..w as usize).map(|slot| pairs[(t * w as usize + slot) % pairs.len()]).collect()
            })
            .collect()
    };
    Ok(SweepSchedule { num_chunks: c, num_workers: w, cycle })
}

/// Per-pair coverage over one cycle: the first super-epoch (1-based) in which
/// each unordered chunk pair co-resides, and any pairs never covered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageReport {
    pub num_chunks: u32,
    pub covered: Vec<((u32, u32), u32)>,
    pub missing: Vec<(u32, u32)>,
}

impl CoverageReport {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty()
    }
}

pub fn pair_coverage(schedule: &SweepSchedule) -> CoverageReport {
    let c = schedule.num_chunks;
    let mut first = vec![vec![0u32; c as usize]; c as usize];
    for (t, slots) in schedule.cycle.iter().enumerate() {
        for &(base, swept) in slots {
            let (i, j) = (base.min(swept) as usize, base.max(swept) as usize);
            if first[i][j] == 0 {
                first[i][j] = t as u32 + 1;
            }
        }
    }
    let mut covered = Vec::new();
    let mut missing = Vec::new();
    for i in 0..c as usize {
        for j in (i + 1)..c as usize {
            if first[i][j] > 0 {
                covered.push(((i as u32, j as u32), first[i][j]));
            } else {
                missing.push((i as u32, j as u32));
            }
        }
    }
    CoverageReport { num_chunks: c, covered, missing }
}

const LAYOUT_MAGIC: [u8; 4] = *b"SSN1";
const LAYOUT_VERSION: u32 = 1;

/// Writes the chunk assignment and schedule as one versioned binary snapshot
/// so an experiment can be resumed with the exact same layout plan.
pub fn write_layout_snapshot(
    path: &Path,
    chunks: &ChunkAssignment,
    schedule: &SweepSchedule,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&LAYOUT_MAGIC)?;
    write_u32(&mut w, LAYOUT_VERSION)?;
    write_u32(&mut w, schedule.num_chunks)?;
    write_u32(&mut w, schedule.num_workers)?;
    write_u64(&mut w, schedule.cycle.len() as u64)?;
    for slots in &schedule.cycle {
        for &(b, s) in slots {
            write_u32(&mut w, b)?;
            write_u32(&mut w, s)?;
        }
    }
    write_u64(&mut w, chunks.owners().len() as u64)?;
    for &o in chunks.owners() {
        write_u32(&mut w, o)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_layout_snapshot(path: &Path) -> Result<(ChunkAssignment, SweepSchedule)> {
    let mut r = BufReader::new(File::open(path)?);
    expect_magic(&mut r, &LAYOUT_MAGIC, "layout snapshot")?;
    expect_version(&mut r, LAYOUT_VERSION, "layout snapshot")?;
    let num_chunks = read_u32(&mut r)?;
    let num_workers = read_u32(&mut r)?;
    let cycle_len = read_u64(&mut r)? as usize;
    let mut cycle = Vec::with_capacity(cycle_len);
    for _ in 0..cycle_len {
        let mut slots = Vec::with_capacity(num_workers as usize);
        for _ in 0..num_workers {
            slots.push((read_u32(&mut r)?, read_u32(&mut r)?));
        }
        cycle.push(slots);
    }
    let n = read_u64(&mut r)? as usize;
    let mut rows = Vec::with_capacity(n);
    for v in 0..n {
        rows.push((v, read_u32(&mut r)?));
    }
    let owner: Vec<u32> = rows.into_iter().map(|(_, c)| c).collect();
    let max_owner = owner.iter().copied().max().map_or(0, |m| m as usize + 1);
    if max_owner > num_chunks as usize {
        return Err(Error::MalformedInput("layout snapshot: owner exceeds chunk count".into()));
    }
    let chunks = ChunkAssignment::from_parts(num_chunks as usize, owner);
    let schedule = SweepSchedule { num_chunks, num_workers, cycle };
    Ok((chunks, schedule))
}
