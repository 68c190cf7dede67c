//! Flat `key = value` experiment configs.
//!
//! One file describes a whole experiment (generator, training, traffic,
//! verification); each consumer pulls the keys it knows. Later entries win,
//! which is how command-line `--set` overrides work: they are appended.

use std::path::Path;
use std::str::FromStr;

use crate::engine::{train_config_from_pairs, TrainConfig};
use crate::error::{Error, Result};
use crate::graph::{RmatParams, SbmParams};

/// Keys consumed by [`TrainConfig`].
pub const TRAIN_KEYS: &[&str] = &[
    "arch",
    "depth",
    "fanouts",
    "hidden_dim",
    "learning_rate",
    "dropout",
    "batch_size",
    "epochs",
    "chunks",
    "workers",
    "phases_max",
    "correction",
    "sum_domain",
    "epsilon",
    "c_max",
    "partition_mode",
    "chunk_strategy",
    "fixed_partitions",
    "seed",
    "timing",
    "parallel_workers",
    "deficit_threshold",
    "streak_threshold",
    "ema_decay",
];

/// Keys consumed by the graph generators.
pub const GENERATOR_KEYS: &[&str] = &[
    "generator",
    "communities",
    "nodes_per_community",
    "p_in",
    "p_out",
    "feature_dim",
    "feature_signal",
    "scale",
    "edge_factor",
    "a",
    "b",
    "c",
    "d",
    "seed",
];

/// Keys consumed by individual commands.
pub const COMMAND_KEYS: &[&str] = &["dataset", "traffic_partitions", "verify_samples"];

fn key_is_known(key: &str) -> bool {
    TRAIN_KEYS.contains(&key) || GENERATOR_KEYS.contains(&key) || COMMAND_KEYS.contains(&key)
}

/// Ordered key-value entries; lookups take the last occurrence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigMap {
    entries: Vec<(String, String)>,
}

impl ConfigMap {
    pub fn new() -> ConfigMap {
        ConfigMap::default()
    }

    /// Parses `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn from_text(text: &str) -> Result<ConfigMap> {
        let mut map = ConfigMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
            })?;
            map.push(key.trim(), value.trim())?;
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<ConfigMap> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        ConfigMap::from_text(&text)
    }

    /// Appends one entry, rejecting keys outside the registry by name.
    pub fn push(&mut self, key: &str, value: &str) -> Result<()> {
        if key.is_empty() {
            return Err(Error::Config("empty config key".into()));
        }
        if !key_is_known(key) {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
        self.entries.push((key.to_string(), value.to_string()));
        Ok(())
    }

    /// Appends `key=value` override strings in order, so they win over the
    /// file contents and over earlier overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, sets: &[S]) -> Result<()> {
        for set in sets {
            let raw = set.as_ref();
            let (key, value) = raw
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{raw}` is not key=value")))?;
            self.push(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn parsed<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                Error::Config(format!("key `{key}`: expected {what} (got `{v}`)"))
            }),
        }
    }

    /// Each key once with its final value, sorted by key.
    pub fn resolved(&self) -> Vec<(String, String)> {
        let mut keys: Vec<&String> = self.entries.iter().map(|(k, _)| k).collect();
        keys.sort_unstable();
        keys.dedup();
        keys.into_iter()
            .map(|k| (k.clone(), self.get(k).expect("key exists").to_string()))
            .collect()
    }

    /// View of the final training-related entries, in registry order.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let pairs: Vec<(&str, &str)> = TRAIN_KEYS
            .iter()
            .filter_map(|&k| self.get(k).map(|v| (k, v)))
            .collect();
        let config = train_config_from_pairs(pairs)?;
        config.validate()?;
        Ok(config)
    }

    pub fn seed(&self) -> Result<u64> {
        Ok(self.parsed("seed", "an integer")?.unwrap_or(17))
    }

    pub fn generator(&self) -> Result<Generator> {
        match self.get("generator").unwrap_or("sbm") {
            "sbm" => Ok(Generator::Sbm),
            "rmat" => Ok(Generator::Rmat),
            other => Err(Error::Config(format!("unknown generator `{other}`"))),
        }
    }

    pub fn sbm_params(&self) -> Result<SbmParams> {
        Ok(SbmParams {
            communities: self.parsed("communities", "an integer")?.unwrap_or(4),
            nodes_per_community: self.parsed("nodes_per_community", "an integer")?.unwrap_or(100),
            p_in: self.parsed("p_in", "a float")?.unwrap_or(0.1),
            p_out: self.parsed("p_out", "a float")?.unwrap_or(0.005),
            feature_dim: self.parsed("feature_dim", "an integer")?.unwrap_or(32),
            feature_signal: self.parsed("feature_signal", "a float")?.unwrap_or(1.0),
            seed: self.seed()?,
        })
    }

    pub fn rmat_params(&self) -> Result<RmatParams> {
        Ok(RmatParams {
            scale: self.parsed("scale", "an integer")?.unwrap_or(10),
            edge_factor: self.parsed("edge_factor", "an integer")?.unwrap_or(8),
            a: self.parsed("a", "a float")?.unwrap_or(0.57),
            b: self.parsed("b", "a float")?.unwrap_or(0.19),
            c: self.parsed("c", "a float")?.unwrap_or(0.19),
            d: self.parsed("d", "a float")?.unwrap_or(0.05),
            feature_dim: self.parsed("feature_dim", "an integer")?.unwrap_or(32),
            seed: self.seed()?,
        })
    }

    pub fn dataset_dir(&self) -> Option<&str> {
        self.get("dataset")
    }

    /// Partition counts the traffic command sweeps.
    pub fn traffic_partitions(&self) -> Result<Vec<usize>> {
        match self.get("traffic_partitions") {
            None => Ok(vec![2, 4, 8]),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim().parse::<usize>().map_err(|_| {
                        Error::Config(format!(
                            "key `traffic_partitions`: expected comma-separated integers (got `{v}`)"
                        ))
                    })
                })
                .collect(),
        }
    }

    /// Monte Carlo batches for the unbiasedness verification suite.
    pub fn verify_samples(&self) -> Result<usize> {
        Ok(self.parsed("verify_samples", "an integer")?.unwrap_or(50_000))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    Sbm,
    Rmat,
}

/// Writes the reproduction record for a command: the crate version, the
/// command name, and every resolved config entry. Deliberately no
/// timestamps, so reruns produce byte-identical manifests.
pub fn write_manifest(path: &Path, command: &str, map: &ConfigMap) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "version = {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(out, "command = {command}")?;
    writeln!(out, "seed = {}", map.seed()?)?;
    for (k, v) in map.resolved() {
        if k != "seed" {
            writeln!(out, "{k} = {v}")?;
        }
    }
    out.flush()?;
    Ok(())
}
