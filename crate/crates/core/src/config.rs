//! Experiment configuration: JSON, or `key = value` lines with dotted keys.
//!
//! ```text
//! # comments start with '#'
//! shard_counts = 1,2,4,8,16
//! trainer.learning_rate = 0.05
//! dataset.synthetic.n_records = 5193
//! ```
//!
//! Values are parsed as JSON where possible; comma lists become arrays and
//! anything else is taken as a string. Unset keys keep their defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dataset::{LabelSpec, SyntheticSpec, DEFAULT_SPEED_LIMIT_KMH};
use crate::error::{Error, Result};
use crate::features::{EmbedderKind, DEFAULT_HASH_DIM};
use crate::sharding::{GmmConfig, Strategy};
use crate::trainer::TrainingConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    File(PathBuf),
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic(SyntheticSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub dim: usize,
    pub lookup_path: Option<PathBuf>,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            kind: EmbedderKind::Hashing,
            dim: DEFAULT_HASH_DIM,
            lookup_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub shard_counts: Vec<usize>,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    pub train_fraction: f64,
    pub n_slices: usize,
    pub group_by_user: bool,
    pub trainer: TrainingConfig,
    pub gmm: GmmConfig,
    pub label: LabelSpec,
    pub embedder: EmbedderConfig,
    pub text_dim: usize,
    pub speed_limit_kmh: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::default(),
            shard_counts: vec![1, 2, 4, 8, 16],
            strategies: vec![Strategy::ClusterRr, Strategy::Random],
            seeds: (0..10).collect(),
            train_fraction: 0.8,
            n_slices: 1,
            group_by_user: false,
            trainer: TrainingConfig::default(),
            gmm: GmmConfig::default(),
            label: LabelSpec::default(),
            embedder: EmbedderConfig::default(),
            text_dim: crate::features::TEXT_DIM,
            speed_limit_kmh: DEFAULT_SPEED_LIMIT_KMH,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.shard_counts.is_empty() || self.shard_counts.contains(&0) {
            return Err(Error::invalid("shard_counts must be non-empty and positive"));
        }
        if self.strategies.is_empty() || self.seeds.is_empty() {
            return Err(Error::invalid("strategies and seeds must be non-empty"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid("train_fraction must lie in (0, 1)"));
        }
        if self.n_slices == 0 {
            return Err(Error::invalid("n_slices must be positive"));
        }
        self.trainer.validate()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses JSON (if the text starts with `{`) or key/value lines.
    pub fn parse(text: &str) -> Result<Self> {
        let overrides = if text.trim_start().starts_with('{') {
            serde_json::from_str::<Value>(text)?
        } else {
            parse_key_values(text)?
        };
        let mut base = serde_json::to_value(Self::default())?;
        merge(&mut base, overrides);
        let cfg: Self = serde_json::from_value(base)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    if raw.contains(',') && !raw.starts_with('[') && !raw.starts_with('{') && !raw.starts_with('"') {
        Value::Array(raw.split(',').map(|s| parse_scalar(s.trim())).collect())
    } else {
        parse_scalar(raw)
    }
}

fn parse_key_values(text: &str) -> Result<Value> {
    let mut root = Value::Object(Map::new());
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("config line {}: expected key = value", i + 1)))?;
        let mut node = &mut root;
        let parts: Vec<&str> = key.trim().split('.').collect();
        for (j, part) in parts.iter().enumerate() {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| Error::invalid(format!("config line {}: {key} nests under a value", i + 1)))?;
            if j + 1 == parts.len() {
                obj.insert(part.to_string(), parse_value(value));
                break;
            }
            node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
        }
    }
    Ok(root)
}

/// Recursively overlays `patch` onto `base`. A patch object whose single
/// key differs from the base's enum variant replaces the whole value.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            let variant_switch = b.len() == 1 && p.len() == 1 && !p.keys().all(|k| b.contains_key(k));
            if variant_switch {
                *b = p;
                return;
            }
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot @ Value::Array(_), p) if !p.is_array() => *slot = Value::Array(vec![p]),
        (slot, p) => *slot = p,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_json() {
        let text = serde_json::to_string(&ExperimentConfig::default()).unwrap();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn key_value_overrides() {
        let cfg = ExperimentConfig::parse(
            "# sweep\nshard_counts = 2,4\nstrategies = random\nseeds = [3]\n\
             trainer.learning_rate = 0.05\ndataset.synthetic.n_records = 300\ngmm.n_components = 4\n",
        )
        .unwrap();
        assert_eq!(cfg.shard_counts, vec![2, 4]);
        assert_eq!(cfg.strategies, vec![Strategy::Random]);
        assert_eq!(cfg.seeds, vec![3]);
        assert_eq!(cfg.trainer.learning_rate, 0.05);
        assert_eq!(cfg.trainer.batch_size, 32);
        assert_eq!(cfg.gmm.n_components, 4);
        match cfg.dataset {
            DatasetSource::Synthetic(s) => {
                assert_eq!(s.n_records, 300);
                assert_eq!(s.n_latent_groups, 8);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn file_source_replaces_synthetic() {
        let cfg = ExperimentConfig::parse("dataset.file = trips.csv\n").unwrap();
        assert_eq!(cfg.dataset, DatasetSource::File("trips.csv".into()));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ExperimentConfig::parse("train_fraction = 1.5").is_err());
        assert!(ExperimentConfig::parse("shard_counts = 0,2").is_err());
        assert!(ExperimentConfig::parse("nonsense line").is_err());
    }
}
