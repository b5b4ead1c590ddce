use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::TripRecord;
use crate::error::{Error, Result};
use crate::rng::mix64;

pub const DEFAULT_HASH_DIM: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    Hashing,
    Precomputed,
}

/// Maps a trip's free-text note to a dense vector.
///
/// `Hashing` is a signed feature-hashing bag of words; `Precomputed` looks
/// up vectors produced offline (e.g. by a sentence encoder) keyed by
/// `record_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEmbedder {
    pub kind: EmbedderKind,
    pub dim: usize,
    #[serde(default)]
    pub lookup_path: Option<PathBuf>,
    #[serde(skip)]
    table: HashMap<u64, Vec<f64>>,
}

impl Default for TextEmbedder {
    fn default() -> Self {
        Self::hashing(DEFAULT_HASH_DIM).expect("default dim is positive")
    }
}

impl TextEmbedder {
    pub fn hashing(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dim must be positive"));
        }
        Ok(Self {
            kind: EmbedderKind::Hashing,
            dim,
            lookup_path: None,
            table: HashMap::new(),
        })
    }

    pub fn precomputed(dim: usize, table: HashMap<u64, Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dim must be positive"));
        }
        if let Some((id, v)) = table.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::invalid(format!(
                "embedding for record {id} has length {}, expected {dim}",
                v.len()
            )));
        }
        Ok(Self {
            kind: EmbedderKind::Precomputed,
            dim,
            lookup_path: None,
            table,
        })
    }

    /// Loads `record_id,e0,...,e{dim-1}` rows.
    pub fn load_precomputed(path: impl AsRef<Path>, dim: usize) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(file);
        let mut table = HashMap::new();
        for (idx, rec) in rdr.records().enumerate() {
            let row = idx + 1;
            let rec = rec?;
            if rec.len() != dim + 1 {
                return Err(Error::Row {
                    row,
                    message: format!("expected {} fields, got {}", dim + 1, rec.len()),
                });
            }
            let id: u64 = rec[0].trim().parse().map_err(|_| Error::Row {
                row,
                message: "invalid record_id".into(),
            })?;
            let v = rec
                .iter()
                .skip(1)
                .enumerate()
                .map(|(j, s)| {
                    s.trim().parse::<f64>().map_err(|_| Error::Row {
                        row,
                        message: format!("invalid e{j}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            table.insert(id, v);
        }
        let mut emb = Self::precomputed(dim, table)?;
        emb.lookup_path = Some(path.to_path_buf());
        Ok(emb)
    }

    /// Re-reads the lookup table after deserialization.
    pub fn reload(&mut self) -> Result<()> {
        if self.kind == EmbedderKind::Precomputed && self.table.is_empty() {
            let path = self
                .lookup_path
                .clone()
                .ok_or(Error::NotFitted("precomputed embedder has no lookup_path"))?;
            *self = Self::load_precomputed(path, self.dim)?;
        }
        Ok(())
    }

    pub fn embed(&self, record: &TripRecord) -> Result<Vec<f64>> {
        match self.kind {
            EmbedderKind::Hashing => Ok(hash_embed(&record.note, self.dim)),
            EmbedderKind::Precomputed => self
                .table
                .get(&record.record_id)
                .cloned()
                .ok_or(Error::MissingEmbedding(record.record_id)),
        }
    }
}

/// Lowercased alphanumeric runs.
pub fn tokenize(note: &str) -> impl Iterator<Item = String> + '_ {
    note.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Signed feature hashing followed by L2 normalization.
pub fn hash_embed(note: &str, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for token in tokenize(note) {
        let h = fnv1a(token.as_bytes());
        let bucket = (h % dim as u64) as usize;
        let sign = if mix64(h) >> 63 == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}
