//! Constituent-model snapshots and their on-disk binary format.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "MTSC" | version u32 | shard_id u32 | slice_index u32
//! n_dims u32 | dims u32 × n_dims
//! for each layer: weights f64 (row-major) then biases f64
//! n_ids u64 | ids u64 × n_ids (sorted)
//! rng_len u64 | rng bytes
//! epochs_used u32
//! ```

use std::path::{Path, PathBuf};

use super::mlp::{validate_dims, MlpParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MTSC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub shard_id: usize,
    /// Slices `0..slice_index` are incorporated. `n_slices` marks the final
    /// trained model.
    pub slice_index: usize,
    pub params: MlpParams,
    pub incorporated_ids: Vec<u64>,
    pub rng_state: Vec<u8>,
    pub epochs_used: usize,
}

pub fn checkpoint_file_name(shard_id: usize, slice_index: usize) -> String {
    format!("shard{shard_id}_slice{slice_index}.ckpt")
}

pub fn checkpoint_path(dir: &Path, shard_id: usize, slice_index: usize) -> PathBuf {
    dir.join(checkpoint_file_name(shard_id, slice_index))
}

/// Parses `shard{S}_slice{K}.ckpt`.
pub fn parse_checkpoint_name(name: &str) -> Option<(usize, usize)> {
    let rest = name.strip_prefix("shard")?.strip_suffix(".ckpt")?;
    let (s, k) = rest.split_once("_slice")?;
    Some((s.parse().ok()?, k.parse().ok()?))
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * self.params.n_params() + 8 * self.incorporated_ids.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.shard_id as u32).to_le_bytes());
        out.extend_from_slice(&(self.slice_index as u32).to_le_bytes());
        out.extend_from_slice(&(self.params.dims.len() as u32).to_le_bytes());
        for &d in &self.params.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for (w, b) in self.params.weights.iter().zip(&self.params.biases) {
            for v in w.iter().chain(b) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.incorporated_ids.len() as u64).to_le_bytes());
        for id in &self.incorporated_ids {
            out.extend_from_slice(&id.to_le_bytes());
        }
        out.extend_from_slice(&(self.rng_state.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.rng_state);
        out.extend_from_slice(&(self.epochs_used as u32).to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err("bad magic".into());
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(format!("unsupported format version {version}"));
        }
        let shard_id = r.u32()? as usize;
        let slice_index = r.u32()? as usize;
        let n_dims = r.u32()? as usize;
        if n_dims > 64 {
            return Err(format!("implausible layer count {n_dims}"));
        }
        let dims = (0..n_dims).map(|_| r.u32().map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
        validate_dims(&dims).map_err(|e| e.to_string())?;
        let mut params = MlpParams::zeros(&dims);
        for l in 0..params.n_layers() {
            for v in params.weights[l].iter_mut() {
                *v = r.f64()?;
            }
            for v in params.biases[l].iter_mut() {
                *v = r.f64()?;
            }
        }
        let n_ids = r.u64()? as usize;
        if n_ids > bytes.len() / 8 {
            return Err("id count exceeds file size".into());
        }
        let incorporated_ids = (0..n_ids).map(|_| r.u64()).collect::<std::result::Result<Vec<_>, _>>()?;
        if incorporated_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err("incorporated ids not strictly sorted".into());
        }
        let rng_len = r.u64()? as usize;
        let rng_state = r.take(rng_len)?.to_vec();
        let epochs_used = r.u32()? as usize;
        if r.pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - r.pos));
        }
        Ok(Self {
            shard_id,
            slice_index,
            params,
            incorporated_ids,
            rng_state,
            epochs_used,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|message| Error::MalformedCheckpoint {
            path: path.to_path_buf(),
            message,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or("truncated")?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
