//! Where constituent checkpoints live between training and unlearning.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::trainer::{checkpoint_file_name, checkpoint_path, parse_checkpoint_name, Checkpoint};

pub const TOMBSTONE_DIR: &str = "tombstone";

pub trait CheckpointStore {
    fn put(&mut self, ck: &Checkpoint) -> Result<()>;
    fn get(&self, shard_id: usize, slice_index: usize) -> Result<Option<Checkpoint>>;
    /// Invalidates a checkpoint so it can never be loaded again.
    fn discard(&mut self, shard_id: usize, slice_index: usize, request_id: u64) -> Result<()>;
    /// Slice indices currently held for `shard_id`, ascending.
    fn slice_indices(&self, shard_id: usize) -> Result<Vec<usize>>;
}

#[derive(Debug, Clone, Default)]
pub struct MemoryStore {
    checkpoints: BTreeMap<(usize, usize), Checkpoint>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkpoints.is_empty()
    }
}

impl CheckpointStore for MemoryStore {
    fn put(&mut self, ck: &Checkpoint) -> Result<()> {
        self.checkpoints.insert((ck.shard_id, ck.slice_index), ck.clone());
        Ok(())
    }

    fn get(&self, shard_id: usize, slice_index: usize) -> Result<Option<Checkpoint>> {
        Ok(self.checkpoints.get(&(shard_id, slice_index)).cloned())
    }

    fn discard(&mut self, shard_id: usize, slice_index: usize, _request_id: u64) -> Result<()> {
        self.checkpoints.remove(&(shard_id, slice_index));
        Ok(())
    }

    fn slice_indices(&self, shard_id: usize) -> Result<Vec<usize>> {
        Ok(self
            .checkpoints
            .keys()
            .filter(|(s, _)| *s == shard_id)
            .map(|(_, k)| *k)
            .collect())
    }
}

/// Checkpoints as `shard{S}_slice{K}.ckpt` files in one directory.
/// Discarded files move to `tombstone/req{R}/` and are never read back.
#[derive(Debug, Clone)]
pub struct DirStore {
    dir: PathBuf,
}

impl DirStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_of(&self, shard_id: usize, slice_index: usize) -> PathBuf {
        checkpoint_path(&self.dir, shard_id, slice_index)
    }

    /// Every live checkpoint as (shard, slice).
    pub fn list(&self) -> Result<Vec<(usize, usize)>> {
        let mut out = Vec::new();
        let entries = std::fs::read_dir(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&self.dir, e))?;
            if let Some(key) = entry.file_name().to_str().and_then(parse_checkpoint_name) {
                out.push(key);
            }
        }
        out.sort_unstable();
        Ok(out)
    }
}

impl CheckpointStore for DirStore {
    fn put(&mut self, ck: &Checkpoint) -> Result<()> {
        let path = self.path_of(ck.shard_id, ck.slice_index);
        let tmp = path.with_extension("ckpt.tmp");
        ck.save(&tmp)?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    fn get(&self, shard_id: usize, slice_index: usize) -> Result<Option<Checkpoint>> {
        let path = self.path_of(shard_id, slice_index);
        if !path.exists() {
            return Ok(None);
        }
        Checkpoint::load(path).map(Some)
    }

    fn discard(&mut self, shard_id: usize, slice_index: usize, request_id: u64) -> Result<()> {
        let path = self.path_of(shard_id, slice_index);
        if !path.exists() {
            return Ok(());
        }
        let grave = self.dir.join(TOMBSTONE_DIR).join(format!("req{request_id}"));
        std::fs::create_dir_all(&grave).map_err(|e| Error::io(&grave, e))?;
        let target = grave.join(checkpoint_file_name(shard_id, slice_index));
        std::fs::rename(&path, &target).map_err(|e| Error::io(&path, e))
    }

    fn slice_indices(&self, shard_id: usize) -> Result<Vec<usize>> {
        Ok(self
            .list()?
            .into_iter()
            .filter(|(s, _)| *s == shard_id)
            .map(|(_, k)| k)
            .collect())
    }
}
