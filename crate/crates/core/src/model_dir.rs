//! On-disk layout of a trained model:
//!
//! ```text
//! manifest.json   trainer config, label spec, fitted pipeline, deletion state
//! plan.csv        record_id,shard,slice
//! train.csv       live training records (deleted rows are removed)
//! checkpoints/    shard{S}_slice{K}.ckpt, plus tombstone/ for discarded ones
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{load_trips, save_trips, LabelSpec, TripRecord};
use crate::error::{Error, Result};
use crate::features::FeaturePipeline;
use crate::sharding::{ShardPlan, Strategy};
use crate::sisa::{build_samples, ShardSummary, SisaModel};
use crate::store::DirStore;
use crate::trainer::TrainingConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PLAN_FILE: &str = "plan.csv";
pub const TRAIN_FILE: &str = "train.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub training: TrainingConfig,
    pub label: LabelSpec,
    pub pipeline: FeaturePipeline,
    pub strategy: Strategy,
    pub partition_seed: u64,
    pub n_shards: usize,
    pub n_slices: usize,
    pub deleted: BTreeSet<u64>,
    /// Owners of deleted records, so repeat requests are still recognised.
    pub deleted_users: BTreeMap<u64, u64>,
    pub last_request_id: Option<u64>,
}

impl Manifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn save(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)?.as_bytes())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

impl SisaModel<DirStore> {
    /// Trains on `train` and writes a complete model directory.
    pub fn train_dir(
        dir: impl Into<PathBuf>,
        train: &[TripRecord],
        plan: ShardPlan,
        pipeline: FeaturePipeline,
        label_spec: LabelSpec,
        config: TrainingConfig,
    ) -> Result<(Self, Vec<ShardSummary>)> {
        let dir = dir.into();
        let store = DirStore::open(dir.join(CHECKPOINT_DIR))?;
        let features = pipeline.transform(train)?;
        let samples = build_samples(train, &features, &label_spec)?;
        let users = train.iter().map(|r| (r.record_id, r.user_id)).collect();
        let (model, summaries) = SisaModel::train(plan, samples, users, pipeline, label_spec, config, store)?;
        save_trips(dir.join(TRAIN_FILE), train)?;
        model.save_dir(&dir)?;
        Ok((model, summaries))
    }

    /// Reopens a directory written by [`SisaModel::train_dir`].
    pub fn open_dir(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let mut manifest = Manifest::load(&dir)?;
        manifest.pipeline.embedder.reload()?;
        let plan = ShardPlan::load_csv(
            dir.join(PLAN_FILE),
            manifest.strategy,
            manifest.partition_seed,
            Some(manifest.n_shards),
            Some(manifest.n_slices),
        )?;
        let train = load_trips(dir.join(TRAIN_FILE))?;
        let features = manifest.pipeline.transform(&train)?;
        let samples = build_samples(&train, &features, &manifest.label)?;
        let mut users: BTreeMap<u64, u64> = train.iter().map(|r| (r.record_id, r.user_id)).collect();
        users.extend(&manifest.deleted_users);
        SisaModel::restore(
            plan,
            samples,
            users,
            manifest.pipeline,
            manifest.label,
            manifest.training,
            manifest.deleted,
            manifest.last_request_id,
            DirStore::open(dir.join(CHECKPOINT_DIR))?,
        )
    }

    /// Writes the manifest and plan, and drops deleted rows from the stored
    /// training records. Checkpoints are already current in the store.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let manifest = Manifest {
            training: self.config.clone(),
            label: self.label_spec,
            pipeline: self.pipeline.clone(),
            strategy: self.plan.strategy,
            partition_seed: self.plan.seed,
            n_shards: self.plan.n_shards,
            n_slices: self.plan.n_slices,
            deleted: self.deleted.clone(),
            deleted_users: self
                .deleted
                .iter()
                .filter_map(|id| self.users.get(id).map(|u| (*id, *u)))
                .collect(),
            last_request_id: self.last_request_id,
        };
        let plan_tmp = dir.join("plan.csv.tmp");
        self.plan.save_csv(&plan_tmp)?;
        std::fs::rename(&plan_tmp, dir.join(PLAN_FILE)).map_err(|e| Error::io(dir.join(PLAN_FILE), e))?;
        let train_path = dir.join(TRAIN_FILE);
        if !self.deleted.is_empty() && train_path.exists() {
            let live: Vec<TripRecord> = load_trips(&train_path)?
                .into_iter()
                .filter(|r| !self.deleted.contains(&r.record_id))
                .collect();
            let tmp = dir.join("train.csv.tmp");
            save_trips(&tmp, &live)?;
            std::fs::rename(&tmp, &train_path).map_err(|e| Error::io(&train_path, e))?;
        }
        manifest.save(dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticSpec};
    use crate::sharding::partition_random;
    use crate::unlearning::DeletionRequest;

    #[test]
    fn reopened_model_matches_and_forgets_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let trips = generate_synthetic(&SyntheticSpec {
            n_records: 120,
            ..Default::default()
        })
        .unwrap();
        let pipeline = FeaturePipeline::default_fit(&trips).unwrap();
        let ids: Vec<u64> = trips.iter().map(|t| t.record_id).collect();
        let plan = partition_random(&ids, 3, 5, 2).unwrap();
        let config = TrainingConfig {
            hidden: 8,
            max_epochs: 5,
            patience: 2,
            learning_rate: 0.05,
            ..Default::default()
        };
        let (mut model, _) =
            SisaModel::train_dir(dir.path(), &trips, plan, pipeline, LabelSpec::default(), config).unwrap();
        model.unlearn(&DeletionRequest::records(1, vec![ids[7]])).unwrap();
        model.save_dir(dir.path()).unwrap();

        let reopened = SisaModel::open_dir(dir.path()).unwrap();
        assert_eq!(reopened.constituents(), model.constituents());
        assert_eq!(reopened.plan(), model.plan());
        assert_eq!(reopened.samples(), model.samples());
        assert_eq!(reopened.last_request_id(), Some(1));
        assert!(reopened.verify_exactness().unwrap().exact);
        let on_disk = load_trips(dir.path().join(TRAIN_FILE)).unwrap();
        assert!(on_disk.iter().all(|r| r.record_id != ids[7]));
        assert_eq!(on_disk.len(), 119);
    }
}
