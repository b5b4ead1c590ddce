#![allow(dead_code, clippy::needless_range_loop)]

pub mod oracles;

use std::collections::BTreeMap;
use std::path::Path;

use mobility_unlearn::dataset::{generate_synthetic, LabelSpec, SyntheticSpec, TripRecord};
use mobility_unlearn::features::FeaturePipeline;
use mobility_unlearn::sharding::ShardPlan;
use mobility_unlearn::sisa::{build_samples, SisaModel};
use mobility_unlearn::store::{CheckpointStore, MemoryStore};
use mobility_unlearn::trainer::TrainingConfig;
use sha2::{Digest, Sha256};

pub fn trips(n_records: usize) -> Vec<TripRecord> {
    generate_synthetic(&SyntheticSpec { n_records, ..Default::default() }).unwrap()
}

pub fn small_trainer() -> TrainingConfig {
    TrainingConfig {
        hidden: 8,
        learning_rate: 0.1,
        max_epochs: 6,
        patience: 3,
        min_delta: 1e-3,
        ..Default::default()
    }
}

pub fn users_of(trips: &[TripRecord]) -> BTreeMap<u64, u64> {
    trips.iter().map(|t| (t.record_id, t.user_id)).collect()
}

pub fn ids_of(trips: &[TripRecord]) -> Vec<u64> {
    trips.iter().map(|t| t.record_id).collect()
}

pub fn model_with<S: CheckpointStore>(trips: &[TripRecord], plan: ShardPlan, store: S) -> SisaModel<S> {
    let pipeline = FeaturePipeline::default_fit(trips).unwrap();
    let label = LabelSpec::default();
    let features = pipeline.transform(trips).unwrap();
    let samples = build_samples(trips, &features, &label).unwrap();
    SisaModel::train(plan, samples, users_of(trips), pipeline, label, small_trainer(), store)
        .unwrap()
        .0
}

pub fn memory_model(trips: &[TripRecord], plan: ShardPlan) -> SisaModel<MemoryStore> {
    model_with(trips, plan, MemoryStore::new())
}

/// File name → SHA-256 of every checkpoint file in `dir`.
pub fn checksums(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| {
            let bytes = std::fs::read(e.path()).unwrap();
            (e.file_name().to_string_lossy().into_owned(), Sha256::digest(&bytes).to_vec())
        })
        .collect()
}
