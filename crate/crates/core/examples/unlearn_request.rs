//! Trains a sliced model into a directory, forgets one record and then one
//! user, and checks each result against a retrain from scratch.

use std::collections::BTreeMap;

use mobility_unlearn::dataset::{generate_synthetic, LabelSpec, SyntheticSpec};
use mobility_unlearn::features::FeaturePipeline;
use mobility_unlearn::sharding::partition_random;
use mobility_unlearn::sisa::SisaModel;
use mobility_unlearn::trainer::TrainingConfig;
use mobility_unlearn::unlearning::DeletionRequest;

fn checkpoint_bytes(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .expect("checkpoint dir")
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "ckpt"))
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect()
}

pub fn run(n_records: usize) -> mobility_unlearn::Result<()> {
    let trips = generate_synthetic(&SyntheticSpec {
        n_records,
        ..Default::default()
    })?;
    let pipeline = FeaturePipeline::default_fit(&trips)?;
    let ids: Vec<u64> = trips.iter().map(|t| t.record_id).collect();
    let plan = partition_random(&ids, 4, 11, 4)?;
    let config = TrainingConfig {
        hidden: 16,
        learning_rate: 0.1,
        max_epochs: 20,
        patience: 4,
        min_delta: 1e-3,
        ..Default::default()
    };

    let dir = std::env::temp_dir().join(format!("mobunlearn-model-{}", std::process::id()));
    let (mut model, summaries) =
        SisaModel::train_dir(&dir, &trips, plan, pipeline, LabelSpec::default(), config)?;
    let full_cost: usize = summaries.iter().map(|s| s.samples_processed).sum();
    println!("trained {} shards; full training processed {full_cost} samples", summaries.len());

    let ck_dir = dir.join(mobility_unlearn::model_dir::CHECKPOINT_DIR);
    let before = checkpoint_bytes(&ck_dir);
    let target = ids[ids.len() / 3];
    let report = model.unlearn(&DeletionRequest::records(1, vec![target]))?;
    model.save_dir(&dir)?;
    let after = checkpoint_bytes(&ck_dir);
    let hit = &report.per_shard[0];
    println!(
        "forgot record {target}: shard {} resumed at slice {}, {} samples ({:.0}% of full)",
        hit.shard_id,
        hit.resume_slice_index,
        hit.samples_processed,
        100.0 * hit.samples_processed as f64 / full_cost as f64
    );
    let untouched = before
        .iter()
        .filter(|(name, _)| !name.starts_with(&format!("shard{}_", hit.shard_id)))
        .all(|(name, bytes)| after.get(name) == Some(bytes));
    println!("other shards' checkpoint files unchanged: {untouched}");

    let user = trips[0].user_id;
    let report = model.unlearn(&DeletionRequest::users(2, vec![user]))?;
    model.save_dir(&dir)?;
    println!(
        "forgot user {user}: {} records across shards {:?}",
        report.records_removed, report.affected_shards
    );

    let reopened = SisaModel::open_dir(&dir)?;
    let check = reopened.verify_exactness()?;
    println!("matches a scratch retrain: {} (max |Δθ| = {})", check.exact, check.max_param_diff);
    std::fs::remove_dir_all(&dir).ok();
    assert!(check.exact && untouched);
    Ok(())
}

#[allow(dead_code)]
fn main() -> mobility_unlearn::Result<()> {
    run(2000)
}
