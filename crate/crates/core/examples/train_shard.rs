//! Trains one constituent over four slices and shows that resuming from a
//! stored pre-slice checkpoint reproduces the full run bit for bit.

use mobility_unlearn::dataset::{generate_synthetic, LabelSpec, SyntheticSpec};
use mobility_unlearn::features::FeaturePipeline;
use mobility_unlearn::sharding::partition_random;
use mobility_unlearn::sisa::{build_samples, shard_slices};
use mobility_unlearn::trainer::{train_shard, TrainingConfig};

pub fn run(n_records: usize) -> mobility_unlearn::Result<()> {
    let trips = generate_synthetic(&SyntheticSpec {
        n_records,
        ..Default::default()
    })?;
    let pipeline = FeaturePipeline::default_fit(&trips)?;
    let labels = LabelSpec::default();
    let samples = build_samples(&trips, &pipeline.transform(&trips)?, &labels)?;
    let ids: Vec<u64> = trips.iter().map(|t| t.record_id).collect();
    let plan = partition_random(&ids, 2, 7, 4)?;
    let slices = shard_slices(&plan, 0, &samples)?;

    let config = TrainingConfig {
        hidden: 32,
        learning_rate: 0.1,
        max_epochs: 40,
        patience: 5,
        min_delta: 1e-3,
        ..Default::default()
    };
    let full = train_shard(0, &slices, labels.n_classes(), &config, None)?;
    println!("slice sizes {:?}", slices.iter().map(Vec::len).collect::<Vec<_>>());
    println!("epochs per slice {:?}, {} samples processed", full.epochs_per_slice, full.samples_processed);
    for ck in &full.checkpoints {
        println!(
            "  checkpoint slice {} covers {:>4} records ({} bytes)",
            ck.slice_index,
            ck.incorporated_ids.len(),
            ck.to_bytes().len()
        );
    }

    let resumed = train_shard(0, &slices, labels.n_classes(), &config, Some(&full.checkpoints[2]))?;
    let same = resumed.final_checkpoint().params.bit_identical(&full.final_checkpoint().params);
    println!(
        "resume from slice 2: {} samples processed, final parameters identical: {same}",
        resumed.samples_processed
    );
    assert!(same);
    Ok(())
}

#[allow(dead_code)]
fn main() -> mobility_unlearn::Result<()> {
    run(2000)
}
