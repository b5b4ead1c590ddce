//! Fits the feature pipeline on a training split and shows the layout of
//! the resulting vectors.

use mobility_unlearn::dataset::{generate_synthetic, SyntheticSpec};
use mobility_unlearn::features::{hash_embed, FeaturePipeline, NUMERIC_FEATURES};
use mobility_unlearn::harness::split_train_test;

pub fn run(n_records: usize) -> mobility_unlearn::Result<()> {
    let trips = generate_synthetic(&SyntheticSpec {
        n_records,
        ..Default::default()
    })?;
    let (train, test) = split_train_test(&trips, 0.8, 0);
    let pipeline = FeaturePipeline::default_fit(&train)?;
    println!(
        "{} numeric + {} text = {} features",
        pipeline.standardizer.dim(),
        pipeline.text_pca.out_dim(),
        pipeline.dim()
    );

    let ev = &pipeline.text_pca.explained_variance;
    let total: f64 = ev.iter().sum();
    println!("text PCA: first 4 components carry {:.0}% of the kept variance", 100.0 * ev[..4].iter().sum::<f64>() / total);

    let a = hash_embed("wheelchair ramp", 256);
    let b = hash_embed("Wheelchair, RAMP!", 256);
    println!("hashing is case/punctuation blind: {}", a == b);

    let features = pipeline.transform(&test[..1])?;
    println!("\nrecord {}:", test[0].record_id);
    for (name, v) in NUMERIC_FEATURES.iter().zip(&features[0].values) {
        println!("  {name:<22} {v:>8.3}");
    }
    println!("  text[0..4]             {:?}", &features[0].values[13..17]);
    Ok(())
}

#[allow(dead_code)]
fn main() -> mobility_unlearn::Result<()> {
    run(SyntheticSpec::default().n_records)
}
