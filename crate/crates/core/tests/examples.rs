//! Runs each library example on a small dataset.

#[allow(dead_code)]
#[path = "../examples/synth_dataset.rs"]
mod synth_dataset;
#[allow(dead_code)]
#[path = "../examples/feature_pipeline.rs"]
mod feature_pipeline;
#[allow(dead_code)]
#[path = "../examples/train_shard.rs"]
mod train_shard;
#[allow(dead_code)]
#[path = "../examples/ensemble_predict.rs"]
mod ensemble_predict;
#[allow(dead_code)]
#[path = "../examples/unlearn_request.rs"]
mod unlearn_request;

#[test]
fn synth_dataset_runs() {
    synth_dataset::run(400).unwrap();
}

#[test]
fn feature_pipeline_runs() {
    feature_pipeline::run(400).unwrap();
}

#[test]
fn train_shard_runs() {
    train_shard::run(400).unwrap();
}

#[test]
fn ensemble_predict_runs() {
    ensemble_predict::run(600).unwrap();
}

#[test]
fn unlearn_request_runs() {
    unlearn_request::run(600).unwrap();
}
