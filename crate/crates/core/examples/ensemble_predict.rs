//! Trains a four-shard ensemble and compares aggregation and point rules on
//! a held-out split.

use mobility_unlearn::config::{DatasetSource, ExperimentConfig};
use mobility_unlearn::dataset::SyntheticSpec;
use mobility_unlearn::ensemble::{rmse, Aggregation, EnsembleState, PointRule};
use mobility_unlearn::harness::{cell_trainer, load_dataset, SeedContext};
use mobility_unlearn::sharding::Strategy;
use mobility_unlearn::sisa::train_all_shards;
use mobility_unlearn::trainer::TrainingConfig;

pub fn run(n_records: usize) -> mobility_unlearn::Result<()> {
    let config = ExperimentConfig {
        dataset: DatasetSource::Synthetic(SyntheticSpec {
            n_records,
            ..Default::default()
        }),
        trainer: TrainingConfig {
            hidden: 32,
            learning_rate: 0.1,
            max_epochs: 60,
            patience: 5,
            min_delta: 1e-3,
            ..Default::default()
        },
        ..Default::default()
    };
    let records = load_dataset(&config.dataset)?;
    let ctx = SeedContext::prepare(&records, &config, 0)?;
    let plan = ctx.plan(Strategy::ClusterRr, 4, &config)?;
    let runs = train_all_shards(&plan, &ctx.samples, config.label.n_classes(), &cell_trainer(&config, 0))?;
    let constituents = runs.iter().map(|r| r.final_checkpoint().clone()).collect();
    let mut ensemble = EnsembleState::new(plan, constituents, config.label, ctx.pipeline.clone())?;

    for aggregation in [Aggregation::Mean, Aggregation::MajorityVote] {
        for rule in [PointRule::Expectation, PointRule::Argmax] {
            ensemble.aggregation = aggregation;
            ensemble.point_rule = rule;
            let preds = ctx
                .test
                .iter()
                .map(|t| ensemble.predict(t).map(|(_, m)| m))
                .collect::<mobility_unlearn::Result<Vec<_>>>()?;
            println!("{aggregation:?} + {rule:?}: RMSE {:.3} min", rmse(&preds, &ctx.test_minutes)?);
        }
    }

    ensemble.aggregation = Aggregation::Mean;
    ensemble.point_rule = PointRule::Expectation;
    for (t, truth) in ctx.test.iter().zip(&ctx.test_minutes).take(3) {
        let (dist, minutes) = ensemble.predict(t)?;
        let mode = dist.iter().enumerate().fold(0, |b, (i, p)| if *p > dist[b] { i } else { b });
        println!("  trip {:<5} predicted {minutes:>5.1} (mode {mode:>3}), actual {truth}", t.record_id);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> mobility_unlearn::Result<()> {
    run(SyntheticSpec::default().n_records)
}
