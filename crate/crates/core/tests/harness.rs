use std::collections::HashSet;

use mobility_unlearn::config::{DatasetSource, ExperimentConfig};
use mobility_unlearn::dataset::SyntheticSpec;
use mobility_unlearn::harness::{
    emit_report, load_dataset, run_sweep, run_unlearning_benchmark, split_train_test, SeedContext, SweepReport,
};
use mobility_unlearn::sharding::Strategy;
use mobility_unlearn::trainer::TrainingConfig;

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetSource::Synthetic(SyntheticSpec { n_records: 500, ..Default::default() }),
        shard_counts: vec![1, 2, 4],
        seeds: vec![0, 1],
        trainer: TrainingConfig {
            hidden: 8,
            learning_rate: 0.1,
            max_epochs: 6,
            patience: 3,
            min_delta: 1e-3,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn sweep() -> SweepReport {
    run_sweep(&small_config()).unwrap()
}

#[test]
fn sweep_is_deterministic_and_complete() {
    let a = sweep();
    let b = sweep();
    assert_eq!(a.sweep_csv(), b.sweep_csv());
    assert_eq!(a.rows.len(), 2 * 3 * 2);
    let cells: HashSet<(Strategy, usize, u64)> = a.rows.iter().map(|r| (r.strategy, r.n_shards, r.seed)).collect();
    assert_eq!(cells.len(), a.rows.len());
    for r in &a.rows {
        assert!(r.rmse_minutes.is_finite() && r.rmse_minutes > 0.0);
        assert!(r.min_epochs as f64 <= r.mean_epochs_per_shard && r.mean_epochs_per_shard <= r.max_epochs as f64);
    }
    assert!(!a.sweep_csv().contains("wall"));
}

#[test]
fn one_shard_rows_agree_across_strategies() {
    let report = sweep();
    for seed in [0, 1] {
        let pick = |s| {
            let r = report.rows.iter().find(|r| r.strategy == s && r.n_shards == 1 && r.seed == seed).unwrap();
            (r.rmse_minutes, r.mean_epochs_per_shard, r.min_epochs, r.max_epochs)
        };
        assert_eq!(pick(Strategy::ClusterRr), pick(Strategy::Random));
    }
}

#[test]
fn emitted_files_have_the_declared_shape() {
    let report = sweep();
    let summary = report.summary();
    assert_eq!(summary.len(), 2 * 3);
    assert!(summary.iter().all(|r| r.n_seeds == 2));

    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path()).unwrap();
    let read = |name: &str| std::fs::read_to_string(dir.path().join(name)).unwrap();
    let first = ["sweep.csv", "summary.csv", "figure3.csv", "figure4.csv"].map(read);
    assert_eq!(first[2].lines().next(), Some("strategy,n_shards,rmse_mean,rmse_sd"));
    assert_eq!(first[2].lines().count(), 1 + 6);
    let fig4 = first[3].lines().next().unwrap();
    for col in ["mean_epochs", "min_epochs", "max_epochs"] {
        assert!(fig4.contains(col), "{fig4}");
    }
    emit_report(&report, dir.path()).unwrap();
    assert_eq!(first, ["sweep.csv", "summary.csv", "figure3.csv", "figure4.csv"].map(read));

    assert!(emit_report(&SweepReport::default(), dir.path()).is_err());
}

#[test]
fn split_is_disjoint_and_test_never_sharded() {
    let config = small_config();
    let records = load_dataset(&config.dataset).unwrap();
    let (train, test) = split_train_test(&records, 0.8, 3);
    assert_eq!(train.len() + test.len(), records.len());
    assert_eq!(test.len(), 100);
    let train_ids: HashSet<u64> = train.iter().map(|r| r.record_id).collect();
    assert!(test.iter().all(|r| !train_ids.contains(&r.record_id)));
    assert_ne!(split_train_test(&records, 0.8, 4).1, test);

    let ctx = SeedContext::prepare(&records, &config, 3).unwrap();
    assert_eq!(ctx.test, test);
    for strategy in [Strategy::ClusterRr, Strategy::Random] {
        let plan = ctx.plan(strategy, 4, &config).unwrap();
        assert_eq!(plan.len(), train.len());
        assert!(test.iter().all(|r| plan.locate(r.record_id).is_none()));
    }
    assert!(ctx.plan(Strategy::Random, train.len() + 1, &config).is_err());
}

#[test]
fn infeasible_shard_count_fails_the_sweep() {
    let mut config = small_config();
    config.shard_counts = vec![2, 401];
    assert!(run_sweep(&config).is_err());
}

#[test]
fn unlearning_cost_shrinks_with_more_shards() {
    let mut config = small_config();
    config.shard_counts = vec![1, 2, 4, 16];
    config.strategies = vec![Strategy::Random];
    // The earliest possible stop is the last epoch, so cost is proportional
    // to shard size.
    config.trainer.patience = config.trainer.max_epochs - 1;
    let report = run_unlearning_benchmark(&config, 4).unwrap();
    assert!(report.all_exact());
    assert_eq!(report.rows.len(), 4 * 4);

    let means = report.means();
    for w in means.windows(2) {
        assert!(w[1].3 < w[0].3, "{:?} then {:?}", w[0], w[1]);
    }
    let epochs = config.trainer.max_epochs as f64;
    for row in report.rows.iter().filter(|r| r.n_shards == 16) {
        let share = row.scratch_samples_processed as f64 / 16.0;
        assert!((row.samples_processed as f64 - share).abs() <= epochs, "{row:?}");
        assert_eq!(row.epochs_retrained, config.trainer.max_epochs);
    }
}
