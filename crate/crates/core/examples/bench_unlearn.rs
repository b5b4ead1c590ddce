//! Measures what single-record deletions cost at several shard counts,
//! next to the cost of retraining everything.

use mobility_unlearn::config::ExperimentConfig;
use mobility_unlearn::harness::run_unlearning_benchmark;

fn main() -> mobility_unlearn::Result<()> {
    let config = ExperimentConfig::parse(
        "shard_counts = 1,2,4,8,16\nseeds = 0\ndataset.synthetic.n_records = 2000\n\
         trainer.hidden = 32\ntrainer.learning_rate = 0.1\ntrainer.max_epochs = 60\n\
         trainer.patience = 5\ntrainer.min_delta = 0.001\n",
    )?;
    let report = run_unlearning_benchmark(&config, 5)?;
    println!("{:<12} {:>7} {:>14} {:>16} {:>16}", "strategy", "shards", "epochs/req", "samples/req", "scratch samples");
    for (strategy, n, epochs, samples) in report.means() {
        let scratch = report
            .rows
            .iter()
            .filter(|r| r.strategy == strategy && r.n_shards == n)
            .map(|r| r.scratch_samples_processed as f64)
            .sum::<f64>()
            / 5.0;
        println!("{:<12} {n:>7} {epochs:>14.1} {samples:>16.0} {scratch:>16.0}", strategy.to_string());
    }
    println!("all requests exact: {}", report.all_exact());
    Ok(())
}
