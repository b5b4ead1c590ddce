//! Compares cluster-aware and random partitioning across shard counts.
//!
//! Extra arguments are `key=value` config overrides, e.g.
//! `cargo run --release --example shard_sweep -- seeds=0,1 trainer.hidden=32`.
//! CSVs are written to `target/shard_sweep/`.

use std::time::Instant;

use mobility_unlearn::config::ExperimentConfig;
use mobility_unlearn::harness::{emit_report, run_sweep};

fn main() -> mobility_unlearn::Result<()> {
    let overrides: Vec<String> = std::env::args().skip(1).collect();
    let config = ExperimentConfig::parse(&overrides.join("\n"))?;
    let start = Instant::now();
    let report = run_sweep(&config)?;
    println!("{:<12} {:>8} {:>12} {:>10} {:>12}", "strategy", "shards", "rmse_mean", "rmse_sd", "mean_epochs");
    for row in report.summary() {
        println!(
            "{:<12} {:>8} {:>12.3} {:>10.3} {:>12.1}",
            row.strategy.to_string(),
            row.n_shards,
            row.rmse_mean,
            row.rmse_sd,
            row.mean_epochs_mean
        );
    }
    emit_report(&report, "target/shard_sweep")?;
    println!("{} cells in {:.1}s", report.rows.len(), start.elapsed().as_secs_f64());
    Ok(())
}
