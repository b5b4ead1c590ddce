//! Clusters synthetic trips in a 2-D projection and deals them into shards.
//!
//! Prints how the mixture components line up with the generator's latent
//! groups, then the per-shard cluster counts for both strategies.

use mobility_unlearn::dataset::{generate_synthetic, SyntheticSpec};
use mobility_unlearn::features::FeaturePipeline;
use mobility_unlearn::harness::cluster;
use mobility_unlearn::sharding::{partition_cluster_rr, partition_random, GmmConfig, ShardPlan};

const N_SHARDS: usize = 4;

fn cluster_counts(plan: &ShardPlan, labels: &[usize], ids: &[u64], k: usize) -> Vec<Vec<usize>> {
    let assignment = plan.assignment();
    let mut counts = vec![vec![0; k]; plan.n_shards];
    for (id, &c) in ids.iter().zip(labels) {
        counts[assignment[id].0][c] += 1;
    }
    counts
}

fn main() -> mobility_unlearn::Result<()> {
    let spec = SyntheticSpec::default();
    let trips = generate_synthetic(&spec)?;
    let pipeline = FeaturePipeline::default_fit(&trips)?;
    let features = pipeline.transform(&trips)?;
    let gmm_config = GmmConfig::default();
    let (gmm, labels) = cluster(&features, &gmm_config, 0)?;
    println!(
        "fitted {} components in {} EM steps, final mean log-likelihood {:.4}",
        gmm.n_components,
        gmm.log_likelihood_trace.len(),
        gmm.log_likelihood_trace.last().copied().unwrap_or(f64::NAN)
    );

    // Latent group is encoded in the synthetic user id.
    let k = gmm.n_components;
    let mut table = vec![vec![0usize; spec.n_latent_groups]; k];
    for (t, &c) in trips.iter().zip(&labels) {
        table[c][(t.user_id / 10_000) as usize] += 1;
    }
    println!("\ncomponent × latent group");
    for (c, row) in table.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|n| format!("{n:>5}")).collect();
        println!("  c{c}: {}", cells.join(""));
    }
    let purity = table.iter().map(|r| *r.iter().max().unwrap()).sum::<usize>() as f64 / trips.len() as f64;
    println!("purity {purity:.3}");

    let ids: Vec<u64> = trips.iter().map(|t| t.record_id).collect();
    for (name, plan) in [
        ("cluster_rr", partition_cluster_rr(&labels, &ids, N_SHARDS, 1)?),
        ("random", partition_random(&ids, N_SHARDS, 0, 1)?),
    ] {
        println!("\n{name}: shard sizes {:?}", plan.shard_sizes());
        for (s, row) in cluster_counts(&plan, &labels, &ids, k).iter().enumerate() {
            println!("  shard {s}: {row:?}");
        }
    }
    Ok(())
}
