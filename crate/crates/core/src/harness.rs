//! Shard-count sweeps comparing cluster-aware and random partitioning, and
//! unlearning-cost benchmarks. Outputs are plain CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{DatasetSource, ExperimentConfig};
use crate::dataset::{derive_label, generate_synthetic, load_trips, TripRecord};
use crate::ensemble::{rmse, EnsembleState};
use crate::error::{Error, Result};
use crate::features::{project_2d, EmbedderKind, FeaturePipeline, FeatureVector, TextEmbedder};
use crate::rng::SeededRng;
use crate::sharding::{
    fit_gmm, partition_by_user, partition_cluster_rr, partition_random, GmmConfig, GmmParams, Point, ShardPlan,
    Strategy,
};
use crate::sisa::{build_samples, train_all_shards, SampleMap, SisaModel};
use crate::store::MemoryStore;
use crate::trainer::TrainingConfig;
use crate::unlearning::DeletionRequest;

const SPLIT_TAG: u64 = 0x5_9117;
const BENCH_TAG: u64 = 0xbe_4c4;

pub fn load_dataset(source: &DatasetSource) -> Result<Vec<TripRecord>> {
    match source {
        DatasetSource::Synthetic(spec) => generate_synthetic(spec),
        DatasetSource::File(path) => load_trips(path),
    }
}

pub fn build_embedder(config: &ExperimentConfig) -> Result<TextEmbedder> {
    match config.embedder.kind {
        EmbedderKind::Hashing => TextEmbedder::hashing(config.embedder.dim),
        EmbedderKind::Precomputed => {
            let path = config
                .embedder
                .lookup_path
                .as_ref()
                .ok_or_else(|| Error::invalid("precomputed embedder needs embedder.lookup_path"))?;
            TextEmbedder::load_precomputed(path, config.embedder.dim)
        }
    }
}

/// Seeded split; both halves keep the input order.
pub fn split_train_test(records: &[TripRecord], train_fraction: f64, seed: u64) -> (Vec<TripRecord>, Vec<TripRecord>) {
    let n_train = ((records.len() as f64) * train_fraction).round() as usize;
    let mut idx: Vec<usize> = (0..records.len()).collect();
    SeededRng::derived(seed, SPLIT_TAG).shuffle(&mut idx);
    let mut is_train = vec![false; records.len()];
    for &i in &idx[..n_train] {
        is_train[i] = true;
    }
    let (train, test): (Vec<_>, Vec<_>) = records.iter().cloned().zip(is_train).partition(|(_, t)| *t);
    (
        train.into_iter().map(|(r, _)| r).collect(),
        test.into_iter().map(|(r, _)| r).collect(),
    )
}

/// Everything about one seed that does not depend on the partition.
pub struct SeedContext {
    pub seed: u64,
    pub train: Vec<TripRecord>,
    pub test: Vec<TripRecord>,
    pub pipeline: FeaturePipeline,
    pub train_features: Vec<FeatureVector>,
    pub test_features: Vec<FeatureVector>,
    pub samples: SampleMap,
    pub test_minutes: Vec<f64>,
    /// Mixture fit over the 2-D projection of the training features, with
    /// per-record hard labels aligned to `train`.
    pub clustering: Option<(GmmParams, Vec<usize>)>,
}

impl SeedContext {
    pub fn prepare(records: &[TripRecord], config: &ExperimentConfig, seed: u64) -> Result<Self> {
        let (train, test) = split_train_test(records, config.train_fraction, seed);
        if train.is_empty() || test.is_empty() {
            return Err(Error::invalid("train/test split left an empty side"));
        }
        let pipeline =
            FeaturePipeline::fit_with_text_dim(&train, build_embedder(config)?, config.speed_limit_kmh, config.text_dim)?;
        let train_features = pipeline.transform(&train)?;
        let test_features = pipeline.transform(&test)?;
        let samples = build_samples(&train, &train_features, &config.label)?;
        let test_minutes = test.iter().map(|r| derive_label(r, &config.label) as f64).collect();
        let clustering = if config.strategies.contains(&Strategy::ClusterRr) {
            let (gmm, labels) = cluster(&train_features, &config.gmm, seed)?;
            Some((gmm, labels))
        } else {
            None
        };
        Ok(Self {
            seed,
            train,
            test,
            pipeline,
            train_features,
            test_features,
            samples,
            test_minutes,
            clustering,
        })
    }

    pub fn users(&self) -> BTreeMap<u64, u64> {
        self.train.iter().map(|r| (r.record_id, r.user_id)).collect()
    }

    pub fn plan(&self, strategy: Strategy, n_shards: usize, config: &ExperimentConfig) -> Result<ShardPlan> {
        if n_shards > self.train.len() {
            return Err(Error::invalid(format!(
                "{n_shards} shards for {} training records",
                self.train.len()
            )));
        }
        let ids: Vec<u64> = self.train.iter().map(|r| r.record_id).collect();
        let labels = match strategy {
            Strategy::ClusterRr => Some(
                self.clustering
                    .as_ref()
                    .map(|(_, l)| l.as_slice())
                    .ok_or(Error::NotFitted("cluster labels"))?,
            ),
            Strategy::Random => None,
        };
        if config.group_by_user {
            let users: Vec<u64> = self.train.iter().map(|r| r.user_id).collect();
            return partition_by_user(&ids, &users, labels, n_shards, self.seed, config.n_slices);
        }
        match labels {
            Some(l) => partition_cluster_rr(l, &ids, n_shards, config.n_slices),
            None => partition_random(&ids, n_shards, self.seed, config.n_slices),
        }
    }

    pub fn evaluate(&self, ensemble: &EnsembleState) -> Result<f64> {
        let preds = self
            .test_features
            .iter()
            .map(|f| ensemble.predict_features(&f.values).map(|(_, m)| m))
            .collect::<Result<Vec<_>>>()?;
        rmse(&preds, &self.test_minutes)
    }
}

/// Projects features to 2-D and clusters them with the mixture model.
pub fn cluster(features: &[FeatureVector], gmm: &GmmConfig, seed: u64) -> Result<(GmmParams, Vec<usize>)> {
    let rows: Vec<Vec<f64>> = features.iter().map(|f| f.values.clone()).collect();
    let points: Vec<Point> = project_2d(&rows)?;
    let cfg = GmmConfig {
        seed: gmm.seed.wrapping_add(seed),
        ..gmm.clone()
    };
    let params = fit_gmm(&points, &cfg)?;
    let labels = params.hard_assign(&points);
    Ok((params, labels))
}

pub fn cell_trainer(config: &ExperimentConfig, seed: u64) -> TrainingConfig {
    TrainingConfig {
        seed: config.trainer.seed.wrapping_add(seed),
        ..config.trainer.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub strategy: Strategy,
    pub n_shards: usize,
    pub seed: u64,
    pub rmse_minutes: f64,
    pub mean_epochs_per_shard: f64,
    pub min_epochs: usize,
    pub max_epochs: usize,
    pub train_wall_time_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub strategies: Vec<Strategy>,
    pub shard_counts: Vec<usize>,
}

/// Trains and scores every (strategy, shard count, seed) cell.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepReport> {
    config.validate()?;
    let records = load_dataset(&config.dataset)?;
    let mut rows = Vec::new();
    for &seed in &config.seeds {
        let ctx = SeedContext::prepare(&records, config, seed)?;
        let trainer = cell_trainer(config, seed);
        for &n_shards in &config.shard_counts {
            // Strategies that produce the same partition share one training run.
            let mut trained: Vec<(ShardPlan, SweepRow)> = Vec::new();
            for &strategy in &config.strategies {
                let plan = ctx.plan(strategy, n_shards, config)?;
                if let Some((_, row)) = trained.iter().find(|(p, _)| p.slices == plan.slices) {
                    rows.push(SweepRow {
                        strategy,
                        ..row.clone()
                    });
                    continue;
                }
                let start = Instant::now();
                let runs = train_all_shards(&plan, &ctx.samples, config.label.n_classes(), &trainer)?;
                let wall = start.elapsed().as_secs_f64();
                let constituents = runs.iter().map(|r| r.final_checkpoint().clone()).collect();
                let ensemble = EnsembleState::new(plan.clone(), constituents, config.label, ctx.pipeline.clone())?;
                let epochs: Vec<usize> = runs.iter().map(|r| r.total_epochs()).collect();
                let row = SweepRow {
                    strategy,
                    n_shards,
                    seed,
                    rmse_minutes: ctx.evaluate(&ensemble)?,
                    mean_epochs_per_shard: epochs.iter().sum::<usize>() as f64 / epochs.len() as f64,
                    min_epochs: *epochs.iter().min().unwrap(),
                    max_epochs: *epochs.iter().max().unwrap(),
                    train_wall_time_s: wall,
                };
                trained.push((plan, row.clone()));
                rows.push(row);
            }
        }
    }
    let strategy_rank = |s: &Strategy| config.strategies.iter().position(|x| x == s).unwrap_or(usize::MAX);
    let shard_rank = |n: &usize| config.shard_counts.iter().position(|x| x == n).unwrap_or(usize::MAX);
    rows.sort_by_key(|r| (strategy_rank(&r.strategy), shard_rank(&r.n_shards), r.seed));
    Ok(SweepReport {
        rows,
        strategies: config.strategies.clone(),
        shard_counts: config.shard_counts.clone(),
    })
}

/// Aggregate of one (strategy, n_shards) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: Strategy,
    pub n_shards: usize,
    pub n_seeds: usize,
    pub rmse_mean: f64,
    pub rmse_sd: f64,
    pub mean_epochs_mean: f64,
    pub mean_epochs_sd: f64,
    pub min_epochs_mean: f64,
    pub max_epochs_mean: f64,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl SweepReport {
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut out = Vec::new();
        for &strategy in &self.strategies {
            for &n_shards in &self.shard_counts {
                let cell: Vec<&SweepRow> = self
                    .rows
                    .iter()
                    .filter(|r| r.strategy == strategy && r.n_shards == n_shards)
                    .collect();
                if cell.is_empty() {
                    continue;
                }
                let pick = |f: fn(&SweepRow) -> f64| -> Vec<f64> { cell.iter().map(|r| f(r)).collect() };
                let (rmse_mean, rmse_sd) = mean_sd(&pick(|r| r.rmse_minutes));
                let (mean_epochs_mean, mean_epochs_sd) = mean_sd(&pick(|r| r.mean_epochs_per_shard));
                out.push(SummaryRow {
                    strategy,
                    n_shards,
                    n_seeds: cell.len(),
                    rmse_mean,
                    rmse_sd,
                    mean_epochs_mean,
                    mean_epochs_sd,
                    min_epochs_mean: mean_sd(&pick(|r| r.min_epochs as f64)).0,
                    max_epochs_mean: mean_sd(&pick(|r| r.max_epochs as f64)).0,
                });
            }
        }
        out
    }

    pub fn summary_for(&self, strategy: Strategy, n_shards: usize) -> Option<SummaryRow> {
        self.summary()
            .into_iter()
            .find(|r| r.strategy == strategy && r.n_shards == n_shards)
    }

    /// Raw rows without timing, so identical configs give identical bytes.
    pub fn sweep_csv(&self) -> String {
        let mut s = String::from("strategy,n_shards,seed,rmse_minutes,mean_epochs_per_shard,min_epochs,max_epochs\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.strategy, r.n_shards, r.seed, r.rmse_minutes, r.mean_epochs_per_shard, r.min_epochs, r.max_epochs
            );
        }
        s
    }

    pub fn timings_csv(&self) -> String {
        let mut s = String::from("strategy,n_shards,seed,train_wall_time_s\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{:.3}", r.strategy, r.n_shards, r.seed, r.train_wall_time_s);
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from(
            "strategy,n_shards,n_seeds,rmse_mean,rmse_sd,mean_epochs_mean,mean_epochs_sd,min_epochs_mean,max_epochs_mean\n",
        );
        for r in self.summary() {
            let _ = writeln!(
                s,
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                r.strategy,
                r.n_shards,
                r.n_seeds,
                r.rmse_mean,
                r.rmse_sd,
                r.mean_epochs_mean,
                r.mean_epochs_sd,
                r.min_epochs_mean,
                r.max_epochs_mean
            );
        }
        s
    }

    pub fn figure3_csv(&self) -> String {
        let mut s = String::from("strategy,n_shards,rmse_mean,rmse_sd\n");
        for r in self.summary() {
            let _ = writeln!(s, "{},{},{:.6},{:.6}", r.strategy, r.n_shards, r.rmse_mean, r.rmse_sd);
        }
        s
    }

    pub fn figure4_csv(&self) -> String {
        let mut s = String::from("strategy,n_shards,mean_epochs,mean_epochs_sd,min_epochs,max_epochs\n");
        for r in self.summary() {
            let _ = writeln!(
                s,
                "{},{},{:.6},{:.6},{:.6},{:.6}",
                r.strategy, r.n_shards, r.mean_epochs_mean, r.mean_epochs_sd, r.min_epochs_mean, r.max_epochs_mean
            );
        }
        s
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `sweep.csv`, `timings.csv`, `summary.csv`, `figure3.csv`, and
/// `figure4.csv` into `out_dir`.
pub fn emit_report(report: &SweepReport, out_dir: impl AsRef<Path>) -> Result<()> {
    if report.rows.is_empty() {
        return Err(Error::invalid("cannot emit an empty sweep report"));
    }
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(dir, "sweep.csv", &report.sweep_csv())?;
    write_file(dir, "timings.csv", &report.timings_csv())?;
    write_file(dir, "summary.csv", &report.summary_csv())?;
    write_file(dir, "figure3.csv", &report.figure3_csv())?;
    write_file(dir, "figure4.csv", &report.figure4_csv())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub strategy: Strategy,
    pub n_shards: usize,
    pub request_id: u64,
    pub record_id: u64,
    pub shard: usize,
    pub resume_slice: usize,
    pub epochs_retrained: usize,
    pub samples_processed: usize,
    pub scratch_epochs: usize,
    pub scratch_samples_processed: usize,
    pub exact: bool,
    pub max_param_diff: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn all_exact(&self) -> bool {
        self.rows.iter().all(|r| r.exact)
    }

    /// Mean (epochs_retrained, samples_processed) per (strategy, n_shards).
    pub fn means(&self) -> Vec<(Strategy, usize, f64, f64)> {
        let mut groups: Vec<(Strategy, usize, Vec<&BenchRow>)> = Vec::new();
        for r in &self.rows {
            match groups.iter_mut().find(|(s, n, _)| *s == r.strategy && *n == r.n_shards) {
                Some(g) => g.2.push(r),
                None => groups.push((r.strategy, r.n_shards, vec![r])),
            }
        }
        groups
            .into_iter()
            .map(|(s, n, rows)| {
                let k = rows.len() as f64;
                (
                    s,
                    n,
                    rows.iter().map(|r| r.epochs_retrained as f64).sum::<f64>() / k,
                    rows.iter().map(|r| r.samples_processed as f64).sum::<f64>() / k,
                )
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "strategy,n_shards,request_id,record_id,shard,resume_slice,epochs_retrained,samples_processed,\
             scratch_epochs,scratch_samples_processed,exact,max_param_diff,wall_time_s\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{:.3}",
                r.strategy,
                r.n_shards,
                r.request_id,
                r.record_id,
                r.shard,
                r.resume_slice,
                r.epochs_retrained,
                r.samples_processed,
                r.scratch_epochs,
                r.scratch_samples_processed,
                r.exact,
                r.max_param_diff,
                r.wall_time_s
            );
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("strategy,n_shards,mean_epochs_retrained,mean_samples_processed\n");
        for (strategy, n, e, p) in self.means() {
            let _ = writeln!(s, "{strategy},{n},{e:.6},{p:.6}");
        }
        s
    }

    pub fn emit(&self, out_dir: impl AsRef<Path>) -> Result<()> {
        let dir = out_dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(dir, "bench_unlearn.csv", &self.to_csv())?;
        write_file(dir, "bench_unlearn_summary.csv", &self.summary_csv())
    }
}

/// For each (strategy, shard count) on the first seed: train, then issue
/// `n_requests` seeded single-record deletions, verifying each against a
/// from-scratch retrain.
pub fn run_unlearning_benchmark(config: &ExperimentConfig, n_requests: usize) -> Result<BenchReport> {
    config.validate()?;
    let records = load_dataset(&config.dataset)?;
    let seed = config.seeds[0];
    let ctx = SeedContext::prepare(&records, config, seed)?;
    let trainer = cell_trainer(config, seed);
    let mut rows = Vec::new();
    for &strategy in &config.strategies {
        for &n_shards in &config.shard_counts {
            let plan = ctx.plan(strategy, n_shards, config)?;
            let (mut model, _) = SisaModel::train(
                plan,
                ctx.samples.clone(),
                ctx.users(),
                ctx.pipeline.clone(),
                config.label,
                trainer.clone(),
                MemoryStore::new(),
            )?;
            let mut rng = SeededRng::derived(seed, BENCH_TAG ^ n_shards as u64);
            for request_id in 1..=n_requests as u64 {
                let live: Vec<u64> = model.samples().keys().copied().collect();
                if live.is_empty() {
                    break;
                }
                let record_id = live[rng.below(live.len())];
                let start = Instant::now();
                let report = model.unlearn(&DeletionRequest::records(request_id, vec![record_id]))?;
                let wall = start.elapsed().as_secs_f64();
                let check = model.verify_exactness()?;
                let shard_report = report.per_shard.first();
                let shard = shard_report.map(|r| r.shard_id).unwrap_or(usize::MAX);
                rows.push(BenchRow {
                    strategy,
                    n_shards,
                    request_id,
                    record_id,
                    shard,
                    resume_slice: shard_report.map(|r| r.resume_slice_index).unwrap_or(0),
                    epochs_retrained: report.epochs_retrained(),
                    samples_processed: report.samples_processed(),
                    scratch_epochs: check.scratch_epochs.iter().sum(),
                    scratch_samples_processed: check.scratch_samples_processed,
                    exact: check.exact,
                    max_param_diff: check.max_param_diff,
                    wall_time_s: wall,
                });
            }
        }
    }
    Ok(BenchReport { rows })
}

