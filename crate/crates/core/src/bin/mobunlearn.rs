use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mobility_unlearn::config::{DatasetSource, ExperimentConfig};
use mobility_unlearn::dataset::{derive_label, generate_synthetic, load_trips, save_trips, TripRecord};
use mobility_unlearn::ensemble::rmse;
use mobility_unlearn::features::FeaturePipeline;
use mobility_unlearn::harness::{
    build_embedder, cell_trainer, cluster, emit_report, run_sweep, run_unlearning_benchmark, split_train_test,
};
use mobility_unlearn::sharding::{partition_by_user, partition_cluster_rr, partition_random, ShardPlan, Strategy};
use mobility_unlearn::sisa::SisaModel;
use mobility_unlearn::store::DirStore;
use mobility_unlearn::unlearning::DeletionRequest;
use mobility_unlearn::{Error, Result};

#[derive(Parser)]
#[command(name = "mobunlearn", version, about = "Sharded trip-duration models with exact record deletion")]
struct Cli {
    /// Key/value or JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's seed list with a single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trip log (trips.csv).
    Synth {
        #[arg(long)]
        n_records: Option<usize>,
        #[arg(long)]
        groups: Option<usize>,
    },
    /// Validate a trip log and split it into train.csv / test.csv.
    Ingest {
        #[arg(long)]
        input: PathBuf,
    },
    /// Assign training records to shards and slices (plan.csv).
    Partition {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        n_shards: usize,
        #[arg(long, default_value = "cluster_rr")]
        strategy: Strategy,
        #[arg(long)]
        n_slices: Option<usize>,
    },
    /// Train every constituent; the output directory becomes the model.
    Train {
        #[arg(long)]
        input: PathBuf,
        /// Existing plan.csv; partitions on the fly when absent.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        n_shards: usize,
        #[arg(long, default_value = "cluster_rr")]
        strategy: Strategy,
        #[arg(long)]
        n_slices: Option<usize>,
    },
    /// Write predictions.csv for a trip file.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Print test RMSE in minutes.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Apply a deletion request (JSON) to a model directory.
    Unlearn {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        request: PathBuf,
        /// Also retrain from scratch and compare parameters.
        #[arg(long)]
        verify: bool,
    },
    /// Shard-count sweep over strategies and seeds.
    Sweep,
    /// Random single-record deletions with exactness checks.
    BenchUnlearn {
        #[arg(long, default_value_t = 10)]
        requests: usize,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seeds = vec![seed];
        if let DatasetSource::Synthetic(spec) = &mut config.dataset {
            spec.seed = seed;
        }
    }
    Ok(config)
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn make_plan(
    train: &[TripRecord],
    config: &ExperimentConfig,
    seed: u64,
    n_shards: usize,
    strategy: Strategy,
    n_slices: usize,
    out: &Path,
) -> Result<ShardPlan> {
    let ids: Vec<u64> = train.iter().map(|r| r.record_id).collect();
    let labels = match strategy {
        Strategy::ClusterRr => {
            let pipeline = FeaturePipeline::fit_with_text_dim(
                train,
                build_embedder(config)?,
                config.speed_limit_kmh,
                config.text_dim,
            )?;
            let (gmm, labels) = cluster(&pipeline.transform(train)?, &config.gmm, seed)?;
            gmm.save_json(out.join("gmm.json"))?;
            Some(labels)
        }
        Strategy::Random => None,
    };
    if config.group_by_user {
        let users: Vec<u64> = train.iter().map(|r| r.user_id).collect();
        return partition_by_user(&ids, &users, labels.as_deref(), n_shards, seed, n_slices);
    }
    match labels {
        Some(l) => partition_cluster_rr(&l, &ids, n_shards, n_slices),
        None => partition_random(&ids, n_shards, seed, n_slices),
    }
}

fn predictions(model: &SisaModel<DirStore>, trips: &[TripRecord]) -> Result<(Vec<f64>, Vec<f64>)> {
    let ensemble = model.ensemble()?;
    let mut pred = Vec::with_capacity(trips.len());
    let mut truth = Vec::with_capacity(trips.len());
    for t in trips {
        pred.push(ensemble.predict(t)?.1);
        truth.push(derive_label(t, model.label_spec()) as f64);
    }
    Ok((pred, truth))
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    let seed = config.seeds[0];
    let out = cli.out_dir.as_path();
    match cli.command {
        Command::Synth { n_records, groups } => {
            let mut spec = match &config.dataset {
                DatasetSource::Synthetic(s) => s.clone(),
                DatasetSource::File(_) => Default::default(),
            };
            spec.n_records = n_records.unwrap_or(spec.n_records);
            spec.n_latent_groups = groups.unwrap_or(spec.n_latent_groups);
            let trips = generate_synthetic(&spec)?;
            create_out(out)?;
            save_trips(out.join("trips.csv"), &trips)?;
            println!("wrote {} trips to {}", trips.len(), out.join("trips.csv").display());
        }
        Command::Ingest { input } => {
            let trips = load_trips(&input)?;
            let (train, test) = split_train_test(&trips, config.train_fraction, seed);
            create_out(out)?;
            save_trips(out.join("train.csv"), &train)?;
            save_trips(out.join("test.csv"), &test)?;
            let missing = trips.iter().filter(|t| t.route_length_m.is_none()).count();
            println!(
                "{} valid trips ({} without route length): {} train, {} test",
                trips.len(),
                missing,
                train.len(),
                test.len()
            );
        }
        Command::Partition {
            input,
            n_shards,
            strategy,
            n_slices,
        } => {
            let train = load_trips(&input)?;
            create_out(out)?;
            let plan = make_plan(&train, &config, seed, n_shards, strategy, n_slices.unwrap_or(config.n_slices), out)?;
            plan.save_csv(out.join("plan.csv"))?;
            println!("{strategy} plan over {} records, shard sizes {:?}", plan.len(), plan.shard_sizes());
        }
        Command::Train {
            input,
            plan,
            n_shards,
            strategy,
            n_slices,
        } => {
            let train = load_trips(&input)?;
            create_out(out)?;
            let n_slices = n_slices.unwrap_or(config.n_slices);
            let plan = match plan {
                Some(path) => ShardPlan::load_csv(path, strategy, seed, None, None)?,
                None => make_plan(&train, &config, seed, n_shards, strategy, n_slices, out)?,
            };
            let pipeline = FeaturePipeline::fit_with_text_dim(
                &train,
                build_embedder(&config)?,
                config.speed_limit_kmh,
                config.text_dim,
            )?;
            let (_, summaries) =
                SisaModel::train_dir(out, &train, plan, pipeline, config.label, cell_trainer(&config, seed))?;
            println!("shard,n_records,epochs,samples_processed");
            for s in summaries {
                println!("{},{},{},{}", s.shard_id, s.n_records, s.total_epochs(), s.samples_processed);
            }
        }
        Command::Predict { model, input } => {
            let model = SisaModel::open_dir(&model)?;
            let trips = load_trips(&input)?;
            let (pred, truth) = predictions(&model, &trips)?;
            create_out(out)?;
            let path = out.join("predictions.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["record_id", "pred_minutes", "true_minutes"])?;
            for ((t, p), y) in trips.iter().zip(&pred).zip(&truth) {
                w.write_record([t.record_id.to_string(), format!("{p:.4}"), y.to_string()])?;
            }
            w.flush().map_err(|e| Error::Io { path: path.clone(), source: e })?;
            println!("wrote {} predictions to {}; rmse_minutes={:.4}", pred.len(), path.display(), rmse(&pred, &truth)?);
        }
        Command::Evaluate { model, input } => {
            let model = SisaModel::open_dir(&model)?;
            let trips = load_trips(&input)?;
            let (pred, truth) = predictions(&model, &trips)?;
            println!("n={} rmse_minutes={:.4}", pred.len(), rmse(&pred, &truth)?);
        }
        Command::Unlearn { model: dir, request, verify } => {
            let mut model = SisaModel::open_dir(&dir)?;
            let request = DeletionRequest::load_json(&request)?;
            let report = model.unlearn(&request)?;
            model.save_dir(&dir)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if verify {
                let check = model.verify_exactness()?;
                println!("exact={} max_param_diff={}", check.exact, check.max_param_diff);
                if !check.exact {
                    return Err(Error::CheckpointMismatch("retrained model differs from scratch".into()));
                }
            }
        }
        Command::Sweep => {
            let report = run_sweep(&config)?;
            emit_report(&report, out)?;
            print!("{}", report.figure3_csv());
        }
        Command::BenchUnlearn { requests } => {
            let report = run_unlearning_benchmark(&config, requests)?;
            report.emit(out)?;
            print!("{}", report.summary_csv());
            if !report.all_exact() {
                return Err(Error::CheckpointMismatch("a retrained model differs from scratch".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
