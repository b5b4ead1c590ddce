use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::mlp::{init_mlp_with, MlpParams, Workspace};
use super::smoothing::smoothing_table;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Minimum decrease in mean epoch loss that counts as improvement.
    pub min_delta: f64,
    /// Label-smoothing scale in minutes.
    pub tau: f64,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 500,
            patience: 10,
            min_delta: 1e-4,
            tau: 2.0,
            hidden: 128,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.tau > 0.0) || !(self.min_delta > 0.0) {
            return Err(Error::invalid("learning_rate, tau and min_delta must be positive"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 || self.hidden == 0 {
            return Err(Error::invalid("batch_size, max_epochs, patience and hidden must be positive"));
        }
        if self.patience >= self.max_epochs {
            return Err(Error::invalid("patience must be smaller than max_epochs"));
        }
        Ok(())
    }

    /// `[input, hidden, hidden, n_classes]`.
    pub fn dims(&self, input_dim: usize, n_classes: usize) -> Vec<usize> {
        vec![input_dim, self.hidden, self.hidden, n_classes]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub record_id: u64,
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct ShardTraining {
    /// Pre-slice checkpoints from the starting slice onwards, then the final
    /// model (`slice_index == n_slices`).
    pub checkpoints: Vec<Checkpoint>,
    /// Epochs spent on each slice that was (re)trained, in slice order.
    pub epochs_per_slice: Vec<usize>,
    pub samples_processed: usize,
}

impl ShardTraining {
    pub fn final_checkpoint(&self) -> &Checkpoint {
        self.checkpoints.last().expect("training always yields a final checkpoint")
    }

    pub fn total_epochs(&self) -> usize {
        self.epochs_per_slice.iter().sum()
    }
}

/// Per-shard stream: weight init draws first, then epoch shuffles.
pub fn shard_rng(seed: u64, shard_id: usize) -> SeededRng {
    SeededRng::derived(seed, shard_id as u64)
}

fn sorted_ids<'a>(slices: impl IntoIterator<Item = &'a Vec<TrainSample>>) -> Vec<u64> {
    let mut ids: Vec<u64> = slices.into_iter().flatten().map(|s| s.record_id).collect();
    ids.sort_unstable();
    ids
}

/// Trains one constituent incrementally over its slices.
///
/// Before slice `k` is incorporated a checkpoint of (params, rng) is taken;
/// the model then trains on slices `0..=k` until the mean epoch loss fails
/// to improve by `min_delta` for `patience` epochs, and the best-loss
/// parameters are kept. Passing `from` resumes at `from.slice_index`.
pub fn train_shard(
    shard_id: usize,
    slices: &[Vec<TrainSample>],
    n_classes: usize,
    config: &TrainingConfig,
    from: Option<&Checkpoint>,
) -> Result<ShardTraining> {
    config.validate()?;
    if slices.iter().all(Vec::is_empty) {
        return Err(Error::EmptyShard(shard_id));
    }
    let input_dim = slices
        .iter()
        .flatten()
        .next()
        .map(|s| s.features.len())
        .unwrap_or(0);
    for s in slices.iter().flatten() {
        if s.features.len() != input_dim {
            return Err(Error::DimensionMismatch {
                expected: input_dim,
                actual: s.features.len(),
            });
        }
        if s.label >= n_classes {
            return Err(Error::invalid(format!("label {} outside 0..{n_classes}", s.label)));
        }
        if s.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training features"));
        }
    }
    let dims = config.dims(input_dim, n_classes);
    let n_slices = slices.len();

    let (start, mut params, mut rng, mut checkpoints) = match from {
        Some(ck) => {
            if ck.shard_id != shard_id {
                return Err(Error::CheckpointMismatch(format!(
                    "checkpoint belongs to shard {}, not {shard_id}",
                    ck.shard_id
                )));
            }
            if ck.slice_index >= n_slices {
                return Err(Error::CheckpointMismatch(format!(
                    "resume slice {} but shard has {n_slices} slices",
                    ck.slice_index
                )));
            }
            if ck.params.dims != dims {
                return Err(Error::CheckpointMismatch(format!(
                    "checkpoint dims {:?} differ from {dims:?}",
                    ck.params.dims
                )));
            }
            if ck.incorporated_ids != sorted_ids(&slices[..ck.slice_index]) {
                return Err(Error::CheckpointMismatch(format!(
                    "checkpoint ids are not the prefix of slices 0..{}",
                    ck.slice_index
                )));
            }
            let rng = SeededRng::from_state_bytes(&ck.rng_state)?;
            (ck.slice_index, ck.params.clone(), rng, vec![ck.clone()])
        }
        None => {
            let mut rng = shard_rng(config.seed, shard_id);
            let params = init_mlp_with(&dims, &mut rng)?;
            let init = Checkpoint {
                shard_id,
                slice_index: 0,
                params: params.clone(),
                incorporated_ids: Vec::new(),
                rng_state: rng.state_bytes(),
                epochs_used: 0,
            };
            (0, params, rng, vec![init])
        }
    };

    let targets = smoothing_table(n_classes, config.tau)?;
    let mut ws = Workspace::new(&dims);
    let mut epochs_per_slice = Vec::new();
    let mut samples_processed = 0;

    for k in start..n_slices {
        if k > start {
            checkpoints.push(Checkpoint {
                shard_id,
                slice_index: k,
                params: params.clone(),
                incorporated_ids: sorted_ids(&slices[..k]),
                rng_state: rng.state_bytes(),
                epochs_used: *epochs_per_slice.last().unwrap_or(&0),
            });
        }
        let data: Vec<&TrainSample> = slices[..=k].iter().flatten().collect();
        if data.is_empty() {
            epochs_per_slice.push(0);
            continue;
        }
        let epochs = fit_until_stop(&mut params, &data, &targets, config, &mut rng, &mut ws);
        samples_processed += epochs * data.len();
        epochs_per_slice.push(epochs);
    }

    checkpoints.push(Checkpoint {
        shard_id,
        slice_index: n_slices,
        params,
        incorporated_ids: sorted_ids(slices),
        rng_state: rng.state_bytes(),
        epochs_used: *epochs_per_slice.last().unwrap_or(&0),
    });

    Ok(ShardTraining {
        checkpoints,
        epochs_per_slice,
        samples_processed,
    })
}

/// Mini-batch SGD with early stopping; leaves the best-loss parameters in
/// `params` and returns the number of epochs run.
fn fit_until_stop(
    params: &mut MlpParams,
    data: &[&TrainSample],
    targets: &[Vec<f64>],
    config: &TrainingConfig,
    rng: &mut SeededRng,
    ws: &mut Workspace,
) -> usize {
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut best_loss = f64::INFINITY;
    let mut best_params = params.clone();
    let mut stale = 0;
    let mut epochs = 0;
    while epochs < config.max_epochs {
        epochs += 1;
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let loss = ws.batch_gradient(
                params,
                batch
                    .iter()
                    .map(|&i| (data[i].features.as_slice(), targets[data[i].label].as_slice())),
                batch.len(),
            );
            params.sgd_step(ws.gradient(), config.learning_rate);
            loss_sum += loss * batch.len() as f64;
        }
        let mean_loss = loss_sum / data.len() as f64;
        if mean_loss < best_loss - config.min_delta {
            best_loss = mean_loss;
            best_params.clone_from(params);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    *params = best_params;
    epochs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::mlp::predict_proba;

    fn toy(seed: u64, n: usize) -> Vec<TrainSample> {
        let mut rng = SeededRng::new(seed);
        (0..n)
            .map(|i| {
                let label = i % 2;
                let offset = if label == 0 { -1.5 } else { 1.5 };
                TrainSample {
                    record_id: i as u64,
                    features: vec![offset + 0.3 * rng.normal(), 0.5 * rng.normal()],
                    label,
                }
            })
            .collect()
    }

    fn small_config() -> TrainingConfig {
        TrainingConfig {
            learning_rate: 0.05,
            batch_size: 4,
            max_epochs: 200,
            patience: 10,
            tau: 0.05,
            hidden: 8,
            ..Default::default()
        }
    }

    #[test]
    fn single_slice_gives_init_and_final() {
        let data = toy(1, 20);
        let out = train_shard(0, &[data], 2, &small_config(), None).unwrap();
        assert_eq!(out.checkpoints.len(), 2);
        assert_eq!(out.checkpoints[0].slice_index, 0);
        assert!(out.checkpoints[0].incorporated_ids.is_empty());
        assert_eq!(out.checkpoints[1].slice_index, 1);
        assert_eq!(out.checkpoints[1].incorporated_ids.len(), 20);
    }

    #[test]
    fn repeated_training_is_bit_identical() {
        let data = toy(2, 30);
        let a = train_shard(1, std::slice::from_ref(&data), 2, &small_config(), None).unwrap();
        let b = train_shard(1, &[data], 2, &small_config(), None).unwrap();
        assert!(a.final_checkpoint().params.bit_identical(&b.final_checkpoint().params));
        assert_eq!(a.epochs_per_slice, b.epochs_per_slice);
    }

    #[test]
    fn separable_toy_is_fit_perfectly() {
        let data = toy(3, 20);
        let out = train_shard(0, std::slice::from_ref(&data), 2, &small_config(), None).unwrap();
        let params = &out.final_checkpoint().params;
        for s in &data {
            let p = predict_proba(params, &s.features);
            let pred = if p[1] > p[0] { 1 } else { 0 };
            assert_eq!(pred, s.label);
        }
        assert!(out.total_epochs() <= 200);
    }

    #[test]
    fn resume_matches_scratch() {
        let data = toy(4, 40);
        let slices: Vec<Vec<TrainSample>> = data.chunks(10).map(|c| c.to_vec()).collect();
        let full = train_shard(2, &slices, 2, &small_config(), None).unwrap();
        assert_eq!(full.checkpoints.len(), 5);
        for w in full.checkpoints.windows(2) {
            assert!(w[0].incorporated_ids.len() < w[1].incorporated_ids.len());
        }
        let resumed = train_shard(2, &slices, 2, &small_config(), Some(&full.checkpoints[2])).unwrap();
        assert_eq!(resumed.epochs_per_slice.len(), 2);
        assert_eq!(resumed.epochs_per_slice, full.epochs_per_slice[2..]);
        assert!(resumed
            .final_checkpoint()
            .params
            .bit_identical(&full.final_checkpoint().params));
    }

    #[test]
    fn mismatched_checkpoint_rejected() {
        let data = toy(5, 20);
        let slices: Vec<Vec<TrainSample>> = data.chunks(10).map(|c| c.to_vec()).collect();
        let full = train_shard(0, &slices, 2, &small_config(), None).unwrap();
        assert!(train_shard(1, &slices, 2, &small_config(), Some(&full.checkpoints[1])).is_err());
        let mut other = slices.clone();
        other[0].pop();
        assert!(train_shard(0, &other, 2, &small_config(), Some(&full.checkpoints[1])).is_err());
    }

    #[test]
    fn empty_shard_rejected() {
        assert!(matches!(
            train_shard(4, &[vec![]], 2, &small_config(), None),
            Err(Error::EmptyShard(4))
        ));
    }

    #[test]
    fn epochs_bounded_by_max() {
        let cfg = TrainingConfig {
            max_epochs: 3,
            patience: 2,
            ..small_config()
        };
        let out = train_shard(0, &[toy(6, 12)], 2, &cfg, None).unwrap();
        assert!(out.total_epochs() <= 3);
    }
}
