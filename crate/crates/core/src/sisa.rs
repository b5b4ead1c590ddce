//! A trained sharded ensemble together with the data and checkpoints
//! needed to unlearn from it.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::dataset::{derive_label, LabelSpec, TripRecord};
use crate::ensemble::EnsembleState;
use crate::error::{Error, Result};
use crate::features::{FeaturePipeline, FeatureVector};
use crate::sharding::ShardPlan;
use crate::store::CheckpointStore;
use crate::trainer::{train_shard, Checkpoint, ShardTraining, TrainSample, TrainingConfig};

/// Training samples keyed by record id.
pub type SampleMap = BTreeMap<u64, TrainSample>;

pub fn build_samples(records: &[TripRecord], features: &[FeatureVector], spec: &LabelSpec) -> Result<SampleMap> {
    if records.len() != features.len() {
        return Err(Error::DimensionMismatch {
            expected: records.len(),
            actual: features.len(),
        });
    }
    let mut out = SampleMap::new();
    for (r, f) in records.iter().zip(features) {
        if r.record_id != f.record_id {
            return Err(Error::invalid(format!(
                "feature row for {} paired with record {}",
                f.record_id, r.record_id
            )));
        }
        let sample = TrainSample {
            record_id: r.record_id,
            features: f.values.clone(),
            label: derive_label(r, spec),
        };
        if out.insert(r.record_id, sample).is_some() {
            return Err(Error::DuplicateRecord(r.record_id));
        }
    }
    Ok(out)
}

/// Samples of shard `s`, slice by slice, in plan order.
pub fn shard_slices(plan: &ShardPlan, s: usize, samples: &SampleMap) -> Result<Vec<Vec<TrainSample>>> {
    plan.slices[s]
        .iter()
        .map(|slice| {
            slice
                .iter()
                .map(|id| samples.get(id).cloned().ok_or(Error::UnknownIds(vec![*id])))
                .collect()
        })
        .collect()
}

/// Per-shard outcome of a full training run.
#[derive(Debug, Clone, PartialEq)]
pub struct ShardSummary {
    pub shard_id: usize,
    pub n_records: usize,
    pub epochs_per_slice: Vec<usize>,
    pub samples_processed: usize,
}

impl ShardSummary {
    fn from_training(shard_id: usize, n_records: usize, t: &ShardTraining) -> Self {
        Self {
            shard_id,
            n_records,
            epochs_per_slice: t.epochs_per_slice.clone(),
            samples_processed: t.samples_processed,
        }
    }

    pub fn total_epochs(&self) -> usize {
        self.epochs_per_slice.iter().sum()
    }
}

/// Trains every shard of `plan` from scratch. Shards are independent and
/// run in parallel; results come back in shard order.
pub fn train_all_shards(
    plan: &ShardPlan,
    samples: &SampleMap,
    n_classes: usize,
    config: &TrainingConfig,
) -> Result<Vec<ShardTraining>> {
    (0..plan.n_shards)
        .into_par_iter()
        .map(|s| {
            let slices = shard_slices(plan, s, samples)?;
            train_shard(s, &slices, n_classes, config, None)
        })
        .collect()
}

pub struct SisaModel<S: CheckpointStore> {
    pub(crate) plan: ShardPlan,
    pub(crate) config: TrainingConfig,
    pub(crate) label_spec: LabelSpec,
    pub(crate) pipeline: FeaturePipeline,
    pub(crate) samples: SampleMap,
    /// record → user for every record a request may name.
    pub(crate) users: BTreeMap<u64, u64>,
    pub(crate) deleted: BTreeSet<u64>,
    pub(crate) constituents: Vec<Checkpoint>,
    pub(crate) last_request_id: Option<u64>,
    pub(crate) store: S,
}

impl<S: CheckpointStore> SisaModel<S> {
    /// Trains all constituents and writes every checkpoint to `store`.
    #[allow(clippy::too_many_arguments)]
    pub fn train(
        plan: ShardPlan,
        samples: SampleMap,
        users: BTreeMap<u64, u64>,
        pipeline: FeaturePipeline,
        label_spec: LabelSpec,
        config: TrainingConfig,
        mut store: S,
    ) -> Result<(Self, Vec<ShardSummary>)> {
        let runs = train_all_shards(&plan, &samples, label_spec.n_classes(), &config)?;
        let mut constituents = Vec::with_capacity(plan.n_shards);
        let mut summaries = Vec::with_capacity(plan.n_shards);
        for (s, run) in runs.iter().enumerate() {
            for ck in &run.checkpoints {
                store.put(ck)?;
            }
            constituents.push(run.final_checkpoint().clone());
            summaries.push(ShardSummary::from_training(s, plan.shard_len(s), run));
        }
        let model = Self {
            plan,
            config,
            label_spec,
            pipeline,
            samples,
            users,
            deleted: BTreeSet::new(),
            constituents,
            last_request_id: None,
            store,
        };
        Ok((model, summaries))
    }

    /// Reassembles a model whose checkpoints are already in `store`.
    #[allow(clippy::too_many_arguments)]
    pub fn restore(
        plan: ShardPlan,
        samples: SampleMap,
        users: BTreeMap<u64, u64>,
        pipeline: FeaturePipeline,
        label_spec: LabelSpec,
        config: TrainingConfig,
        deleted: BTreeSet<u64>,
        last_request_id: Option<u64>,
        store: S,
    ) -> Result<Self> {
        let mut constituents = Vec::with_capacity(plan.n_shards);
        for s in 0..plan.n_shards {
            let ck = store
                .get(s, plan.n_slices)?
                .ok_or_else(|| Error::CheckpointMismatch(format!("final checkpoint of shard {s} missing")))?;
            constituents.push(ck);
        }
        Ok(Self {
            plan,
            config,
            label_spec,
            pipeline,
            samples,
            users,
            deleted,
            constituents,
            last_request_id,
            store,
        })
    }

    pub fn plan(&self) -> &ShardPlan {
        &self.plan
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    pub fn label_spec(&self) -> &LabelSpec {
        &self.label_spec
    }

    pub fn pipeline(&self) -> &FeaturePipeline {
        &self.pipeline
    }

    pub fn samples(&self) -> &SampleMap {
        &self.samples
    }

    pub fn deleted(&self) -> &BTreeSet<u64> {
        &self.deleted
    }

    pub fn constituents(&self) -> &[Checkpoint] {
        &self.constituents
    }

    pub fn store(&self) -> &S {
        &self.store
    }

    pub fn last_request_id(&self) -> Option<u64> {
        self.last_request_id
    }

    pub fn ensemble(&self) -> Result<EnsembleState> {
        EnsembleState::new(
            self.plan.clone(),
            self.constituents.clone(),
            self.label_spec,
            self.pipeline.clone(),
        )
    }
}
