//! Right-to-be-forgotten requests: locate, roll back, retrain, verify.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sharding::ShardPlan;
use crate::sisa::{shard_slices, train_all_shards, SampleMap, SisaModel};
use crate::store::CheckpointStore;
use crate::trainer::{train_shard, Checkpoint, ShardTraining, TrainingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeletionKind {
    ByRecord,
    ByUser,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeletionRequest {
    pub kind: DeletionKind,
    pub ids: Vec<u64>,
    pub request_id: u64,
}

impl DeletionRequest {
    pub fn records(request_id: u64, ids: Vec<u64>) -> Self {
        Self {
            kind: DeletionKind::ByRecord,
            ids,
            request_id,
        }
    }

    pub fn users(request_id: u64, ids: Vec<u64>) -> Self {
        Self {
            kind: DeletionKind::ByUser,
            ids,
            request_id,
        }
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Record ids named by the request, after user expansion.
    pub fn expand(&self, users: &BTreeMap<u64, u64>) -> Result<BTreeSet<u64>> {
        if self.ids.is_empty() {
            return Err(Error::invalid(format!("request {} names no ids", self.request_id)));
        }
        match self.kind {
            DeletionKind::ByRecord => {
                let unknown: Vec<u64> = self.ids.iter().copied().filter(|id| !users.contains_key(id)).collect();
                if !unknown.is_empty() {
                    return Err(Error::UnknownIds(unknown));
                }
                Ok(self.ids.iter().copied().collect())
            }
            DeletionKind::ByUser => {
                let wanted: HashSet<u64> = self.ids.iter().copied().collect();
                let found: BTreeSet<u64> = users
                    .iter()
                    .filter(|(_, u)| wanted.contains(u))
                    .map(|(r, _)| *r)
                    .collect();
                let known_users: HashSet<u64> = users.values().copied().collect();
                let unknown: Vec<u64> = self.ids.iter().copied().filter(|u| !known_users.contains(u)).collect();
                if !unknown.is_empty() {
                    return Err(Error::UnknownIds(unknown));
                }
                Ok(found)
            }
        }
    }
}

/// Records of one shard hit by a request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardHit {
    pub record_ids: Vec<u64>,
    pub earliest_slice: usize,
}

/// Shards holding any of `request`'s records, with the earliest slice each
/// deletion touches.
pub fn locate(
    request: &DeletionRequest,
    plan: &ShardPlan,
    users: &BTreeMap<u64, u64>,
) -> Result<BTreeMap<usize, ShardHit>> {
    let ids = request.expand(users)?;
    Ok(locate_records(&ids, plan))
}

fn locate_records(ids: &BTreeSet<u64>, plan: &ShardPlan) -> BTreeMap<usize, ShardHit> {
    let mut out: BTreeMap<usize, ShardHit> = BTreeMap::new();
    let assignment = plan.assignment();
    for id in ids {
        if let Some(&(s, k)) = assignment.get(id) {
            let hit = out.entry(s).or_insert(ShardHit {
                record_ids: Vec::new(),
                earliest_slice: k,
            });
            hit.record_ids.push(*id);
            hit.earliest_slice = hit.earliest_slice.min(k);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardRetrain {
    pub shard_id: usize,
    pub resume_slice_index: usize,
    pub records_removed: usize,
    pub epochs_retrained: usize,
    pub samples_processed: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlearningReport {
    pub request_id: u64,
    pub affected_shards: Vec<usize>,
    pub per_shard: Vec<ShardRetrain>,
    pub untouched_shards: usize,
    /// Records removed, including any outside the sharded training set.
    pub records_removed: usize,
}

impl UnlearningReport {
    pub fn samples_processed(&self) -> usize {
        self.per_shard.iter().map(|s| s.samples_processed).sum()
    }

    pub fn epochs_retrained(&self) -> usize {
        self.per_shard.iter().map(|s| s.epochs_retrained).sum()
    }
}

impl<S: CheckpointStore + Sync> SisaModel<S> {
    /// Forgets the records named by `request`.
    ///
    /// For each affected shard the pre-slice checkpoint of the earliest
    /// touched slice is kept, every later checkpoint is discarded, and
    /// training resumes from it over the retained records. Other shards are
    /// not touched. Nothing is committed unless every retrain succeeds.
    pub fn unlearn(&mut self, request: &DeletionRequest) -> Result<UnlearningReport> {
        if let Some(last) = self.last_request_id {
            if request.request_id <= last {
                return Err(Error::invalid(format!(
                    "request {} arrives after request {last}; ids must increase",
                    request.request_id
                )));
            }
        }
        let requested = request.expand(&self.users)?;
        let fresh: BTreeSet<u64> = requested.difference(&self.deleted).copied().collect();
        if fresh.is_empty() {
            return Err(Error::EmptyDeletion(request.request_id));
        }
        let hits = locate_records(&fresh, &self.plan);
        let removed: HashSet<u64> = fresh.iter().copied().collect();
        let new_plan = self.plan.without(&removed);
        let n_classes = self.label_spec.n_classes();

        let mut resume_points = Vec::with_capacity(hits.len());
        for (&s, hit) in &hits {
            let ck = self.store.get(s, hit.earliest_slice)?.ok_or_else(|| {
                Error::CheckpointMismatch(format!(
                    "shard {s} has no checkpoint before slice {}",
                    hit.earliest_slice
                ))
            })?;
            resume_points.push((s, hit, ck));
        }

        let retrains: Vec<(usize, ShardTraining, f64)> = resume_points
            .par_iter()
            .map(|(s, _, ck)| {
                let start = Instant::now();
                let slices = shard_slices(&new_plan, *s, &self.samples)?;
                let run = train_shard(*s, &slices, n_classes, &self.config, Some(ck))?;
                Ok((*s, run, start.elapsed().as_secs_f64()))
            })
            .collect::<Result<_>>()?;

        let mut per_shard = Vec::with_capacity(retrains.len());
        for (s, run, wall) in &retrains {
            let hit = &hits[s];
            for k in self.store.slice_indices(*s)? {
                if k > hit.earliest_slice {
                    self.store.discard(*s, k, request.request_id)?;
                }
            }
            for ck in run.checkpoints.iter().filter(|c| c.slice_index > hit.earliest_slice) {
                self.store.put(ck)?;
            }
            self.constituents[*s] = run.final_checkpoint().clone();
            per_shard.push(ShardRetrain {
                shard_id: *s,
                resume_slice_index: hit.earliest_slice,
                records_removed: hit.record_ids.len(),
                epochs_retrained: run.total_epochs(),
                samples_processed: run.samples_processed,
                wall_time_s: *wall,
            });
        }

        for id in &fresh {
            self.samples.remove(id);
        }
        self.deleted.extend(fresh.iter().copied());
        self.plan = new_plan;
        self.last_request_id = Some(request.request_id);

        Ok(UnlearningReport {
            request_id: request.request_id,
            affected_shards: hits.keys().copied().collect(),
            untouched_shards: self.plan.n_shards - hits.len(),
            per_shard,
            records_removed: fresh.len(),
        })
    }

    pub fn verify_exactness(&self) -> Result<ExactnessReport> {
        verify_exactness(&self.store, &self.constituents, &self.plan, &self.samples, self.label_spec.n_classes(), &self.config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactnessReport {
    /// True iff every constituent and stored checkpoint equals its
    /// from-scratch counterpart bit for bit.
    pub exact: bool,
    pub max_param_diff: f64,
    pub scratch_epochs: Vec<usize>,
    pub scratch_samples_processed: usize,
}

/// Retrains every shard from scratch on `plan` and compares with the live
/// constituents and stored checkpoints.
pub fn verify_exactness<S: CheckpointStore>(
    store: &S,
    constituents: &[Checkpoint],
    plan: &ShardPlan,
    samples: &SampleMap,
    n_classes: usize,
    config: &TrainingConfig,
) -> Result<ExactnessReport> {
    let runs = train_all_shards(plan, samples, n_classes, config)?;
    let mut exact = constituents.len() == runs.len();
    let mut max_diff: f64 = 0.0;
    for (s, run) in runs.iter().enumerate() {
        let fresh = run.final_checkpoint();
        match constituents.get(s) {
            Some(live) => {
                max_diff = max_diff.max(live.params.max_abs_diff(&fresh.params));
                exact &= live.params.bit_identical(&fresh.params) && live.incorporated_ids == fresh.incorporated_ids;
            }
            None => exact = false,
        }
        for ck in &run.checkpoints {
            match store.get(s, ck.slice_index)? {
                Some(stored) => {
                    max_diff = max_diff.max(stored.params.max_abs_diff(&ck.params));
                    exact &= stored == *ck;
                }
                None => exact = false,
            }
        }
    }
    Ok(ExactnessReport {
        exact: exact && max_diff == 0.0,
        max_param_diff: max_diff,
        scratch_epochs: runs.iter().map(ShardTraining::total_epochs).collect(),
        scratch_samples_processed: runs.iter().map(|r| r.samples_processed).sum(),
    })
}
