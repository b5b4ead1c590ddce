//! Soft-voting aggregation of constituent predictions and RMSE scoring.

use serde::{Deserialize, Serialize};

use crate::dataset::{LabelSpec, TripRecord};
use crate::error::{Error, Result};
use crate::features::FeaturePipeline;
use crate::sharding::ShardPlan;
use crate::trainer::{predict_proba, Checkpoint};

const NORMALIZATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Element-wise mean of the constituent distributions.
    #[default]
    Mean,
    /// Fraction of constituents whose argmax is each class.
    MajorityVote,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointRule {
    #[default]
    Expectation,
    Argmax,
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Element-wise mean of probability vectors.
pub fn aggregate(prob_vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = prob_vectors
        .first()
        .ok_or_else(|| Error::invalid("cannot aggregate an empty list"))?;
    let n = first.len();
    let mut out = vec![0.0; n];
    for p in prob_vectors {
        if p.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: p.len(),
            });
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > NORMALIZATION_TOL || p.iter().any(|v| *v < 0.0) {
            return Err(Error::invalid(format!("input is not a distribution (sum {s})")));
        }
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    let k = prob_vectors.len() as f64;
    out.iter_mut().for_each(|o| *o /= k);
    Ok(out)
}

/// Vote shares of each constituent's modal class.
pub fn majority_vote(prob_vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = prob_vectors
        .first()
        .ok_or_else(|| Error::invalid("cannot aggregate an empty list"))?;
    let mut out = vec![0.0; first.len()];
    for p in prob_vectors {
        if p.len() != out.len() {
            return Err(Error::DimensionMismatch {
                expected: out.len(),
                actual: p.len(),
            });
        }
        out[argmax(p)] += 1.0;
    }
    let k = prob_vectors.len() as f64;
    out.iter_mut().for_each(|o| *o /= k);
    Ok(out)
}

/// Minutes implied by a class distribution (class `c` is `c` minutes).
pub fn point_estimate(prob: &[f64], rule: PointRule) -> f64 {
    match rule {
        PointRule::Expectation => prob.iter().enumerate().map(|(c, p)| c as f64 * p).sum(),
        PointRule::Argmax => argmax(prob) as f64,
    }
}

pub fn rmse(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    if predicted.is_empty() || predicted.len() != truth.len() {
        return Err(Error::invalid(format!(
            "rmse needs equal non-empty lengths, got {} and {}",
            predicted.len(),
            truth.len()
        )));
    }
    let mse = predicted
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / predicted.len() as f64;
    Ok(mse.sqrt())
}

/// Everything needed to serve predictions: one final constituent per shard
/// and the fitted feature pipeline.
#[derive(Debug, Clone)]
pub struct EnsembleState {
    pub plan: ShardPlan,
    pub constituents: Vec<Checkpoint>,
    pub label_spec: LabelSpec,
    pub pipeline: FeaturePipeline,
    pub aggregation: Aggregation,
    pub point_rule: PointRule,
}

impl EnsembleState {
    pub fn new(
        plan: ShardPlan,
        constituents: Vec<Checkpoint>,
        label_spec: LabelSpec,
        pipeline: FeaturePipeline,
    ) -> Result<Self> {
        let state = Self {
            plan,
            constituents,
            label_spec,
            pipeline,
            aggregation: Aggregation::default(),
            point_rule: PointRule::default(),
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        if self.constituents.len() != self.plan.n_shards {
            return Err(Error::invalid(format!(
                "{} constituents for {} shards",
                self.constituents.len(),
                self.plan.n_shards
            )));
        }
        for (s, c) in self.constituents.iter().enumerate() {
            if c.shard_id != s {
                return Err(Error::invalid(format!("constituent {s} carries shard id {}", c.shard_id)));
            }
            if c.params.output_dim() != self.label_spec.n_classes() {
                return Err(Error::invalid(format!(
                    "constituent {s} has {} classes, expected {}",
                    c.params.output_dim(),
                    self.label_spec.n_classes()
                )));
            }
            if c.params.input_dim() != self.pipeline.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.pipeline.dim(),
                    actual: c.params.input_dim(),
                });
            }
        }
        Ok(())
    }

    /// Aggregated distribution and point estimate for an already-built
    /// feature vector.
    pub fn predict_features(&self, features: &[f64]) -> Result<(Vec<f64>, f64)> {
        let probs: Vec<Vec<f64>> = self
            .constituents
            .iter()
            .map(|c| predict_proba(&c.params, features))
            .collect();
        let dist = match self.aggregation {
            Aggregation::Mean => aggregate(&probs)?,
            Aggregation::MajorityVote => majority_vote(&probs)?,
        };
        let minutes = point_estimate(&dist, self.point_rule);
        Ok((dist, minutes))
    }

    pub fn predict(&self, record: &TripRecord) -> Result<(Vec<f64>, f64)> {
        let f = self.pipeline.transform(std::slice::from_ref(record))?;
        self.predict_features(&f[0].values)
    }
}
