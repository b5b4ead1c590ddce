use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    ClusterRr,
    Random,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::ClusterRr => "cluster_rr",
            Strategy::Random => "random",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cluster_rr" => Ok(Strategy::ClusterRr),
            "random" => Ok(Strategy::Random),
            other => Err(Error::invalid(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Disjoint assignment of records to shards, and to slices within a shard.
///
/// `slices[s][k]` lists the record ids of slice `k` of shard `s` in
/// ascending order, which is also the order training visits them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardPlan {
    pub n_shards: usize,
    pub n_slices: usize,
    pub strategy: Strategy,
    pub seed: u64,
    pub slices: Vec<Vec<Vec<u64>>>,
}

impl ShardPlan {
    /// Builds a plan from the per-shard dealing order.
    fn from_dealt(dealt: Vec<Vec<u64>>, n_slices: usize, strategy: Strategy, seed: u64) -> Self {
        let n_shards = dealt.len();
        let slices = dealt
            .into_iter()
            .map(|shard| split_contiguous(&shard, n_slices))
            .collect();
        Self {
            n_shards,
            n_slices,
            strategy,
            seed,
            slices,
        }
    }

    /// Shard `s` as one sequence, slice by slice.
    pub fn shard_sequence(&self, s: usize) -> Vec<u64> {
        self.slices[s].iter().flatten().copied().collect()
    }

    pub fn shard_len(&self, s: usize) -> usize {
        self.slices[s].iter().map(Vec::len).sum()
    }

    pub fn shard_sizes(&self) -> Vec<usize> {
        (0..self.n_shards).map(|s| self.shard_len(s)).collect()
    }

    pub fn len(&self) -> usize {
        self.shard_sizes().iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// record_id → (shard, slice).
    pub fn assignment(&self) -> BTreeMap<u64, (usize, usize)> {
        let mut out = BTreeMap::new();
        for (s, shard) in self.slices.iter().enumerate() {
            for (k, slice) in shard.iter().enumerate() {
                for &id in slice {
                    out.insert(id, (s, k));
                }
            }
        }
        out
    }

    pub fn locate(&self, record_id: u64) -> Option<(usize, usize)> {
        self.slices.iter().enumerate().find_map(|(s, shard)| {
            shard
                .iter()
                .position(|slice| slice.binary_search(&record_id).is_ok())
                .map(|k| (s, k))
        })
    }

    /// Same plan with `deleted` ids removed; slices are not rebalanced.
    pub fn without(&self, deleted: &HashSet<u64>) -> Self {
        let mut out = self.clone();
        for shard in &mut out.slices {
            for slice in shard {
                slice.retain(|id| !deleted.contains(id));
            }
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["record_id", "shard", "slice"])?;
        for (id, (s, k)) in self.assignment() {
            w.write_record([id.to_string(), s.to_string(), k.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Reads `record_id,shard,slice`; shard and slice counts default to
    /// one past the largest index seen.
    pub fn load_csv(
        path: impl AsRef<Path>,
        strategy: Strategy,
        seed: u64,
        n_shards: Option<usize>,
        n_slices: Option<usize>,
    ) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(file);
        let mut rows = Vec::new();
        let mut seen = HashSet::new();
        for (idx, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize, name: &str| -> Result<u64> {
                rec.get(i).and_then(|v| v.trim().parse().ok()).ok_or_else(|| Error::Row {
                    row: idx + 1,
                    message: format!("invalid {name}"),
                })
            };
            let (id, s, k) = (parse(0, "record_id")?, parse(1, "shard")? as usize, parse(2, "slice")? as usize);
            if !seen.insert(id) {
                return Err(Error::DuplicateRecord(id));
            }
            rows.push((id, s, k));
        }
        let n_shards = n_shards.unwrap_or_else(|| rows.iter().map(|r| r.1 + 1).max().unwrap_or(1));
        let n_slices = n_slices.unwrap_or_else(|| rows.iter().map(|r| r.2 + 1).max().unwrap_or(1));
        let mut slices = vec![vec![Vec::new(); n_slices]; n_shards];
        for (id, s, k) in rows {
            if s >= n_shards || k >= n_slices {
                return Err(Error::invalid(format!("record {id}: shard/slice ({s},{k}) out of range")));
            }
            slices[s][k].push(id);
        }
        for shard in &mut slices {
            for slice in shard.iter_mut() {
                slice.sort_unstable();
            }
        }
        Ok(Self {
            n_shards,
            n_slices,
            strategy,
            seed,
            slices,
        })
    }
}

/// Splits `seq` into `n` contiguous blocks whose sizes differ by at most one
/// (larger blocks first), each sorted ascending.
fn split_contiguous(seq: &[u64], n: usize) -> Vec<Vec<u64>> {
    let base = seq.len() / n;
    let extra = seq.len() % n;
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    for k in 0..n {
        let len = base + usize::from(k < extra);
        let mut block = seq[start..start + len].to_vec();
        block.sort_unstable();
        out.push(block);
        start += len;
    }
    out
}

fn check_counts(n_shards: usize, n_slices: usize) -> Result<()> {
    if n_shards == 0 {
        return Err(Error::invalid("n_shards must be at least 1"));
    }
    if n_slices == 0 {
        return Err(Error::invalid("n_slices must be at least 1"));
    }
    Ok(())
}

fn check_unique(ids: &[u64]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for &id in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateRecord(id));
        }
    }
    Ok(())
}

fn deal(order: impl IntoIterator<Item = u64>, n_shards: usize) -> Vec<Vec<u64>> {
    let mut dealt = vec![Vec::new(); n_shards];
    for (g, id) in order.into_iter().enumerate() {
        dealt[g % n_shards].push(id);
    }
    dealt
}

/// Cluster-aware round robin: clusters in ascending index, members in
/// ascending record id, one global counter dealing to `counter mod n_shards`.
pub fn partition_cluster_rr(
    cluster_labels: &[usize],
    record_ids: &[u64],
    n_shards: usize,
    n_slices: usize,
) -> Result<ShardPlan> {
    if cluster_labels.len() != record_ids.len() {
        return Err(Error::DimensionMismatch {
            expected: record_ids.len(),
            actual: cluster_labels.len(),
        });
    }
    check_counts(n_shards, n_slices)?;
    check_unique(record_ids)?;
    let mut order: Vec<(usize, u64)> = cluster_labels.iter().copied().zip(record_ids.iter().copied()).collect();
    order.sort_unstable();
    let dealt = deal(order.into_iter().map(|(_, id)| id), n_shards);
    Ok(ShardPlan::from_dealt(dealt, n_slices, Strategy::ClusterRr, 0))
}

/// Seeded Fisher-Yates shuffle of the (sorted) ids, then modular dealing.
pub fn partition_random(record_ids: &[u64], n_shards: usize, seed: u64, n_slices: usize) -> Result<ShardPlan> {
    check_counts(n_shards, n_slices)?;
    check_unique(record_ids)?;
    let mut ids = record_ids.to_vec();
    ids.sort_unstable();
    SeededRng::new(seed).shuffle(&mut ids);
    let dealt = deal(ids, n_shards);
    Ok(ShardPlan::from_dealt(dealt, n_slices, Strategy::Random, seed))
}

/// Deals whole users instead of records, so every record of a user lands in
/// one shard. A user's cluster is the most frequent label among its records
/// (ties to the lowest label). Shard sizes are balanced in users, not records.
pub fn partition_by_user(
    record_ids: &[u64],
    user_ids: &[u64],
    cluster_labels: Option<&[usize]>,
    n_shards: usize,
    seed: u64,
    n_slices: usize,
) -> Result<ShardPlan> {
    if user_ids.len() != record_ids.len() {
        return Err(Error::DimensionMismatch {
            expected: record_ids.len(),
            actual: user_ids.len(),
        });
    }
    if let Some(labels) = cluster_labels {
        if labels.len() != record_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: record_ids.len(),
                actual: labels.len(),
            });
        }
    }
    check_counts(n_shards, n_slices)?;
    check_unique(record_ids)?;

    let mut by_user: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    let mut votes: HashMap<u64, BTreeMap<usize, usize>> = HashMap::new();
    for i in 0..record_ids.len() {
        by_user.entry(user_ids[i]).or_default().push(record_ids[i]);
        if let Some(labels) = cluster_labels {
            *votes.entry(user_ids[i]).or_default().entry(labels[i]).or_default() += 1;
        }
    }
    let mut users: Vec<u64> = by_user.keys().copied().collect();
    let strategy = match cluster_labels {
        Some(_) => {
            let cluster_of = |u: &u64| -> usize {
                let v = &votes[u];
                let best = v.values().copied().max().unwrap_or(0);
                v.iter().find(|(_, c)| **c == best).map(|(l, _)| *l).unwrap_or(0)
            };
            users.sort_by_key(|u| (cluster_of(u), *u));
            Strategy::ClusterRr
        }
        None => {
            SeededRng::new(seed).shuffle(&mut users);
            Strategy::Random
        }
    };
    let mut dealt = vec![Vec::new(); n_shards];
    for (g, u) in users.iter().enumerate() {
        let mut recs = by_user[u].clone();
        recs.sort_unstable();
        dealt[g % n_shards].extend(recs);
    }
    let seed = if strategy == Strategy::Random { seed } else { 0 };
    Ok(ShardPlan::from_dealt(dealt, n_slices, strategy, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_round_robin_example() {
        let plan = partition_cluster_rr(&[0, 0, 0, 1, 1, 1], &[1, 2, 3, 4, 5, 6], 2, 1).unwrap();
        assert_eq!(plan.shard_sequence(0), vec![1, 3, 5]);
        assert_eq!(plan.shard_sequence(1), vec![2, 4, 6]);
    }

    #[test]
    fn one_shard_takes_everything() {
        let plan = partition_cluster_rr(&[2, 0, 1], &[9, 8, 7], 1, 1).unwrap();
        assert_eq!(plan.shard_sequence(0), vec![7, 8, 9]);
    }

    #[test]
    fn slices_are_contiguous_in_dealing_order() {
        // dealing order for shard 0: ids 1,3,5,7,9 (cluster 0 first)
        let ids: Vec<u64> = (1..=10).collect();
        let plan = partition_cluster_rr(&[0; 10], &ids, 2, 2).unwrap();
        assert_eq!(plan.slices[0], vec![vec![1, 3, 5], vec![7, 9]]);
        assert_eq!(plan.locate(7), Some((0, 1)));
        assert_eq!(plan.locate(11), None);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(partition_cluster_rr(&[0, 1], &[1], 2, 1).is_err());
        assert!(partition_random(&[1, 1], 2, 0, 1).is_err());
        assert!(partition_random(&[1, 2], 0, 0, 1).is_err());
    }

    #[test]
    fn random_is_seeded() {
        let ids: Vec<u64> = (0..50).collect();
        let a = partition_random(&ids, 4, 7, 1).unwrap();
        assert_eq!(a, partition_random(&ids, 4, 7, 1).unwrap());
        let plans: Vec<_> = (0..5).map(|s| partition_random(&ids, 4, s, 1).unwrap().slices).collect();
        for i in 0..5 {
            for j in (i + 1)..5 {
                assert_ne!(plans[i], plans[j]);
            }
        }
    }

    #[test]
    fn by_user_keeps_users_together() {
        let ids: Vec<u64> = (0..20).collect();
        let users: Vec<u64> = ids.iter().map(|i| i % 6).collect();
        let labels: Vec<usize> = ids.iter().map(|i| (*i % 3) as usize).collect();
        for plan in [
            partition_by_user(&ids, &users, Some(&labels), 3, 0, 2).unwrap(),
            partition_by_user(&ids, &users, None, 3, 5, 1).unwrap(),
        ] {
            let assign = plan.assignment();
            assert_eq!(assign.len(), 20);
            for u in 0..6u64 {
                let shards: HashSet<usize> = ids.iter().filter(|i| *i % 6 == u).map(|i| assign[i].0).collect();
                assert_eq!(shards.len(), 1);
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let ids: Vec<u64> = (1..=30).collect();
        let plan = partition_random(&ids, 3, 11, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.csv");
        plan.save_csv(&path).unwrap();
        let back = ShardPlan::load_csv(&path, Strategy::Random, 11, Some(3), Some(2)).unwrap();
        assert_eq!(back, plan);
    }
}
