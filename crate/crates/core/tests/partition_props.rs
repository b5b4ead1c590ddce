#![allow(clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet};

use mobility_unlearn::sharding::{partition_by_user, partition_cluster_rr, partition_random, ShardPlan, Strategy};
use proptest::prelude::*;

fn ids_from(raw: &BTreeSet<u64>) -> Vec<u64> {
    raw.iter().copied().collect()
}

fn assert_complete(plan: &ShardPlan, ids: &[u64]) -> Result<(), TestCaseError> {
    let assigned = plan.assignment();
    prop_assert_eq!(assigned.len(), ids.len());
    prop_assert_eq!(plan.len(), ids.len());
    for id in ids {
        prop_assert!(assigned.contains_key(id));
    }
    Ok(())
}

fn spread(sizes: &[usize]) -> usize {
    sizes.iter().max().unwrap() - sizes.iter().min().unwrap()
}

fn assert_slices_balanced(plan: &ShardPlan) -> Result<(), TestCaseError> {
    for shard in &plan.slices {
        prop_assert_eq!(shard.len(), plan.n_slices);
        let sizes: Vec<usize> = shard.iter().map(Vec::len).collect();
        prop_assert!(spread(&sizes) <= 1);
        for slice in shard {
            prop_assert!(slice.windows(2).all(|w| w[0] < w[1]));
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn cluster_rr_is_complete_and_balanced(
        raw in prop::collection::btree_set(0u64..100_000, 1..300),
        n_clusters in 1usize..10,
        label_seed in any::<u64>(),
        n_shards in 1usize..20,
        n_slices in 1usize..5,
    ) {
        let ids = ids_from(&raw);
        let labels: Vec<usize> = ids
            .iter()
            .map(|id| ((id.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ label_seed) % n_clusters as u64) as usize)
            .collect();
        let plan = partition_cluster_rr(&labels, &ids, n_shards, n_slices).unwrap();
        assert_complete(&plan, &ids)?;
        prop_assert!(spread(&plan.shard_sizes()) <= 1);
        assert_slices_balanced(&plan)?;

        let label_of: BTreeMap<u64, usize> = ids.iter().copied().zip(labels.iter().copied()).collect();
        let mut count = vec![vec![0usize; n_shards]; n_clusters];
        let mut size = vec![0usize; n_clusters];
        for (id, (s, _)) in plan.assignment() {
            count[label_of[&id]][s] += 1;
            size[label_of[&id]] += 1;
        }
        for c in 0..n_clusters {
            let quota = size[c] as f64 / n_shards as f64;
            for s in 0..n_shards {
                prop_assert!((count[c][s] as f64 - quota).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn random_is_complete_and_balanced(
        raw in prop::collection::btree_set(0u64..100_000, 1..300),
        n_shards in 1usize..20,
        n_slices in 1usize..5,
        seed in any::<u64>(),
    ) {
        let ids = ids_from(&raw);
        let plan = partition_random(&ids, n_shards, seed, n_slices).unwrap();
        assert_complete(&plan, &ids)?;
        prop_assert!(spread(&plan.shard_sizes()) <= 1);
        assert_slices_balanced(&plan)?;
        prop_assert_eq!(&plan, &partition_random(&ids, n_shards, seed, n_slices).unwrap());
    }

    #[test]
    fn by_user_keeps_users_whole(
        raw in prop::collection::btree_set(0u64..100_000, 1..300),
        n_users in 1u64..40,
        n_shards in 1usize..10,
        seed in any::<u64>(),
        clustered in any::<bool>(),
    ) {
        let ids = ids_from(&raw);
        let users: Vec<u64> = ids.iter().map(|id| id % n_users).collect();
        let labels: Vec<usize> = ids.iter().map(|id| (id % 3) as usize).collect();
        let plan = partition_by_user(&ids, &users, clustered.then_some(labels.as_slice()), n_shards, seed, 1).unwrap();
        assert_complete(&plan, &ids)?;
        let assigned = plan.assignment();
        let mut home: BTreeMap<u64, usize> = BTreeMap::new();
        for (id, user) in ids.iter().zip(&users) {
            let s = assigned[id].0;
            prop_assert_eq!(*home.entry(*user).or_insert(s), s);
        }
    }
}

#[test]
fn worked_dealing_example() {
    let plan = partition_cluster_rr(&[0, 0, 0, 1, 1, 1], &[1, 2, 3, 4, 5, 6], 2, 1).unwrap();
    assert_eq!(plan.shard_sequence(0), vec![1, 3, 5]);
    assert_eq!(plan.shard_sequence(1), vec![2, 4, 6]);
    assert_eq!(plan.strategy, Strategy::ClusterRr);
}

#[test]
fn single_shard_holds_everything() {
    let ids: Vec<u64> = (0..50).collect();
    let plan = partition_random(&ids, 1, 3, 1).unwrap();
    assert_eq!(plan.shard_sequence(0), ids);
}

#[test]
fn seeds_give_distinct_random_plans() {
    let ids: Vec<u64> = (0..10).collect();
    let plans: Vec<ShardPlan> = (0..5).map(|s| partition_random(&ids, 2, s, 1).unwrap()).collect();
    for i in 0..plans.len() {
        for j in i + 1..plans.len() {
            assert_ne!(plans[i].slices, plans[j].slices, "seeds {i} and {j}");
        }
    }
}

#[test]
fn length_mismatch_and_duplicates_rejected() {
    assert!(partition_cluster_rr(&[0, 1], &[1, 2, 3], 2, 1).is_err());
    assert!(partition_random(&[1, 1], 2, 0, 1).is_err());
    assert!(partition_random(&[1, 2], 0, 0, 1).is_err());
}
