//! Synthetic datasets with planted structure, used by tests and the
//! acceptance suite. All generators go through the regular ingestion
//! pipeline so they exercise ID mapping and splitting too.

use std::collections::HashSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::dataio::{build_dataset, InteractionDataset, RawInteraction};

/// Two disjoint user groups, each interacting only with its own half of the
/// item set. Any ranking model that separates the groups pushes every
/// held-out item into the short own-group candidate list.
///
/// Users alternate between groups; items split into two equal halves.
/// `per_user` distinct items are sampled uniformly from the user's half, so
/// it must not exceed `n_items / 2`.
pub fn planted_two_cluster(
    n_users: usize,
    n_items: usize,
    per_user: usize,
    seed: u64,
) -> InteractionDataset {
    assert!(
        n_items >= 2 && n_items.is_multiple_of(2),
        "need an even item count"
    );
    assert!(per_user <= n_items / 2, "per_user exceeds group size");
    let half = n_items / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n_users * per_user);
    for u in 0..n_users {
        let base = (u % 2) * half;
        let mut own: Vec<usize> = (base..base + half).collect();
        own.shuffle(&mut rng);
        for (t, item) in own[..per_user].iter().enumerate() {
            rows.push(RawInteraction {
                user_token: format!("u{u}"),
                item_token: format!("i{item}"),
                rating: None,
                timestamp: t as i64,
            });
        }
    }
    let (dataset, _) = build_dataset(&rows, None).expect("planted data is well-formed");
    dataset
}

/// Items sit on the leaves of a full binary tree; each user owns a home
/// leaf and samples items by first ascending `k` levels (geometrically
/// distributed with continue-probability `ascend_prob`), then drawing a
/// leaf of that subtree weighted by item popularity. Preference mass
/// therefore decays with tree distance from the home leaf while global
/// popularity follows a Zipf law with the given exponent (0 = uniform),
/// mirroring the head-heavy catalogs of real interaction logs.
pub fn planted_hierarchy(
    depth: u32,
    users_per_leaf: usize,
    per_user: usize,
    ascend_prob: f64,
    zipf_exponent: f64,
    seed: u64,
) -> InteractionDataset {
    assert!((1..=20).contains(&depth), "depth out of range");
    assert!(
        (0.0..1.0).contains(&ascend_prob),
        "ascend_prob must be in [0, 1)"
    );
    assert!(zipf_exponent >= 0.0, "zipf_exponent must be nonnegative");
    let n_leaves = 1usize << depth;
    assert!(per_user <= n_leaves, "per_user exceeds leaf count");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Popularity ranks are a random permutation of the leaves, so head
    // items scatter across the tree instead of clustering in one subtree.
    let mut rank: Vec<usize> = (0..n_leaves).collect();
    rank.shuffle(&mut rng);
    // prefix[i] = total weight of leaves < i; subtree sums come from
    // differences, and a uniform draw inside a sum inverts by binary
    // search.
    let mut prefix = Vec::with_capacity(n_leaves + 1);
    prefix.push(0.0);
    for leaf in 0..n_leaves {
        let w = 1.0 / ((rank[leaf] + 1) as f64).powf(zipf_exponent);
        prefix.push(prefix[leaf] + w);
    }
    let weighted_leaf = |lo: usize, hi: usize, rng: &mut ChaCha8Rng| -> usize {
        let x = prefix[lo] + rng.random::<f64>() * (prefix[hi] - prefix[lo]);
        let k = prefix.partition_point(|&p| p <= x);
        (k - 1).min(hi - 1).max(lo)
    };

    let mut rows = Vec::new();
    for home in 0..n_leaves {
        for slot in 0..users_per_leaf {
            let user = home * users_per_leaf + slot;
            let mut chosen = HashSet::with_capacity(per_user);
            let mut order = Vec::with_capacity(per_user);
            let mut attempts = 0usize;
            while order.len() < per_user && attempts < 200 * per_user {
                attempts += 1;
                let mut k = 0u32;
                while k < depth && rng.random_bool(ascend_prob) {
                    k += 1;
                }
                let width = 1usize << k;
                let subtree_base = (home >> k) << k;
                let item = weighted_leaf(subtree_base, subtree_base + width, &mut rng);
                if chosen.insert(item) {
                    order.push(item);
                }
            }
            for (t, item) in order.iter().enumerate() {
                rows.push(RawInteraction {
                    user_token: format!("u{user}"),
                    item_token: format!("i{item}"),
                    rating: None,
                    timestamp: t as i64,
                });
            }
        }
    }
    let (dataset, _) = build_dataset(&rows, None).expect("planted data is well-formed");
    dataset
}

/// Clustered catalog with globally popular "hit" items and a discovery
/// drift: each user's early interactions are dominated by the shared hits,
/// while later ones settle into the user's own item cluster. Under a
/// leave-last-out split the held-out items are therefore mostly niche
/// cluster items, so raw popularity is anti-predictive at test time and a
/// model must rank a user's unseen cluster items above the unseen hits it
/// was trained to promote.
///
/// `hit_prob0` is the probability that the first interaction draws from
/// the hit set; the probability decays to zero over the user's timeline.
pub fn planted_popularity_drift(
    n_clusters: usize,
    items_per_cluster: usize,
    n_hits: usize,
    users_per_cluster: usize,
    per_user: usize,
    hit_prob0: f64,
    seed: u64,
) -> InteractionDataset {
    assert!(n_clusters >= 1 && items_per_cluster >= 1, "empty catalog");
    assert!(
        per_user >= 3,
        "need at least train, validation and test slots"
    );
    assert!(
        (0.0..=1.0).contains(&hit_prob0),
        "hit_prob0 must be in [0, 1]"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n_clusters * users_per_cluster * per_user);
    for c in 0..n_clusters {
        for u in 0..users_per_cluster {
            let user = format!("u{c}_{u}");
            for t in 0..per_user {
                let frac = t as f64 / (per_user - 1).max(1) as f64;
                let hit_p = hit_prob0 * (1.0 - frac).powf(1.5);
                let item = if n_hits > 0 && rng.random::<f64>() < hit_p {
                    format!("hit{}", rng.random_range(0..n_hits))
                } else {
                    format!("c{}_{}", c, rng.random_range(0..items_per_cluster))
                };
                rows.push(RawInteraction {
                    user_token: user.clone(),
                    item_token: item,
                    rating: None,
                    timestamp: t as i64,
                });
            }
        }
    }
    let (dataset, _) = build_dataset(&rows, None).expect("planted data is well-formed");
    dataset
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Split;

    #[test]
    fn two_cluster_respects_group_membership() {
        let ds = planted_two_cluster(50, 40, 15, 7);
        assert_eq!(ds.n_users(), 50);
        assert_eq!(ds.n_items(), 40);
        for u in 0..ds.n_users() {
            assert_eq!(ds.user_interactions(u).len(), 15);
            let group = ds.user_token(u)[1..].parse::<usize>().unwrap() % 2;
            for it in ds.user_interactions(u) {
                let raw_item: usize = ds.item_token(it.item as usize)[1..].parse().unwrap();
                assert_eq!(raw_item / 20, group, "item outside the user's half");
            }
            assert!(ds.test_item(u).is_some());
            assert!(ds.validation_item(u).is_some());
        }
    }

    #[test]
    fn two_cluster_is_deterministic() {
        let a = planted_two_cluster(20, 16, 6, 3);
        let b = planted_two_cluster(20, 16, 6, 3);
        assert_eq!(a, b);
    }

    #[test]
    fn hierarchy_prefers_near_leaves() {
        let depth = 5;
        let ds = planted_hierarchy(depth, 2, 12, 0.45, 0.0, 11);
        assert_eq!(ds.n_users(), 2 << depth);
        // Count interactions whose item shares the top-level subtree with
        // the user's home leaf; locality should dominate.
        let mut same = 0usize;
        let mut total = 0usize;
        for u in 0..ds.n_users() {
            let user_raw: usize = ds.user_token(u)[1..].parse().unwrap();
            let home = user_raw / 2;
            let home_side = home >> (depth - 1);
            for it in ds.user_interactions(u) {
                let raw_item: usize = ds.item_token(it.item as usize)[1..].parse().unwrap();
                total += 1;
                if raw_item >> (depth - 1) == home_side {
                    same += 1;
                }
            }
        }
        assert!(
            same as f64 > 0.75 * total as f64,
            "expected strong locality, got {same}/{total}"
        );
    }

    #[test]
    fn generators_produce_full_splits() {
        let ds = planted_hierarchy(4, 3, 8, 0.4, 1.0, 5);
        let mut n_test = 0;
        for it in ds.interactions() {
            if it.split == Split::Test {
                n_test += 1;
            }
        }
        assert_eq!(n_test, ds.n_users());
    }

    #[test]
    fn popularity_drift_front_loads_hits() {
        let ds = planted_popularity_drift(6, 20, 12, 16, 26, 0.6, 7);
        assert_eq!(ds.n_users(), 96);
        let is_hit = |item: u32| ds.item_token(item as usize).starts_with("hit");
        // Hits should dominate the first interaction slot and be rare among
        // held-out test items.
        let mut first_hits = 0usize;
        let mut test_hits = 0usize;
        for u in 0..ds.n_users() {
            if is_hit(ds.user_interactions(u)[0].item) {
                first_hits += 1;
            }
            if is_hit(ds.test_item(u).unwrap()) {
                test_hits += 1;
            }
        }
        assert!(
            first_hits as f64 > 0.4 * ds.n_users() as f64,
            "expected hit-heavy first interactions, got {first_hits}/96"
        );
        assert!(
            (test_hits as f64) < 0.1 * ds.n_users() as f64,
            "expected niche test items, got {test_hits}/96 hits"
        );
    }

    #[test]
    fn popularity_drift_is_deterministic() {
        let a = planted_popularity_drift(4, 10, 6, 8, 12, 0.5, 9);
        let b = planted_popularity_drift(4, 10, 6, 8, 12, 0.5, 9);
        assert_eq!(a, b);
    }
}
