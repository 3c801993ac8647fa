//! Full-catalog top-K evaluation, coverage and popularity analysis, score
//! histograms, and the scoring-latency benchmark.
//!
//! Ranking is leave-last-out: each user's held-out item is ranked against
//! the whole catalog with that user's seen items masked out. Ties are
//! counted pessimistically, i.e. items scoring equal to the target rank
//! ahead of it.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::dataio::InteractionDataset;
use crate::error::{Error, Result};
use crate::model::scores::{clip_to_ball, lorentz_score_ambient, poincare_neg_dist_clipped};
use crate::model::{EmbeddingTable, RankingModel};

/// Recommendation list length recorded per user.
pub const TOP_K: usize = 10;

/// Ranking outcome for one evaluated user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankResult {
    pub user: usize,
    /// 1-based rank of the held-out item among unmasked candidates.
    pub target_rank: usize,
    /// Up to [`TOP_K`] unmasked items, sorted by descending score with item
    /// id as the deterministic tie-break.
    pub topk_items: Vec<u32>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum EvalSplit {
    Test,
    Validation,
}

/// Ranks every user's test item against the full catalog, masking that
/// user's train and validation items. Users without a test item are
/// skipped. Results come back in user order regardless of thread count.
pub fn rank_test(
    table: &EmbeddingTable,
    model: &dyn RankingModel,
    dataset: &InteractionDataset,
) -> Vec<RankResult> {
    rank_split(table, model, dataset, EvalSplit::Test)
}

/// Ranks every user's validation item, masking train items only.
pub fn rank_validation(
    table: &EmbeddingTable,
    model: &dyn RankingModel,
    dataset: &InteractionDataset,
) -> Vec<RankResult> {
    rank_split(table, model, dataset, EvalSplit::Validation)
}

fn rank_split(
    table: &EmbeddingTable,
    model: &dyn RankingModel,
    dataset: &InteractionDataset,
    split: EvalSplit,
) -> Vec<RankResult> {
    assert_eq!(
        table.n_users(),
        dataset.n_users(),
        "table/dataset user counts differ"
    );
    assert_eq!(
        table.n_items(),
        dataset.n_items(),
        "table/dataset item counts differ"
    );
    let n_items = dataset.n_items();
    (0..dataset.n_users())
        .into_par_iter()
        .filter_map(|user| {
            let target = match split {
                EvalSplit::Test => dataset.test_item(user),
                EvalSplit::Validation => dataset.validation_item(user),
            }? as usize;
            let mut scores = vec![0.0; n_items];
            model.score_all(table, user, &mut scores);
            for &item in dataset.user_train_items(user) {
                scores[item as usize] = f64::NEG_INFINITY;
            }
            if split == EvalSplit::Test {
                if let Some(v) = dataset.validation_item(user) {
                    scores[v as usize] = f64::NEG_INFINITY;
                }
            }
            let target_score = scores[target];
            debug_assert!(target_score.is_finite(), "target was masked");
            let mut target_rank = 1usize;
            for (item, &s) in scores.iter().enumerate() {
                if item != target && s >= target_score {
                    target_rank += 1;
                }
            }
            let mut candidates: Vec<u32> = (0..n_items as u32)
                .filter(|&i| scores[i as usize] > f64::NEG_INFINITY)
                .collect();
            candidates.sort_unstable_by(|&a, &b| {
                scores[b as usize]
                    .partial_cmp(&scores[a as usize])
                    .expect("candidate scores are finite")
                    .then(a.cmp(&b))
            });
            candidates.truncate(TOP_K);
            Some(RankResult {
                user,
                target_rank,
                topk_items: candidates,
            })
        })
        .collect()
}

/// Fraction of users whose held-out item landed in the top `k`.
pub fn hit_rate(results: &[RankResult], k: usize) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::EmptyEvaluation("no users to evaluate".into()));
    }
    let hits = results.iter().filter(|r| r.target_rank <= k).count();
    Ok(hits as f64 / results.len() as f64)
}

/// Mean single-target NDCG@k: 1/log2(rank+1) when rank <= k, else 0. The
/// ideal DCG is 1, so values live in [0, 1].
pub fn ndcg(results: &[RankResult], k: usize) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::EmptyEvaluation("no users to evaluate".into()));
    }
    let total: f64 = results
        .iter()
        .map(|r| {
            if r.target_rank <= k {
                1.0 / ((r.target_rank + 1) as f64).log2()
            } else {
                0.0
            }
        })
        .sum();
    Ok(total / results.len() as f64)
}

/// |union of all users' top-k items| / n_items.
pub fn coverage(results: &[RankResult], k: usize, n_items: usize) -> f64 {
    let mut seen = vec![false; n_items];
    for r in results {
        for &item in r.topk_items.iter().take(k) {
            seen[item as usize] = true;
        }
    }
    seen.iter().filter(|&&s| s).count() as f64 / n_items as f64
}

/// Popularity bin of an item under the cumulative-mass convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PopularityBin {
    Head,
    Medium,
    Tail,
}

/// Assigns every item to head/medium/tail by cumulative train-popularity
/// mass: items are sorted by descending popularity (item id breaks ties)
/// and the head holds the first 20% of total mass, the tail the last 20%,
/// medium the rest. Zero-popularity items always land in the tail.
pub fn popularity_bins(popularity: &[u32]) -> Vec<PopularityBin> {
    let total: u64 = popularity.iter().map(|&c| u64::from(c)).sum();
    let mut order: Vec<usize> = (0..popularity.len()).collect();
    order.sort_unstable_by_key(|&i| (std::cmp::Reverse(popularity[i]), i));
    let head_cut = 0.2 * total as f64;
    let tail_cut = 0.8 * total as f64;
    let mut bins = vec![PopularityBin::Tail; popularity.len()];
    let mut cum = 0u64;
    for &item in &order {
        let before = cum as f64;
        bins[item] = if before < head_cut {
            PopularityBin::Head
        } else if before < tail_cut {
            PopularityBin::Medium
        } else {
            PopularityBin::Tail
        };
        cum += u64::from(popularity[item]);
    }
    bins
}

/// Fractions of recommended slots falling in each popularity bin. The
/// fractions sum to 1 over head + medium + tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PopularityShares {
    pub head: f64,
    pub medium: f64,
    pub tail: f64,
}

/// Share of all recommended slots (across users' top-10 lists) per
/// popularity bin of the dataset's train-split popularity.
pub fn popularity_shares(
    results: &[RankResult],
    dataset: &InteractionDataset,
) -> Result<PopularityShares> {
    let bins = popularity_bins(dataset.item_popularity());
    let mut counts = [0usize; 3];
    let mut slots = 0usize;
    for r in results {
        for &item in &r.topk_items {
            counts[bins[item as usize] as usize] += 1;
            slots += 1;
        }
    }
    if slots == 0 {
        return Err(Error::EmptyEvaluation("no recommended slots".into()));
    }
    Ok(PopularityShares {
        head: counts[0] as f64 / slots as f64,
        medium: counts[1] as f64 / slots as f64,
        tail: counts[2] as f64 / slots as f64,
    })
}

/// Histograms of positive-pair and negative-pair scores over a shared
/// binning, plus the separation statistic (difference of means over pooled
/// standard deviation).
#[derive(Debug, Clone, Serialize)]
pub struct ScoreHistogram {
    pub bin_left: Vec<f64>,
    pub bin_right: Vec<f64>,
    pub pos_count: Vec<u32>,
    pub neg_count: Vec<u32>,
    pub mean_pos: f64,
    pub mean_neg: f64,
    pub separation: f64,
}

impl ScoreHistogram {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_left,bin_right,pos_count,neg_count\n");
        for i in 0..self.bin_left.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.bin_left[i], self.bin_right[i], self.pos_count[i], self.neg_count[i]
            ));
        }
        out
    }
}

/// Scores every user's held-out test item (positives) and one uniformly
/// sampled never-interacted item per user (negatives), then bins both sets
/// over the pooled empirical range. `seed` fixes the negative draws so
/// repeated runs emit identical output.
pub fn score_histogram(
    table: &EmbeddingTable,
    model: &dyn RankingModel,
    dataset: &InteractionDataset,
    bins: usize,
    seed: u64,
) -> Result<ScoreHistogram> {
    assert!(bins >= 1, "need at least one bin");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_items = dataset.n_items();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for user in 0..dataset.n_users() {
        let Some(target) = dataset.test_item(user) else {
            continue;
        };
        pos.push(model.score(table, user, target as usize));
        let mut interacted = vec![false; n_items];
        for it in dataset.user_interactions(user) {
            interacted[it.item as usize] = true;
        }
        // Uniform draw over the complement: bounded rejection, then a
        // scan fallback for near-full users.
        let mut negative = None;
        for _ in 0..100 {
            let cand = rng.random_range(0..n_items);
            if !interacted[cand] {
                negative = Some(cand);
                break;
            }
        }
        if negative.is_none() {
            let free: Vec<usize> = (0..n_items).filter(|&i| !interacted[i]).collect();
            if !free.is_empty() {
                negative = Some(free[rng.random_range(0..free.len())]);
            }
        }
        if let Some(item) = negative {
            neg.push(model.score(table, user, item));
        }
    }
    if pos.is_empty() {
        return Err(Error::EmptyEvaluation("no test pairs to score".into()));
    }

    let all = pos.iter().chain(neg.iter());
    let lo = all.clone().cloned().fold(f64::INFINITY, f64::min);
    let hi = all.cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo {
        (hi - lo) / bins as f64
    } else {
        1.0
    };
    let index = |s: f64| (((s - lo) / width) as usize).min(bins - 1);
    let mut pos_count = vec![0u32; bins];
    let mut neg_count = vec![0u32; bins];
    for &s in &pos {
        pos_count[index(s)] += 1;
    }
    for &s in &neg {
        neg_count[index(s)] += 1;
    }
    let bin_left: Vec<f64> = (0..bins).map(|i| lo + i as f64 * width).collect();
    let bin_right: Vec<f64> = (0..bins).map(|i| lo + (i + 1) as f64 * width).collect();

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let mean_pos = mean(&pos);
    let mean_neg = mean(&neg);
    let ss = |v: &[f64], m: f64| v.iter().map(|&s| (s - m) * (s - m)).sum::<f64>();
    let dof = (pos.len() + neg.len()).saturating_sub(2).max(1);
    let pooled = ((ss(&pos, mean_pos) + ss(&neg, mean_neg)) / dof as f64).sqrt();
    // Degenerate spread (e.g. every score identical) reports 0 rather than
    // dividing by zero.
    let separation = if pooled > 0.0 {
        (mean_pos - mean_neg) / pooled
    } else {
        0.0
    };

    Ok(ScoreHistogram {
        bin_left,
        bin_right,
        pos_count,
        neg_count,
        mean_pos,
        mean_neg,
        separation,
    })
}

/// Latency benchmark outcome. All times are nanoseconds per scored pair.
#[derive(Debug, Clone, Serialize)]
pub struct LatencyStats {
    pub dim: usize,
    pub n_pairs: usize,
    pub repetitions: usize,
    pub lorentz_mean_ns: f64,
    pub lorentz_p95_ns: f64,
    pub poincare_mean_ns: f64,
    pub poincare_p95_ns: f64,
    /// poincare_mean_ns / lorentz_mean_ns.
    pub ratio: f64,
    pub lorentz_rep_means_ns: Vec<f64>,
    pub poincare_rep_means_ns: Vec<f64>,
}

const BENCH_POOL: usize = 1024;
const BENCH_CHUNK: usize = 4096;
// A repetition finishing faster than this cannot be resolved reliably by
// the monotonic clock.
const MIN_REP_NANOS: u128 = 1_000_000;

/// Times batch scoring of `n_pairs` random embedding pairs per repetition
/// under the squared-Lorentz score and the Poincare distance, on identical
/// inputs. Runs single-threaded; inputs are pre-generated so the timed
/// region is pure scoring. The p95 is taken over per-chunk mean pair
/// times.
pub fn latency_bench(
    dim: usize,
    n_pairs: usize,
    repetitions: usize,
    seed: u64,
) -> Result<LatencyStats> {
    assert!(dim >= 1 && n_pairs >= 1 && repetitions >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 0.1).expect("valid scale");
    let mut pool =
        |n: usize| -> Vec<f64> { (0..n * dim).map(|_| normal.sample(&mut rng)).collect() };
    let users = pool(BENCH_POOL);
    let items = pool(BENCH_POOL);
    let pairs: Vec<(usize, usize)> = (0..n_pairs)
        .map(|_| {
            (
                rng.random_range(0..BENCH_POOL),
                rng.random_range(0..BENCH_POOL),
            )
        })
        .collect();

    let mut cu = vec![0.0; dim];
    let mut ci = vec![0.0; dim];

    let mut run = |geometry: usize, timed: bool| -> (f64, Vec<f64>, u128) {
        let mut chunk_means = Vec::with_capacity(n_pairs / BENCH_CHUNK + 1);
        let mut acc = 0.0f64;
        let mut total: u128 = 0;
        for chunk in pairs.chunks(BENCH_CHUNK) {
            let start = Instant::now();
            for &(u, i) in chunk {
                let p = &users[u * dim..(u + 1) * dim];
                let q = &items[i * dim..(i + 1) * dim];
                acc += if geometry == 0 {
                    lorentz_score_ambient(p, q)
                } else {
                    clip_to_ball(p, &mut cu);
                    clip_to_ball(q, &mut ci);
                    poincare_neg_dist_clipped(&cu, &ci)
                };
            }
            let elapsed = start.elapsed().as_nanos();
            total += elapsed;
            chunk_means.push(elapsed as f64 / chunk.len() as f64);
        }
        std::hint::black_box(acc);
        if !timed {
            chunk_means.clear();
        }
        (acc, chunk_means, total)
    };

    // Warm caches and code paths before measuring.
    run(0, false);
    run(1, false);

    let mut lorentz_chunks = Vec::new();
    let mut poincare_chunks = Vec::new();
    let mut lorentz_rep_means_ns = Vec::with_capacity(repetitions);
    let mut poincare_rep_means_ns = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let (_, chunks, total) = run(0, true);
        if total < MIN_REP_NANOS {
            return Err(Error::TimerResolution { pairs: n_pairs });
        }
        lorentz_rep_means_ns.push(total as f64 / n_pairs as f64);
        lorentz_chunks.extend(chunks);
        let (_, chunks, total) = run(1, true);
        if total < MIN_REP_NANOS {
            return Err(Error::TimerResolution { pairs: n_pairs });
        }
        poincare_rep_means_ns.push(total as f64 / n_pairs as f64);
        poincare_chunks.extend(chunks);
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let p95 = |v: &mut Vec<f64>| {
        v.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        v[((v.len() as f64 * 0.95) as usize).min(v.len() - 1)]
    };
    let lorentz_mean_ns = mean(&lorentz_rep_means_ns);
    let poincare_mean_ns = mean(&poincare_rep_means_ns);
    Ok(LatencyStats {
        dim,
        n_pairs,
        repetitions,
        lorentz_mean_ns,
        lorentz_p95_ns: p95(&mut lorentz_chunks),
        poincare_mean_ns,
        poincare_p95_ns: p95(&mut poincare_chunks),
        ratio: poincare_mean_ns / lorentz_mean_ns,
        lorentz_rep_means_ns,
        poincare_rep_means_ns,
    })
}

/// Aggregated evaluation report, serialized as the JSON artifact.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub model_kind: String,
    pub dim: usize,
    pub n_users_evaluated: usize,
    pub hr5: f64,
    pub hr10: f64,
    pub ndcg5: f64,
    pub ndcg10: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage10: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub popularity_shares: Option<PopularityShares>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub separation: Option<f64>,
}

impl EvalReport {
    /// The four headline metrics from a result set; optional sections stay
    /// empty until filled in by the caller.
    pub fn from_results(
        model_kind: String,
        dim: usize,
        results: &[RankResult],
    ) -> Result<EvalReport> {
        Ok(EvalReport {
            model_kind,
            dim,
            n_users_evaluated: results.len(),
            hr5: hit_rate(results, 5)?,
            hr10: hit_rate(results, 10)?,
            ndcg5: ndcg(results, 5)?,
            ndcg10: ndcg(results, 10)?,
            coverage10: None,
            popularity_shares: None,
            separation: None,
        })
    }
}
