//! Ranking evaluation: sampled candidate ranking, hit rate and nDCG,
//! full-catalog top-k lists, elapsed-time cohorts, and ranking-overlap
//! curves.
//!
//! Rank ties are resolved pessimistically: the positive item ranks below
//! every negative that scores greater than *or equal to* it, so a constant
//! scorer earns the worst possible rank instead of a flattering one.
//! All sampling is derived per pair from the run seed, which makes results
//! independent of evaluation order and thread count.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::corpus::{IndexedInteraction, Timestamp, SECS_PER_DAY};
use crate::error::{Error, Result};
use crate::model::Scorer;
use crate::scalar::Scalar;
use crate::seeding::derive;

/// One held-out interaction to rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalPair {
    pub user: u32,
    pub item: u32,
    pub time: Timestamp,
}

impl EvalPair {
    pub fn from_interactions(recs: &[IndexedInteraction]) -> Vec<EvalPair> {
        recs.iter()
            .map(|r| EvalPair {
                user: r.user,
                item: r.item,
                time: r.time,
            })
            .collect()
    }
}

/// Pessimistic rank of the positive among `1 + negatives.len()` candidates:
/// one plus the number of negatives scoring greater than or equal to it.
pub fn rank_one<T: Scalar>(positive: T, negatives: &[T]) -> usize {
    1 + negatives.iter().filter(|&&s| s >= positive).count()
}

pub fn hit_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0
    } else {
        0.0
    }
}

/// With a single relevant item the ideal DCG is 1, so nDCG reduces to the
/// discount at the achieved rank.
pub fn ndcg_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

/// Per-user sorted item sets that candidates must avoid.
#[derive(Debug, Clone)]
pub struct ExclusionIndex {
    per_user: Vec<Vec<u32>>,
}

impl ExclusionIndex {
    /// Union of the users' items across the given splits.
    pub fn from_splits(splits: &[&[IndexedInteraction]], n_users: usize) -> ExclusionIndex {
        let mut per_user: Vec<Vec<u32>> = vec![Vec::new(); n_users];
        for split in splits {
            for r in *split {
                per_user[r.user as usize].push(r.item);
            }
        }
        for list in &mut per_user {
            list.sort_unstable();
            list.dedup();
        }
        ExclusionIndex { per_user }
    }

    pub fn excluded(&self, user: u32) -> &[u32] {
        &self.per_user[user as usize]
    }

    pub fn contains(&self, user: u32, item: u32) -> bool {
        self.per_user[user as usize].binary_search(&item).is_ok()
    }

    pub fn n_eligible(&self, user: u32, n_items: usize) -> usize {
        n_items - self.per_user[user as usize].len()
    }
}

/// Draw `count` distinct items outside the user's exclusion set. The stream
/// is fully determined by `seed`.
pub fn sample_candidate_negatives(
    seed: u64,
    user: u32,
    n_items: usize,
    excluded: &[u32],
    count: usize,
) -> Result<Vec<u32>> {
    if n_items - excluded.len() < count {
        return Err(Error::NoNegatives { user });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<u32> = Vec::with_capacity(count);
    while out.len() < count {
        let cand = rng.random_range(0..n_items as u32);
        if excluded.binary_search(&cand).is_err() && !out.contains(&cand) {
            out.push(cand);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedPair {
    pub user: u32,
    pub item: u32,
    pub time: Timestamp,
    pub rank: usize,
}

/// Rank every pair against `n_negatives` sampled candidates. Each pair's
/// negative sample is derived from `(seed, user, item, occurrence)`, so a
/// pair's candidates do not depend on its position in the list.
pub fn rank_pairs<T: Scalar, S: Scorer<T>>(
    scorer: &S,
    pairs: &[EvalPair],
    exclusions: &ExclusionIndex,
    n_items: usize,
    n_negatives: usize,
    seed: u64,
) -> Result<Vec<RankedPair>> {
    let mut occurrence: HashMap<(u32, u32), u64> = HashMap::new();
    let occs: Vec<u64> = pairs
        .iter()
        .map(|p| {
            let c = occurrence.entry((p.user, p.item)).or_insert(0);
            let occ = *c;
            *c += 1;
            occ
        })
        .collect();

    pairs
        .par_iter()
        .zip(occs.par_iter())
        .map(|(p, &occ)| {
            let pair_seed = derive(seed, "eval-neg", &[p.user as u64, p.item as u64, occ]);
            let negatives = sample_candidate_negatives(
                pair_seed,
                p.user,
                n_items,
                exclusions.excluded(p.user),
                n_negatives,
            )?;
            let pos = checked_score(scorer, p.user, p.item)?;
            let mut neg_scores = Vec::with_capacity(negatives.len());
            for &neg in &negatives {
                neg_scores.push(checked_score(scorer, p.user, neg)?);
            }
            Ok(RankedPair {
                user: p.user,
                item: p.item,
                time: p.time,
                rank: rank_one(pos, &neg_scores),
            })
        })
        .collect()
}

fn checked_score<T: Scalar, S: Scorer<T>>(scorer: &S, u: u32, i: u32) -> Result<T> {
    let s = scorer.score(u, i)?;
    if !s.is_finite() {
        return Err(Error::Eval(format!(
            "non-finite score for user {u}, item {i}"
        )));
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint {
    pub k: usize,
    pub hr: f64,
    pub ndcg: f64,
}

/// Mean hit rate and nDCG at each cutoff.
pub fn ranking_metrics(ranked: &[RankedPair], ks: &[usize]) -> Result<Vec<MetricPoint>> {
    if ranked.is_empty() {
        return Err(Error::Eval("no pairs to evaluate".to_string()));
    }
    let n = ranked.len() as f64;
    Ok(ks
        .iter()
        .map(|&k| MetricPoint {
            k,
            hr: ranked.iter().map(|r| hit_at_k(r.rank, k)).sum::<f64>() / n,
            ndcg: ranked.iter().map(|r| ndcg_at_k(r.rank, k)).sum::<f64>() / n,
        })
        .collect())
}

/// Top-k recommendation lists over the whole catalog, excluding each user's
/// known items. Ties broken toward the smaller item index.
pub fn top_k_lists<T: Scalar, S: Scorer<T>>(
    scorer: &S,
    n_users: usize,
    n_items: usize,
    exclusions: &ExclusionIndex,
    k: usize,
) -> Result<Vec<Vec<u32>>> {
    (0..n_users as u32)
        .into_par_iter()
        .map(|u| {
            let mut scored: Vec<(T, u32)> = Vec::with_capacity(n_items);
            for i in 0..n_items as u32 {
                if exclusions.contains(u, i) {
                    continue;
                }
                scored.push((checked_score(scorer, u, i)?, i));
            }
            scored.sort_unstable_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .expect("finite scores compare")
                    .then(a.1.cmp(&b.1))
            });
            scored.truncate(k);
            Ok(scored.into_iter().map(|(_, i)| i).collect())
        })
        .collect()
}

/// Mean per-user overlap `|a_u intersect b_u| / k` between two list sets.
pub fn overlap_ratio(a: &[Vec<u32>], b: &[Vec<u32>], k: usize) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 1.0;
    }
    let total: f64 = a
        .iter()
        .zip(b)
        .map(|(la, lb)| la.iter().filter(|i| lb.contains(i)).count() as f64 / k as f64)
        .sum();
    total / a.len() as f64
}

/// Overlap of recommendation lists against the unshifted baseline, per
/// offset. `lists_at` must rebuild the lists with all consumption timestamps
/// moved by the offset; a timestamp-insensitive model yields 1.0 everywhere.
pub fn shift_overlap_curve(
    base: &[Vec<u32>],
    offsets: &[i64],
    k: usize,
    mut lists_at: impl FnMut(i64) -> Result<Vec<Vec<u32>>>,
) -> Result<Vec<(i64, f64)>> {
    let mut curve = Vec::with_capacity(offsets.len());
    for &off in offsets {
        let lists = lists_at(off)?;
        curve.push((off, overlap_ratio(base, &lists, k)));
    }
    Ok(curve)
}

/// Nearest-rank percentile: the smallest element with at least `p` of the
/// sample at or below it. `p` in (0, 1].
pub fn nearest_rank_percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty() && p > 0.0 && p <= 1.0);
    let n = sorted.len();
    let idx = (p * n as f64).ceil() as usize;
    sorted[idx.clamp(1, n) - 1]
}

pub fn elapsed_days(pair_time: Timestamp, last_train_time: Timestamp) -> f64 {
    (pair_time - last_train_time) as f64 / SECS_PER_DAY as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortBucket {
    /// Inclusive upper edge in days; `None` for the open last bucket.
    pub upper_days: Option<f64>,
    pub n_pairs: usize,
    pub hr: Option<f64>,
    pub ndcg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub k: usize,
    /// 25th/50th/75th percentile elapsed days over all pairs.
    pub thresholds_days: [f64; 3],
    pub buckets: Vec<CohortBucket>,
}

/// Bucket pairs by elapsed days at the quartile thresholds and report
/// ranking quality per bucket. Buckets are `(-inf, t1]`, `(t1, t2]`,
/// `(t2, t3]`, `(t3, inf)`.
pub fn elapsed_cohorts(records: &[(f64, usize)], k: usize) -> Result<CohortReport> {
    if records.is_empty() {
        return Err(Error::Eval("no pairs for cohort analysis".to_string()));
    }
    let mut elapsed: Vec<f64> = records.iter().map(|&(e, _)| e).collect();
    elapsed.sort_by(|a, b| a.partial_cmp(b).expect("finite elapsed days"));
    let thresholds = [
        nearest_rank_percentile(&elapsed, 0.25),
        nearest_rank_percentile(&elapsed, 0.50),
        nearest_rank_percentile(&elapsed, 0.75),
    ];
    let bucket_of = |e: f64| thresholds.iter().position(|&t| e <= t).unwrap_or(3);

    let mut buckets: Vec<(usize, f64, f64)> = vec![(0, 0.0, 0.0); 4];
    for &(e, rank) in records {
        let b = &mut buckets[bucket_of(e)];
        b.0 += 1;
        b.1 += hit_at_k(rank, k);
        b.2 += ndcg_at_k(rank, k);
    }
    Ok(CohortReport {
        k,
        thresholds_days: thresholds,
        buckets: buckets
            .into_iter()
            .enumerate()
            .map(|(i, (n, hr, ndcg))| CohortBucket {
                upper_days: thresholds.get(i).copied(),
                n_pairs: n,
                hr: (n > 0).then(|| hr / n as f64),
                ndcg: (n > 0).then(|| ndcg / n as f64),
            })
            .collect(),
    })
}
