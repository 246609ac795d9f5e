//! Temporal frequency bins.
//!
//! A [`BinGrid`] covers a time span with equal-width intervals; consumption
//! times of a (user, item) pair are counted per interval to form a
//! [`BinVector`]. Intervals are half-open `[lo, hi)` except the final one,
//! which is closed so the span's maximum timestamp is never lost. Times that
//! fall outside the grid span (possible only when bins are rebuilt from
//! shifted histories during sensitivity analysis) are clamped into the
//! nearest boundary bin rather than dropped.

use std::collections::HashMap;

use crate::corpus::{ConsumptionHistory, DurationSecs, Histories, Timestamp};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinGrid {
    pub origin: Timestamp,
    pub width: DurationSecs,
    pub n_bins: usize,
}

/// Grid over `[min(times), max(times)]` with `ceil(span / width)` bins, at
/// least one.
pub fn build_grid(times: &[Timestamp], width: DurationSecs) -> Result<BinGrid> {
    if width <= 0 {
        return Err(Error::Config(format!("bin width must be positive, got {width}")));
    }
    let (min, max) = match (times.iter().min(), times.iter().max()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::Config("no timestamps to bin".into())),
    };
    let span = max - min;
    let n_bins = if span == 0 {
        1
    } else {
        ((span + width - 1) / width) as usize
    };
    Ok(BinGrid {
        origin: min,
        width,
        n_bins,
    })
}

impl BinGrid {
    /// Index of the bin containing `t`, clamping out-of-span times into the
    /// first or last bin. Exact integer arithmetic.
    pub fn bin_of(&self, t: Timestamp) -> usize {
        let raw = (t - self.origin).div_euclid(self.width);
        raw.clamp(0, self.n_bins as i64 - 1) as usize
    }

    /// Exclusive upper edge of the covered span (the final bin is closed, so
    /// `origin + n_bins * width` itself still lands in the last bin).
    pub fn end(&self) -> Timestamp {
        self.origin + self.n_bins as i64 * self.width
    }
}

/// Sparse per-interval consumption counts on some grid. Entries hold only
/// non-zero bins, ordered by bin index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BinVector {
    pub n_bins: usize,
    entries: Vec<(u32, u32)>,
}

impl BinVector {
    pub fn from_times(times: impl IntoIterator<Item = Timestamp>, grid: &BinGrid) -> BinVector {
        let mut dense = vec![0u32; grid.n_bins];
        for t in times {
            dense[grid.bin_of(t)] += 1;
        }
        BinVector::from_dense(&dense)
    }

    pub fn from_dense(dense: &[u32]) -> BinVector {
        BinVector {
            n_bins: dense.len(),
            entries: dense
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| (i as u32, c))
                .collect(),
        }
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn get(&self, bin: usize) -> u32 {
        self.entries
            .binary_search_by_key(&(bin as u32), |&(i, _)| i)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0)
    }

    /// Total consumption count across all bins.
    pub fn total(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn dense_u32(&self) -> Vec<u32> {
        let mut out = vec![0u32; self.n_bins];
        for &(i, c) in &self.entries {
            out[i as usize] = c;
        }
        out
    }

    /// Dense real view of the suffix starting at `start`.
    pub fn dense_suffix<T: Scalar>(&self, start: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_bins - start];
        self.accumulate_into(&mut out, start, T::one());
        out
    }

    /// Add `weight * count` into `dst`, which covers bins `start..n_bins`.
    pub fn accumulate_into<T: Scalar>(&self, dst: &mut [T], start: usize, weight: T) {
        debug_assert_eq!(dst.len(), self.n_bins - start);
        for &(i, c) in &self.entries {
            let i = i as usize;
            if i >= start {
                dst[i - start] = dst[i - start] + weight * T::from_u32(c).unwrap();
            }
        }
    }
}

/// First bin kept when only the recent half is used: the last
/// `ceil(n_bins / 2)` bins survive.
pub fn recent_half_start(n_bins: usize) -> usize {
    n_bins / 2
}

/// Keep the most recent `ceil(n/2)` bins of a vector, reindexed from zero.
pub fn truncate_recent_half(v: &BinVector) -> BinVector {
    let start = recent_half_start(v.n_bins) as u32;
    BinVector {
        n_bins: v.n_bins - start as usize,
        entries: v
            .entries
            .iter()
            .filter(|&&(i, _)| i >= start)
            .map(|&(i, c)| (i - start, c))
            .collect(),
    }
}

/// Sustainability label: did the user consume the item in the recent period?
pub fn pis_label(item: u32, history: &ConsumptionHistory) -> bool {
    history.consumed_recently(item)
}

/// Extrinsic label: similarity-weighted vote of the neighbors' own labels,
/// positive when the weighted sum reaches 1. Empty neighborhoods vote
/// negative.
pub fn extrinsic_label<T: Scalar>(weights: &[T], labels: &[bool]) -> Result<bool> {
    if weights.len() != labels.len() {
        return Err(Error::MismatchedLengths {
            left: weights.len(),
            right: labels.len(),
        });
    }
    let sum = weights
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y)
        .map(|(&w, _)| w)
        .fold(T::zero(), |a, b| a + b);
    Ok(sum >= T::one())
}

/// Which events of a history feed the bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinPeriod {
    /// Events strictly before the recency threshold (training features).
    Past,
    /// The whole training history (expanded inference features).
    Full,
}

/// Per-(user, item) bin vectors for every consumed pair, on one shared grid,
/// together with the recent-half truncation boundary. Pairs without any
/// event in the selected period have no entry and read as all-zero.
#[derive(Debug, Clone)]
pub struct BinStore {
    pub grid: BinGrid,
    pub trunc_start: usize,
    per_user: Vec<HashMap<u32, BinVector>>,
}

impl BinStore {
    /// Build the grid from the selected period's own timestamps, then bin.
    pub fn from_histories(
        histories: &Histories,
        period: BinPeriod,
        width: DurationSecs,
    ) -> Result<BinStore> {
        let mut times = Vec::new();
        for (_, h) in histories.iter() {
            let evs = match period {
                BinPeriod::Past => h.past(),
                BinPeriod::Full => h.events(),
            };
            times.extend(evs.iter().map(|e| e.time));
        }
        let grid = build_grid(&times, width)?;
        Ok(BinStore::with_grid(histories, period, grid, 0))
    }

    /// Bin `time + shift` on a fixed grid. A zero shift on the grid built by
    /// [`BinStore::from_histories`] reproduces it exactly.
    pub fn with_grid(
        histories: &Histories,
        period: BinPeriod,
        grid: BinGrid,
        shift: DurationSecs,
    ) -> BinStore {
        let mut per_user = Vec::with_capacity(histories.n_users());
        for (_, h) in histories.iter() {
            let evs = match period {
                BinPeriod::Past => h.past(),
                BinPeriod::Full => h.events(),
            };
            let mut dense: HashMap<u32, Vec<u32>> = HashMap::new();
            for e in evs {
                let bins = dense
                    .entry(e.item)
                    .or_insert_with(|| vec![0u32; grid.n_bins]);
                bins[grid.bin_of(e.time + shift)] += 1;
            }
            per_user.push(
                dense
                    .into_iter()
                    .map(|(item, d)| (item, BinVector::from_dense(&d)))
                    .collect(),
            );
        }
        BinStore {
            grid,
            trunc_start: recent_half_start(grid.n_bins),
            per_user,
        }
    }

    pub fn bins(&self, user: u32, item: u32) -> Option<&BinVector> {
        self.per_user[user as usize].get(&item)
    }

    /// Length of feature vectors after recent-half truncation.
    pub fn feature_len(&self) -> usize {
        self.grid.n_bins - self.trunc_start
    }
}

/// One user who consumed an item in their past period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub user: u32,
    /// Raw number of past-period consumptions of the item.
    pub past_count: u32,
    /// The neighbor's own sustainability label for the item.
    pub label: bool,
}

/// For every item, the users who consumed it in their past period, ordered
/// by descending past count (ties by ascending user index) so capping keeps
/// the heaviest consumers deterministically.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    per_item: Vec<Vec<Neighbor>>,
}

impl NeighborIndex {
    pub fn build(histories: &Histories, n_items: usize) -> NeighborIndex {
        let mut per_item: Vec<Vec<Neighbor>> = vec![Vec::new(); n_items];
        for (u, h) in histories.iter() {
            let mut counts: HashMap<u32, u32> = HashMap::new();
            for e in h.past() {
                *counts.entry(e.item).or_insert(0) += 1;
            }
            let mut items: Vec<_> = counts.into_iter().collect();
            items.sort_unstable_by_key(|&(item, _)| item);
            for (item, past_count) in items {
                per_item[item as usize].push(Neighbor {
                    user: u,
                    past_count,
                    label: h.consumed_recently(item),
                });
            }
        }
        for list in &mut per_item {
            list.sort_by(|a, b| b.past_count.cmp(&a.past_count).then(a.user.cmp(&b.user)));
        }
        NeighborIndex { per_item }
    }

    /// Up to `cap` heaviest past consumers of `item`, excluding `user`.
    pub fn neighbors(&self, user: u32, item: u32, cap: usize) -> impl Iterator<Item = &Neighbor> {
        self.per_item[item as usize]
            .iter()
            .filter(move |n| n.user != user)
            .take(cap)
    }
}
