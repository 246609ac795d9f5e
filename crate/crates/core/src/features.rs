//! Feature assembly shared by the trainer and the scorer.
//!
//! The static side ([`FeatureSpace`]) is built once per run: bin stores for
//! the past and full training periods, the per-item neighbor index, and the
//! candidate (user, item) pair list. The dynamic side depends on the current
//! embeddings: the trainer snapshots it once per epoch as [`PairExample`]s
//! (similarity weights are re-derived between epochs but held constant within
//! one), while [`PerisScorer`] computes it on the fly over the expanded bins.

use crate::binning::{extrinsic_label, pis_label, BinPeriod, BinStore, NeighborIndex};
use crate::config::ScorePlan;
use crate::corpus::{DurationSecs, Histories};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm2};
use crate::model::{pis_score, recommendation_score, PerisModel, Scorer};
use crate::scalar::Scalar;

/// Embedding-independent training structures.
#[derive(Debug, Clone)]
pub struct FeatureSpace {
    /// Bins of past-period events, on the past-period grid. Training input.
    pub past: BinStore,
    /// Bins of all training events, on the full-span grid. Inference input.
    pub full: BinStore,
    pub neighbors: NeighborIndex,
    /// Every (user, distinct consumed item) pair, users ascending, items
    /// ascending within a user. Training candidates.
    pub pairs: Vec<(u32, u32)>,
}

impl FeatureSpace {
    pub fn build(histories: &Histories, n_items: usize, width: DurationSecs) -> Result<FeatureSpace> {
        let past = BinStore::from_histories(histories, BinPeriod::Past, width).map_err(|_| {
            Error::Config(
                "no events before the recency threshold; lower t_offset_secs".to_string(),
            )
        })?;
        let full = BinStore::from_histories(histories, BinPeriod::Full, width)?;
        let neighbors = NeighborIndex::build(histories, n_items);
        let mut pairs = Vec::new();
        for (u, h) in histories.iter() {
            for &i in h.distinct_items() {
                pairs.push((u, i));
            }
        }
        Ok(FeatureSpace {
            past,
            full,
            neighbors,
            pairs,
        })
    }
}

/// Per-row norms of an embedding matrix, cached so similarity computations
/// touch each row's norm once.
fn row_norms<T: Scalar>(emb: &[T], k: usize) -> Vec<T> {
    emb.chunks(k).map(norm2).collect()
}

/// Similarity from precomputed norms; same contract as [`crate::model::similarity`].
fn similarity_cached<T: Scalar>(a: &[T], b: &[T], na: T, nb: T, tau: T) -> Result<T> {
    if na == T::zero() || nb == T::zero() {
        return Err(Error::ZeroVector);
    }
    let cos = dot(a, b) / (na * nb);
    Ok((cos + T::one()) * T::from_f64_lossy(0.5) + tau)
}

/// One training candidate with its labels and supplemented bin features,
/// frozen for an epoch. Features of disabled heads stay empty.
#[derive(Debug, Clone)]
pub struct PairExample<T> {
    pub user: u32,
    pub item: u32,
    /// Did this user consume the item recently?
    pub label: bool,
    /// Neighbor-vote label for the extrinsic head.
    pub label_ext: bool,
    pub feat_int: Vec<T>,
    pub feat_ext: Vec<T>,
}

/// Snapshot the similarity-weighted training features under the current
/// embeddings. Weights are treated as constants by the optimizer until the
/// next snapshot.
pub fn build_epoch_examples<T: Scalar>(
    model: &PerisModel<T>,
    space: &FeatureSpace,
    histories: &Histories,
    plan: &ScorePlan,
) -> Result<Vec<PairExample<T>>> {
    let tau = T::from_f64_lossy(plan.tau);
    let user_norms = row_norms(&model.user_emb, model.k);
    let item_norms = row_norms(&model.item_emb, model.k);
    let store = &space.past;
    let len = store.feature_len();
    let mut out = Vec::with_capacity(space.pairs.len());
    for &(u, i) in &space.pairs {
        let h = histories.user(u);
        let label = pis_label(i, h);

        let mut feat_int = Vec::new();
        if plan.intrinsic {
            feat_int = vec![T::zero(); len];
            if let Some(own) = store.bins(u, i) {
                own.accumulate_into(&mut feat_int, store.trunc_start, T::one());
            }
            if plan.supplement {
                for &j in h.past_items() {
                    if j == i {
                        continue;
                    }
                    let alpha = similarity_cached(
                        model.item(i),
                        model.item(j),
                        item_norms[i as usize],
                        item_norms[j as usize],
                        tau,
                    )?;
                    let bins = store.bins(u, j).expect("past item has past bins");
                    bins.accumulate_into(&mut feat_int, store.trunc_start, alpha);
                }
            }
        }

        let mut feat_ext = Vec::new();
        let mut label_ext = false;
        if plan.extrinsic {
            feat_ext = vec![T::zero(); len];
            let mut betas = Vec::new();
            let mut votes = Vec::new();
            for n in space.neighbors.neighbors(u, i, plan.j_neighbors) {
                let beta = similarity_cached(
                    model.user(u),
                    model.user(n.user),
                    user_norms[u as usize],
                    user_norms[n.user as usize],
                    tau,
                )?;
                let bins = store.bins(n.user, i).expect("neighbor consumed item in past");
                bins.accumulate_into(&mut feat_ext, store.trunc_start, beta);
                betas.push(beta);
                votes.push(n.label);
            }
            label_ext = extrinsic_label(&betas, &votes)?;
        }

        out.push(PairExample {
            user: u,
            item: i,
            label,
            label_ext,
            feat_int,
            feat_ext,
        });
    }
    Ok(out)
}

/// Bin store, neighbor index and histories backing the sustainability heads.
#[derive(Clone, Copy)]
struct SustainabilityCtx<'a> {
    store: &'a BinStore,
    neighbors: &'a NeighborIndex,
    histories: &'a Histories,
}

/// Inference-time scorer: blends the sustainability heads (over a bin store,
/// normally the expanded full-period one) with the preference head, honoring
/// the same [`ScorePlan`] the trainer used. A preference-only plan needs no
/// bin context at all.
pub struct PerisScorer<'a, T: Scalar> {
    model: &'a PerisModel<T>,
    ctx: Option<SustainabilityCtx<'a>>,
    plan: ScorePlan,
    user_norms: Vec<T>,
    item_norms: Vec<T>,
}

impl<'a, T: Scalar> PerisScorer<'a, T> {
    pub fn new(
        model: &'a PerisModel<T>,
        store: &'a BinStore,
        neighbors: &'a NeighborIndex,
        histories: &'a Histories,
        plan: ScorePlan,
    ) -> Self {
        PerisScorer {
            model,
            ctx: Some(SustainabilityCtx {
                store,
                neighbors,
                histories,
            }),
            plan,
            user_norms: row_norms(&model.user_emb, model.k),
            item_norms: row_norms(&model.item_emb, model.k),
        }
    }

    /// Scorer for a plan with both sustainability heads disabled.
    pub fn preference_only(model: &'a PerisModel<T>, plan: ScorePlan) -> Self {
        debug_assert!(!plan.intrinsic && !plan.extrinsic);
        PerisScorer {
            model,
            ctx: None,
            plan,
            user_norms: Vec::new(),
            item_norms: Vec::new(),
        }
    }

    fn tau(&self) -> T {
        T::from_f64_lossy(self.plan.tau)
    }

    fn ctx(&self) -> Result<SustainabilityCtx<'a>> {
        self.ctx.ok_or_else(|| {
            Error::Config("scorer was built without bin context for sustainability heads".into())
        })
    }

    /// Sustainability score from the user's own (supplemented) history.
    pub fn predict_intrinsic(&self, u: u32, i: u32) -> Result<T> {
        let SustainabilityCtx {
            store, histories, ..
        } = self.ctx()?;
        let mut feat = vec![T::zero(); store.feature_len()];
        if let Some(own) = store.bins(u, i) {
            own.accumulate_into(&mut feat, store.trunc_start, T::one());
        }
        let extra;
        if self.plan.supplement {
            let h = histories.user(u);
            for &j in h.past_items() {
                if j == i {
                    continue;
                }
                let alpha = similarity_cached(
                    self.model.item(i),
                    self.model.item(j),
                    self.item_norms[i as usize],
                    self.item_norms[j as usize],
                    self.tau(),
                )?;
                if let Some(bins) = store.bins(u, j) {
                    bins.accumulate_into(&mut feat, store.trunc_start, alpha);
                }
            }
            extra = Some(self.model.joint(u, i));
        } else {
            extra = None;
        }
        let hidden = self.model.encode(&feat, extra.as_deref());
        Ok(pis_score(&hidden, &self.model.proto_pis))
    }

    /// Sustainability score from like-minded users' histories of the item.
    pub fn predict_extrinsic(&self, u: u32, i: u32) -> Result<T> {
        let SustainabilityCtx {
            store, neighbors, ..
        } = self.ctx()?;
        let mut feat = vec![T::zero(); store.feature_len()];
        for n in neighbors.neighbors(u, i, self.plan.j_neighbors) {
            let beta = similarity_cached(
                self.model.user(u),
                self.model.user(n.user),
                self.user_norms[u as usize],
                self.user_norms[n.user as usize],
                self.tau(),
            )?;
            if let Some(bins) = store.bins(n.user, i) {
                bins.accumulate_into(&mut feat, store.trunc_start, beta);
            }
        }
        let hidden = self.model.encode(&feat, None);
        Ok(pis_score(&hidden, &self.model.proto_pis))
    }

    pub fn predict_preference(&self, u: u32, i: u32) -> T {
        self.model.predict_preference(u, i)
    }
}

impl<T: Scalar> Scorer<T> for PerisScorer<'_, T> {
    /// Disabled heads contribute exactly zero and are never evaluated.
    fn score(&self, u: u32, i: u32) -> Result<T> {
        let y_int = if self.plan.intrinsic {
            self.predict_intrinsic(u, i)?
        } else {
            T::zero()
        };
        let y_ext = if self.plan.extrinsic {
            self.predict_extrinsic(u, i)?
        } else {
            T::zero()
        };
        let y_pref = self.predict_preference(u, i);
        Ok(recommendation_score(
            y_int,
            y_ext,
            y_pref,
            T::from_f64_lossy(self.plan.lambda),
            T::from_f64_lossy(self.plan.mu),
        ))
    }
}
