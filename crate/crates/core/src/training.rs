//! The training loop: loss terms, per-pair gradients, minibatch Adam with
//! warm-up, validation-driven early stopping, and divergence detection.
//!
//! Determinism contract: every random stream is derived from the run seed
//! (model init, per-epoch shuffles, per-pair negative samples, validation
//! candidates), pair gradients are reduced in batch order, and no loss or
//! gradient value ever depends on thread count or map iteration order. Two
//! runs with the same inputs and config produce bitwise-identical models.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adam::Adam;
use crate::config::{ScorePlan, TrainConfig};
use crate::corpus::{build_histories, Histories, PreparedCorpus};
use crate::error::{Error, Result};
use crate::evaluation::{ranking_metrics, rank_pairs, EvalPair, ExclusionIndex};
use crate::features::{build_epoch_examples, FeatureSpace, PairExample, PerisScorer};
use crate::linalg::euclidean;
use crate::model::{ModelGrads, PerisModel, PARAM_GROUPS};
use crate::scalar::Scalar;
use crate::seeding::derive;

/// Candidates ranked against each validation positive.
pub const EVAL_NEGATIVES: usize = 100;

/// Squared-error sustainability term; negative labels are scaled by `gamma`
/// to balance their dominance.
pub fn pis_term<T: Scalar>(pred: T, label: bool, gamma: T) -> T {
    let target = if label { T::one() } else { T::zero() };
    let scale = if label { T::one() } else { gamma };
    let diff = target - pred;
    scale * diff * diff
}

/// Preference hinge: positive pairs must sit closer to the prototype than
/// negatives by at least `margin`.
pub fn hinge_term<T: Scalar>(d_pos: T, d_neg: T, margin: T) -> T {
    (d_pos - d_neg + margin).max(T::zero())
}

/// Draw `count` distinct items the user never consumed in training.
pub fn sample_negatives(
    rng: &mut impl Rng,
    user: u32,
    n_items: usize,
    consumed: &[u32],
    count: usize,
) -> Result<Vec<u32>> {
    if n_items - consumed.len() < count {
        return Err(Error::NoNegatives { user });
    }
    let mut out: Vec<u32> = Vec::with_capacity(count);
    while out.len() < count {
        let cand = rng.random_range(0..n_items as u32);
        if consumed.binary_search(&cand).is_err() && !out.contains(&cand) {
            out.push(cand);
        }
    }
    Ok(out)
}

/// Multipliers applied to the raw loss terms when accumulating gradients.
/// They carry the task weights and the `1/batch` scale; a zero weight means
/// the corresponding backward pass is skipped entirely.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights<T> {
    pub w_int: T,
    pub w_ext: T,
    pub w_pref: T,
}

impl<T: Scalar> LossWeights<T> {
    /// Warm-up trains the preference loss alone, at full coefficient;
    /// afterwards the three terms are blended with the plan's weights.
    pub fn for_batch(plan: &ScorePlan, warm: bool, batch_len: usize) -> LossWeights<T> {
        let inv_b = T::one() / T::from_f64_lossy(batch_len as f64);
        if warm {
            return LossWeights {
                w_int: T::zero(),
                w_ext: T::zero(),
                w_pref: inv_b,
            };
        }
        let lambda = T::from_f64_lossy(plan.lambda);
        let mu = T::from_f64_lossy(plan.mu);
        LossWeights {
            w_int: lambda * mu * inv_b,
            w_ext: lambda * (T::one() - mu) * inv_b,
            w_pref: (T::one() - lambda) * inv_b,
        }
    }
}

/// Sparse gradients touched by one pair.
struct PairGrads<T> {
    lstm: Option<crate::lstm::LstmGrads<T>>,
    input_proj: Option<Vec<T>>,
    proto_pis: Option<Vec<T>>,
    proto_pref: Option<Vec<T>>,
    /// `(is_user, row index, gradient)`.
    rows: Vec<(bool, u32, Vec<T>)>,
}

impl<T: Scalar> PairGrads<T> {
    fn new() -> Self {
        PairGrads {
            lstm: None,
            input_proj: None,
            proto_pis: None,
            proto_pref: None,
            rows: Vec::new(),
        }
    }

    fn row(&mut self, is_user: bool, idx: u32, k: usize) -> &mut Vec<T> {
        if let Some(pos) = self
            .rows
            .iter()
            .position(|&(u, i, _)| u == is_user && i == idx)
        {
            return &mut self.rows[pos].2;
        }
        self.rows.push((is_user, idx, vec![T::zero(); k]));
        &mut self.rows.last_mut().unwrap().2
    }
}

/// Raw (unweighted) loss terms of one pair, plus its gradient contribution.
pub struct PairOutcome<T> {
    pub term_int: T,
    pub term_ext: T,
    pub term_pref: T,
    /// Smallest distance to a non-differentiable point encountered: hinge
    /// slacks and the distances used as divisors. Gradient checks must keep
    /// their probes well inside this radius.
    pub kink_distance: T,
    grads: Option<PairGrads<T>>,
}

/// Forward (and optionally backward) pass for one pair under fixed features.
/// The joint embedding feeding the encoder is read live from the model, so
/// embedding gradients flow through it even though the bin features are
/// frozen for the epoch.
pub fn pair_outcome<T: Scalar>(
    model: &PerisModel<T>,
    ex: &PairExample<T>,
    negatives: &[u32],
    supplement: bool,
    weights: &LossWeights<T>,
    gamma: T,
    margin: T,
    want_grads: bool,
) -> PairOutcome<T> {
    let k = model.k;
    let mut out = PairOutcome {
        term_int: T::zero(),
        term_ext: T::zero(),
        term_pref: T::zero(),
        kink_distance: T::infinity(),
        grads: want_grads.then(PairGrads::new),
    };

    if !ex.feat_int.is_empty() {
        let extra = if supplement {
            Some(model.joint(ex.user, ex.item))
        } else {
            None
        };
        out.term_int = pis_head(
            model,
            &ex.feat_int,
            extra.as_deref(),
            ex.label,
            gamma,
            weights.w_int,
            ex,
            true,
            &mut out,
        );
    }
    if !ex.feat_ext.is_empty() {
        out.term_ext = pis_head(
            model,
            &ex.feat_ext,
            None,
            ex.label_ext,
            gamma,
            weights.w_ext,
            ex,
            false,
            &mut out,
        );
    }

    // Preference hinge over the sampled negatives; the positive pair's
    // distance is shared across them.
    let e_pos = model.joint(ex.user, ex.item);
    let d_pos = euclidean(&model.proto_pref, &e_pos);
    for &neg in negatives {
        let e_neg = model.joint(ex.user, neg);
        let d_neg = euclidean(&model.proto_pref, &e_neg);
        let slack = d_pos - d_neg + margin;
        out.term_pref = out.term_pref + slack.max(T::zero());
        out.kink_distance = out.kink_distance.min(slack.abs());
        if slack <= T::zero() || weights.w_pref == T::zero() {
            continue;
        }
        out.kink_distance = out.kink_distance.min(d_pos).min(d_neg);
        if let Some(g) = out.grads.as_mut() {
            if d_pos == T::zero() || d_neg == T::zero() {
                continue; // subgradient 0 at the cusp
            }
            let w = weights.w_pref;
            let proto = g
                .proto_pref
                .get_or_insert_with(|| vec![T::zero(); k]);
            for j in 0..k {
                let dir_pos = (model.proto_pref[j] - e_pos[j]) / d_pos;
                let dir_neg = (model.proto_pref[j] - e_neg[j]) / d_neg;
                proto[j] = proto[j] + w * (dir_pos - dir_neg);
            }
            let mut d_e_pos = vec![T::zero(); k];
            let mut d_e_neg = vec![T::zero(); k];
            for j in 0..k {
                d_e_pos[j] = -w * (model.proto_pref[j] - e_pos[j]) / d_pos;
                d_e_neg[j] = w * (model.proto_pref[j] - e_neg[j]) / d_neg;
            }
            {
                let u_row = g.row(true, ex.user, k);
                for j in 0..k {
                    u_row[j] = u_row[j] + d_e_pos[j] + d_e_neg[j];
                }
            }
            {
                let v_pos = g.row(false, ex.item, k);
                for j in 0..k {
                    v_pos[j] = v_pos[j] + d_e_pos[j];
                }
            }
            let v_neg = g.row(false, neg, k);
            for j in 0..k {
                v_neg[j] = v_neg[j] + d_e_neg[j];
            }
        }
    }
    out
}

/// One sustainability head: encode the features, score against the
/// prototype, and backpropagate `weight * d(term)`.
#[allow(clippy::too_many_arguments)]
fn pis_head<T: Scalar>(
    model: &PerisModel<T>,
    feat: &[T],
    extra: Option<&[T]>,
    label: bool,
    gamma: T,
    weight: T,
    ex: &PairExample<T>,
    tie_rows_to_extra: bool,
    out: &mut PairOutcome<T>,
) -> T {
    let k = model.k;
    let want = out.grads.is_some() && weight != T::zero();
    if !want {
        let h = model.encode(feat, extra);
        let d = euclidean(&model.proto_pis, &h);
        out.kink_distance = out.kink_distance.min(d);
        return pis_term(T::one() - d, label, gamma);
    }

    let (h, trace) = model.encode_traced(feat, extra);
    let d = euclidean(&model.proto_pis, &h);
    out.kink_distance = out.kink_distance.min(d);
    let pred = T::one() - d;
    let term = pis_term(pred, label, gamma);
    if d == T::zero() {
        return term; // subgradient 0 at the cusp
    }

    let target = if label { T::one() } else { T::zero() };
    let scale = if label { T::one() } else { gamma };
    // d(term)/d(distance) = 2 * scale * (target - pred).
    let two = T::from_f64_lossy(2.0);
    let g_d = weight * two * scale * (target - pred);

    let g = out.grads.as_mut().unwrap();
    let proto = g.proto_pis.get_or_insert_with(|| vec![T::zero(); k]);
    let mut d_h = vec![T::zero(); k];
    for j in 0..k {
        let dir = (model.proto_pis[j] - h[j]) / d;
        proto[j] = proto[j] + g_d * dir;
        d_h[j] = -g_d * dir;
    }
    let (lstm_grads, d_xs) = model.lstm.backward(&trace, &d_h);
    match g.lstm.as_mut() {
        Some(acc) => acc.add(&lstm_grads),
        None => g.lstm = Some(lstm_grads),
    }
    let proj = g.input_proj.get_or_insert_with(|| vec![T::zero(); k]);
    for (t, &count) in feat.iter().enumerate() {
        for j in 0..k {
            proj[j] = proj[j] + count * d_xs[t * k + j];
        }
    }
    if extra.is_some() && tie_rows_to_extra {
        // x_t includes e = u + v, so both rows collect the summed d_x.
        let mut d_extra = vec![T::zero(); k];
        for t in 0..feat.len() {
            for j in 0..k {
                d_extra[j] = d_extra[j] + d_xs[t * k + j];
            }
        }
        let u_row = g.row(true, ex.user, k);
        for j in 0..k {
            u_row[j] = u_row[j] + d_extra[j];
        }
        let v_row = g.row(false, ex.item, k);
        for j in 0..k {
            v_row[j] = v_row[j] + d_extra[j];
        }
    }
    term
}

/// Summed raw terms of a batch, before weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStats<T> {
    pub sum_int: T,
    pub sum_ext: T,
    pub sum_pref: T,
    pub min_kink_distance: T,
}

/// Evaluate a batch: raw term sums plus (optionally) the weighted gradient.
/// Pairs are processed in parallel and reduced in batch order, so the result
/// is independent of thread count.
pub fn batch_outcomes<T: Scalar>(
    model: &PerisModel<T>,
    examples: &[&PairExample<T>],
    negatives: &[Vec<u32>],
    supplement: bool,
    weights: &LossWeights<T>,
    gamma: T,
    margin: T,
    want_grads: bool,
) -> (BatchStats<T>, Option<ModelGrads<T>>) {
    debug_assert_eq!(examples.len(), negatives.len());
    let outcomes: Vec<PairOutcome<T>> = examples
        .par_iter()
        .zip(negatives.par_iter())
        .map(|(ex, negs)| {
            pair_outcome(model, ex, negs, supplement, weights, gamma, margin, want_grads)
        })
        .collect();

    let mut stats = BatchStats {
        sum_int: T::zero(),
        sum_ext: T::zero(),
        sum_pref: T::zero(),
        min_kink_distance: T::infinity(),
    };
    let mut grads = want_grads.then(|| ModelGrads::zeros(model));
    for o in outcomes {
        stats.sum_int = stats.sum_int + o.term_int;
        stats.sum_ext = stats.sum_ext + o.term_ext;
        stats.sum_pref = stats.sum_pref + o.term_pref;
        stats.min_kink_distance = stats.min_kink_distance.min(o.kink_distance);
        if let (Some(total), Some(pg)) = (grads.as_mut(), o.grads) {
            if let Some(l) = pg.lstm {
                total.lstm.add(&l);
            }
            if let Some(p) = pg.input_proj {
                for (d, s) in total.input_proj.iter_mut().zip(&p) {
                    *d = *d + *s;
                }
            }
            if let Some(p) = pg.proto_pis {
                for (d, s) in total.proto_pis.iter_mut().zip(&p) {
                    *d = *d + *s;
                }
            }
            if let Some(p) = pg.proto_pref {
                for (d, s) in total.proto_pref.iter_mut().zip(&p) {
                    *d = *d + *s;
                }
            }
            for (is_user, idx, v) in pg.rows {
                let row = if is_user {
                    total.user_row_mut(idx)
                } else {
                    total.item_row_mut(idx)
                };
                for (d, s) in row.iter_mut().zip(&v) {
                    *d = *d + *s;
                }
            }
        }
    }
    (stats, grads)
}

/// The weighted scalar loss a batch optimizes; what the gradient checker
/// differentiates.
pub fn weighted_batch_loss<T: Scalar>(stats: &BatchStats<T>, weights: &LossWeights<T>) -> T {
    weights.w_int * stats.sum_int + weights.w_ext * stats.sum_ext + weights.w_pref * stats.sum_pref
}

/// One epoch's reported state. Losses are raw term sums normalized by the
/// user count; the blended loss composes them with the effective weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub epoch: usize,
    pub warm_up: bool,
    pub l_intrinsic: f64,
    pub l_extrinsic: f64,
    pub l_pref: f64,
    pub l_final: f64,
    pub valid_hr10: f64,
    pub valid_ndcg10: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters of the best validation epoch, not the last one.
    pub model: PerisModel<T>,
    pub history: Vec<LossBreakdown>,
    /// 1-based epoch the returned model comes from.
    pub best_epoch: usize,
}

/// Seed stream for model initialization; exposed so tests can reproduce the
/// exact initial parameters of [`train`].
pub fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, "model-init", &[]))
}

pub fn assert_params_finite<T: Scalar>(model: &PerisModel<T>, epoch: usize) -> Result<()> {
    for g in PARAM_GROUPS {
        if model.group(g).iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                epoch,
                detail: format!("non-finite values in {}", g.tensor_name()),
            });
        }
    }
    Ok(())
}

pub fn train<T: Scalar>(corpus: &PreparedCorpus, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if corpus.valid.is_empty() {
        return Err(Error::Eval(
            "validation split is empty; cannot drive early stopping".to_string(),
        ));
    }
    let plan = cfg.plan();
    let pis_active = plan.intrinsic || plan.extrinsic;
    let n_users = corpus.vocab.n_users();
    let n_items = corpus.vocab.n_items();

    // The recency threshold only exists for the sustainability task; a
    // preference-only run must not be able to fail on it.
    let max_train_time = corpus.train.iter().map(|r| r.time).max().unwrap_or(0);
    let t_threshold = if pis_active {
        corpus.train_end_time - cfg.hyper.t_offset_secs
    } else {
        max_train_time
    };
    let histories = build_histories(&corpus.train, n_users, t_threshold)?;
    let space = if pis_active {
        Some(FeatureSpace::build(
            &histories,
            n_items,
            cfg.hyper.bin_width_secs,
        )?)
    } else {
        None
    };
    let pairs: Vec<(u32, u32)> = match &space {
        Some(s) => s.pairs.clone(),
        None => histories
            .iter()
            .flat_map(|(u, h)| h.distinct_items().iter().map(move |&i| (u, i)))
            .collect(),
    };
    if pairs.is_empty() {
        return Err(Error::EmptyTrainingSplit);
    }

    let valid_pairs = EvalPair::from_interactions(&corpus.valid);
    let exclusions = ExclusionIndex::from_splits(
        &[&corpus.train, &corpus.valid, &corpus.test],
        n_users,
    );
    let valid_seed = derive(cfg.seed, "valid-eval", &[]);

    let mut model: PerisModel<T> = PerisModel::init(n_users, n_items, cfg.hyper.k, &mut init_rng(cfg.seed));
    let mut adam: Adam<T> = Adam::new(
        cfg.hyper.lr,
        &PARAM_GROUPS.map(|g| model.group(g).len()),
    );
    let gamma = T::from_f64_lossy(cfg.hyper.gamma);
    let margin = T::from_f64_lossy(cfg.hyper.margin);

    // Plain-bin examples for preference-only runs carry no features and
    // never change between epochs.
    let static_examples: Option<Vec<PairExample<T>>> = if pis_active {
        None
    } else {
        Some(
            pairs
                .iter()
                .map(|&(u, i)| PairExample {
                    user: u,
                    item: i,
                    label: false,
                    label_ext: false,
                    feat_int: Vec::new(),
                    feat_ext: Vec::new(),
                })
                .collect(),
        )
    };

    let mut history: Vec<LossBreakdown> = Vec::new();
    let mut best_ndcg = f64::NEG_INFINITY;
    let mut best_model = model.clone();
    let mut best_epoch = 0usize;
    let mut epochs_since_best = 0usize;

    for epoch in 1..=cfg.epochs {
        let warm = epoch <= cfg.hyper.warmup_epochs;
        let examples: Vec<PairExample<T>> = match (&space, &static_examples) {
            (Some(s), _) => build_epoch_examples(&model, s, &histories, &plan)?,
            (None, Some(st)) => st.clone(),
            _ => unreachable!(),
        };

        let mut order: Vec<usize> = (0..pairs.len()).collect();
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(derive(cfg.seed, "epoch-shuffle", &[epoch as u64]));
        order.shuffle(&mut shuffle_rng);

        let mut sum_int = T::zero();
        let mut sum_ext = T::zero();
        let mut sum_pref = T::zero();
        for chunk in order.chunks(cfg.hyper.batch_size) {
            let weights = LossWeights::for_batch(&plan, warm, chunk.len());
            let batch: Vec<&PairExample<T>> = chunk.iter().map(|&i| &examples[i]).collect();
            let negatives: Vec<Vec<u32>> = chunk
                .iter()
                .map(|&i| {
                    let (u, _) = pairs[i];
                    let mut rng = ChaCha8Rng::seed_from_u64(derive(
                        cfg.seed,
                        "train-neg",
                        &[epoch as u64, i as u64],
                    ));
                    sample_negatives(
                        &mut rng,
                        u,
                        n_items,
                        histories.user(u).distinct_items(),
                        cfg.hyper.neg_per_pos,
                    )
                })
                .collect::<Result<_>>()?;

            let (stats, grads) = batch_outcomes(
                &model,
                &batch,
                &negatives,
                plan.supplement,
                &weights,
                gamma,
                margin,
                true,
            );
            sum_int = sum_int + stats.sum_int;
            sum_ext = sum_ext + stats.sum_ext;
            sum_pref = sum_pref + stats.sum_pref;

            let grads = grads.expect("gradients requested");
            adam.begin_step();
            for (gi, g) in PARAM_GROUPS.into_iter().enumerate() {
                adam.update_group(gi, model.group_mut(g), grads.group(g))?;
            }
            model.project_embeddings();
        }
        assert_params_finite(&model, epoch)?;

        let by_users = 1.0 / n_users as f64;
        let l_intrinsic = sum_int.to_f64_lossy() * by_users;
        let l_extrinsic = sum_ext.to_f64_lossy() * by_users;
        let l_pref = sum_pref.to_f64_lossy() * by_users;
        let l_final = plan.lambda * (plan.mu * l_intrinsic + (1.0 - plan.mu) * l_extrinsic)
            + (1.0 - plan.lambda) * l_pref;
        if !l_final.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("loss {l_final}"),
            });
        }

        let scorer = match &space {
            Some(s) => PerisScorer::new(&model, &s.full, &s.neighbors, &histories, plan),
            None => PerisScorer::preference_only(&model, plan),
        };
        let ranked = rank_pairs(
            &scorer,
            &valid_pairs,
            &exclusions,
            n_items,
            EVAL_NEGATIVES,
            valid_seed,
        )?;
        let metrics = ranking_metrics(&ranked, &[10])?;
        let (valid_hr10, valid_ndcg10) = (metrics[0].hr, metrics[0].ndcg);

        history.push(LossBreakdown {
            epoch,
            warm_up: warm,
            l_intrinsic,
            l_extrinsic,
            l_pref,
            l_final,
            valid_hr10,
            valid_ndcg10,
        });
        log::info!(
            "epoch {epoch}{}: l_int {l_intrinsic:.5} l_ext {l_extrinsic:.5} l_pref {l_pref:.5} \
             l_final {l_final:.5} valid hr@10 {valid_hr10:.4} ndcg@10 {valid_ndcg10:.4}",
            if warm { " (warm-up)" } else { "" }
        );

        if valid_ndcg10 > best_ndcg {
            best_ndcg = valid_ndcg10;
            best_model = model.clone();
            best_epoch = epoch;
            epochs_since_best = 0;
        } else if epoch > cfg.hyper.warmup_epochs {
            // The patience window opens once warm-up ends; scheduled warm-up
            // epochs can never stop a run.
            epochs_since_best += 1;
            if epochs_since_best >= cfg.patience {
                log::info!("early stop at epoch {epoch}; best epoch {best_epoch}");
                break;
            }
        }
    }

    Ok(TrainOutcome {
        model: best_model,
        history,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{chronological_split, Interaction, SECS_PER_DAY};
    use crate::config::HyperParams;

    #[test]
    fn pis_term_scales_negatives_by_gamma() {
        assert_eq!(pis_term(0.25, true, 0.1), 0.5625);
        assert_eq!(pis_term(0.25, false, 0.1), 0.1 * 0.0625);
        assert_eq!(pis_term(1.0, true, 0.1), 0.0);
        assert_eq!(pis_term(0.0, false, 1.0), 0.0);
    }

    #[test]
    fn hinge_clamps_at_zero() {
        assert_eq!(hinge_term(1.0, 2.0, 0.5), 0.0);
        assert_eq!(hinge_term(2.0, 1.0, 0.5), 1.5);
        assert_eq!(hinge_term(1.0, 1.0, 0.5), 0.5);
    }

    #[test]
    fn negative_sampling_avoids_consumed_items_deterministically() {
        let consumed = vec![1, 3];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = sample_negatives(&mut rng, 0, 10, &consumed, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = sample_negatives(&mut rng, 0, 10, &consumed, 5).unwrap();
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 5);
        assert!(a.iter().all(|i| *i != 1 && *i != 3));
        assert!(matches!(
            sample_negatives(&mut rng, 7, 4, &consumed, 3),
            Err(Error::NoNegatives { user: 7 })
        ));
    }

    #[test]
    fn warm_up_weights_silence_sustainability() {
        let plan = TrainConfig::default().plan();
        let w: LossWeights<f64> = LossWeights::for_batch(&plan, true, 4);
        assert_eq!(w, LossWeights { w_int: 0.0, w_ext: 0.0, w_pref: 0.25 });
        let w: LossWeights<f64> = LossWeights::for_batch(&plan, false, 4);
        assert_eq!(w.w_int, 0.5 * 0.3 * 0.25);
        assert_eq!(w.w_ext, 0.5 * 0.7 * 0.25);
        assert_eq!(w.w_pref, 0.5 * 0.25);
    }

    #[test]
    fn pure_sustainability_plan_stops_preference_after_warm_up() {
        let cfg = TrainConfig {
            hyper: HyperParams {
                lambda: 1.0,
                ..HyperParams::default()
            },
            ..TrainConfig::default()
        };
        let w: LossWeights<f64> = LossWeights::for_batch(&cfg.plan(), false, 1);
        assert_eq!(w.w_pref, 0.0);
        assert!(w.w_int > 0.0);
    }

    /// Dense synthetic corpus: 8 users cycling over 12 items for 100 days,
    /// 2-day cadence, user-dependent phase. Split windows leave everything
    /// before day 80 in training. A ninth user pads the catalog with 140
    /// train-only items so every evaluated user has 100+ eligible negatives.
    fn tiny_corpus() -> PreparedCorpus {
        let mut data = Vec::new();
        for u in 0..8u32 {
            for step in 0..40u32 {
                let day = 1 + step * 2 + (u % 3);
                let item = (u + step) % 12;
                data.push(Interaction {
                    user: format!("u{u}"),
                    item: format!("i{item}"),
                    time: day as i64 * SECS_PER_DAY,
                });
            }
        }
        for pad in 0..140u32 {
            data.push(Interaction {
                user: "pad".to_string(),
                item: format!("p{pad}"),
                time: (1 + pad as i64 % 60) * SECS_PER_DAY,
            });
        }
        let split = chronological_split(data, 10 * SECS_PER_DAY, 10 * SECS_PER_DAY).unwrap();
        PreparedCorpus::from_split(&split).unwrap()
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            hyper: HyperParams {
                k: 6,
                bin_width_secs: 10 * SECS_PER_DAY,
                t_offset_secs: 20 * SECS_PER_DAY,
                warmup_epochs: 2,
                batch_size: 16,
                ..HyperParams::default()
            },
            epochs: 4,
            patience: 10,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_runs_and_reports_finite_losses() {
        let corpus = tiny_corpus();
        let out: TrainOutcome<f64> = train(&corpus, &tiny_config()).unwrap();
        assert_eq!(out.history.len(), 4);
        for row in &out.history {
            assert!(row.l_intrinsic.is_finite() && row.l_intrinsic >= 0.0);
            assert!(row.l_pref >= 0.0);
            assert!(row.l_final.is_finite());
            let recomposed = 0.5 * (0.3 * row.l_intrinsic + 0.7 * row.l_extrinsic)
                + 0.5 * row.l_pref;
            assert!((row.l_final - recomposed).abs() < 1e-12);
        }
        assert!(out.history[0].warm_up && out.history[1].warm_up);
        assert!(!out.history[2].warm_up);
        assert!(out.best_epoch >= 1 && out.best_epoch <= 4);
    }

    #[test]
    fn identical_seeds_give_bitwise_identical_models() {
        let corpus = tiny_corpus();
        let cfg = tiny_config();
        let a: TrainOutcome<f64> = train(&corpus, &cfg).unwrap();
        let b: TrainOutcome<f64> = train(&corpus, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
        let mut other = cfg;
        other.seed = 6;
        let c: TrainOutcome<f64> = train(&corpus, &other).unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn warm_up_leaves_sustainability_parameters_at_init() {
        let corpus = tiny_corpus();
        let mut cfg = tiny_config();
        cfg.epochs = 3;
        cfg.hyper.warmup_epochs = 3;
        let out: TrainOutcome<f64> = train(&corpus, &cfg).unwrap();
        let init: PerisModel<f64> = PerisModel::init(
            corpus.vocab.n_users(),
            corpus.vocab.n_items(),
            cfg.hyper.k,
            &mut init_rng(cfg.seed),
        );
        assert_eq!(out.model.lstm.w_ih, init.lstm.w_ih);
        assert_eq!(out.model.lstm.w_hh, init.lstm.w_hh);
        assert_eq!(out.model.lstm.bias, init.lstm.bias);
        assert_eq!(out.model.input_proj, init.input_proj);
        assert_eq!(out.model.proto_pis, init.proto_pis);
        assert_ne!(out.model.proto_pref, init.proto_pref);
        assert_ne!(out.model.user_emb, init.user_emb);
    }

    #[test]
    fn preference_only_modes_coincide_bitwise() {
        let corpus = tiny_corpus();
        let mut no_pis = tiny_config();
        no_pis.use_pis = false;
        let mut lambda_zero = tiny_config();
        lambda_zero.hyper.lambda = 0.0;
        let a: TrainOutcome<f64> = train(&corpus, &no_pis).unwrap();
        let b: TrainOutcome<f64> = train(&corpus, &lambda_zero).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
        assert!(a.history.iter().all(|r| r.l_intrinsic == 0.0 && r.l_extrinsic == 0.0));
    }

    #[test]
    fn sustainability_task_changes_the_model_after_warm_up() {
        let corpus = tiny_corpus();
        let cfg = tiny_config();
        let full: TrainOutcome<f64> = train(&corpus, &cfg).unwrap();
        let init: PerisModel<f64> = PerisModel::init(
            corpus.vocab.n_users(),
            corpus.vocab.n_items(),
            cfg.hyper.k,
            &mut init_rng(cfg.seed),
        );
        // Two epochs past warm-up must have moved the encoder.
        assert_ne!(full.model.lstm.w_ih, init.lstm.w_ih);
        assert_ne!(full.model.proto_pis, init.proto_pis);
    }

    #[test]
    fn divergence_reports_the_poisoned_tensor() {
        let corpus = tiny_corpus();
        let mut model: PerisModel<f64> =
            PerisModel::init(corpus.vocab.n_users(), corpus.vocab.n_items(), 4, &mut init_rng(1));
        model.proto_pis[0] = f64::NAN;
        let err = assert_params_finite(&model, 3).unwrap_err();
        match err {
            Error::Diverged { epoch, detail } => {
                assert_eq!(epoch, 3);
                assert!(detail.contains("proto_pis"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_validation_split_is_rejected() {
        let mut corpus = tiny_corpus();
        corpus.valid.clear();
        assert!(matches!(
            train::<f64>(&corpus, &tiny_config()),
            Err(Error::Eval(_))
        ));
    }
}
