//! Central-difference verification of the analytic gradients.
//!
//! The checker differentiates exactly what the trainer optimizes: the
//! weighted batch loss from [`crate::training::batch_outcomes`], with bin
//! features and similarity weights frozen (they are constants within an
//! optimizer step) and the joint embedding read live from the model. Checks
//! run in f64 only; finite differences are meaningless at f32 precision.
//!
//! The loss is piecewise smooth: hinges and Euclidean distances have kinks.
//! Probing across a kink makes the numeric derivative wrong by construction,
//! so the checker refuses to run when any pair sits closer to a kink than a
//! safety factor times the probe width.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::PairExample;
use crate::model::{ParamGroup, PerisModel, PARAM_GROUPS};
use crate::seeding::derive;
use crate::training::{batch_outcomes, weighted_batch_loss, LossWeights};

#[derive(Debug, Clone, Copy)]
pub struct CheckedCoord {
    pub group: ParamGroup,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub coords: Vec<CheckedCoord>,
    pub max_rel_err: f64,
    /// Closest approach to a hinge kink or distance cusp seen in the batch.
    pub min_kink_distance: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&CheckedCoord> {
        self.coords
            .iter()
            .max_by(|a, b| a.rel_err.partial_cmp(&b.rel_err).unwrap())
    }
}

fn batch_loss(
    model: &PerisModel<f64>,
    examples: &[&PairExample<f64>],
    negatives: &[Vec<u32>],
    supplement: bool,
    weights: &LossWeights<f64>,
    gamma: f64,
    margin: f64,
) -> f64 {
    let (stats, _) = batch_outcomes(
        model, examples, negatives, supplement, weights, gamma, margin, false,
    );
    weighted_batch_loss(&stats, weights)
}

/// Compare analytic batch gradients against `(L(x+eps) - L(x-eps)) / 2eps`
/// on up to `coords_per_group` coordinates of every parameter group.
/// Relative error uses `|a - n| / max(1e-8, |a| + |n|)`.
#[allow(clippy::too_many_arguments)]
pub fn check_batch_gradients(
    model: &mut PerisModel<f64>,
    examples: &[&PairExample<f64>],
    negatives: &[Vec<u32>],
    supplement: bool,
    weights: &LossWeights<f64>,
    gamma: f64,
    margin: f64,
    coords_per_group: usize,
    eps: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let (stats, grads) = batch_outcomes(
        model, examples, negatives, supplement, weights, gamma, margin, true,
    );
    let grads = grads.expect("gradients requested");
    let min_kink = stats.min_kink_distance;
    if min_kink < 10.0 * eps {
        return Err(Error::Eval(format!(
            "gradient check fixture sits {min_kink:.2e} from a kink; probes of width {eps:.2e} \
             would cross it"
        )));
    }

    let mut coords = Vec::new();
    let mut max_rel_err = 0.0f64;
    for (gi, group) in PARAM_GROUPS.into_iter().enumerate() {
        let n = model.group(group).len();
        let picks = sample_indices(n, coords_per_group, derive(seed, "gradcheck", &[gi as u64]));
        for index in picks {
            let old = model.group(group)[index];
            model.group_mut(group)[index] = old + eps;
            let l_plus = batch_loss(model, examples, negatives, supplement, weights, gamma, margin);
            model.group_mut(group)[index] = old - eps;
            let l_minus = batch_loss(model, examples, negatives, supplement, weights, gamma, margin);
            model.group_mut(group)[index] = old;

            let numeric = (l_plus - l_minus) / (2.0 * eps);
            let analytic = grads.group(group)[index];
            let rel_err = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
            max_rel_err = max_rel_err.max(rel_err);
            coords.push(CheckedCoord {
                group,
                index,
                analytic,
                numeric,
                rel_err,
            });
        }
    }
    Ok(GradCheckReport {
        coords,
        max_rel_err,
        min_kink_distance: min_kink,
    })
}

/// Up to `count` distinct indices below `n`; all of them when the group is
/// small enough.
fn sample_indices(n: usize, count: usize, seed: u64) -> Vec<usize> {
    if n <= count {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<usize> = Vec::with_capacity(count);
    while picks.len() < count {
        let idx = rng.random_range(0..n);
        if !picks.contains(&idx) {
            picks.push(idx);
        }
    }
    picks
}
