//! Model parameters and the pure scoring math.
//!
//! The model carries user/item embeddings, a recurrent encoder over frequency
//! bins, and two prototype vectors: one scored against the encoder's hidden
//! state (sustainability head), one against the joint user+item embedding
//! (preference head). Sustainability scores are `1 - distance`, preference
//! scores `-distance`, and the recommendation score blends them with the
//! `lambda`/`mu` coefficients.
//!
//! Parameters are addressable through [`ParamGroup`] as flat slices; the
//! optimizer, the gradient checker and the checkpoint format all iterate the
//! same eight groups.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, euclidean, norm2};
use crate::lstm::{LstmCell, LstmGrads, LstmTrace};
use crate::scalar::Scalar;

/// Similarity in `[tau, 1 + tau]`: cosine rescaled to the unit interval plus
/// a floor that keeps every pair minimally related. Zero vectors have no
/// direction and are rejected.
pub fn similarity<T: Scalar>(a: &[T], b: &[T], tau: T) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::MismatchedLengths {
            left: a.len(),
            right: b.len(),
        });
    }
    let na = norm2(a);
    let nb = norm2(b);
    if na == T::zero() || nb == T::zero() {
        return Err(Error::ZeroVector);
    }
    let cos = dot(a, b) / (na * nb);
    let half = T::from_f64_lossy(0.5);
    Ok((cos + T::one()) * half + tau)
}

/// Sustainability score of a hidden state against the prototype:
/// `1 - ||proto - h||`, so a perfect match scores 1 and scores fall off
/// linearly with distance.
pub fn pis_score<T: Scalar>(hidden: &[T], proto: &[T]) -> T {
    T::one() - euclidean(proto, hidden)
}

/// Supplement an item's own bins with similarity-weighted bins of the user's
/// other past items: `own + sum_j alpha_j * other_j`.
pub fn intrinsic_feature<T: Scalar>(own: &[T], others: &[(T, &[T])]) -> Result<Vec<T>> {
    let mut out = own.to_vec();
    for (alpha, bins) in others {
        if bins.len() != own.len() {
            return Err(Error::MismatchedLengths {
                left: own.len(),
                right: bins.len(),
            });
        }
        axpy(&mut out, *alpha, bins);
    }
    Ok(out)
}

/// Similarity-weighted sum of like-minded users' bins for the same item.
/// With no neighbors the feature is all-zero.
pub fn extrinsic_feature<T: Scalar>(len: usize, neighbors: &[(T, &[T])]) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); len];
    for (beta, bins) in neighbors {
        if bins.len() != len {
            return Err(Error::MismatchedLengths {
                left: len,
                right: bins.len(),
            });
        }
        axpy(&mut out, *beta, bins);
    }
    Ok(out)
}

/// Blend the three heads: `lambda * (mu * y_int + (1 - mu) * y_ext) +
/// (1 - lambda) * y_pref`.
pub fn recommendation_score<T: Scalar>(y_int: T, y_ext: T, y_pref: T, lambda: T, mu: T) -> T {
    lambda * (mu * y_int + (T::one() - mu) * y_ext) + (T::one() - lambda) * y_pref
}

/// Anything that can score a (user, item) pair for ranking. Implementations
/// must be pure functions of their state so rankings are reproducible.
pub trait Scorer<T: Scalar>: Sync {
    fn score(&self, user: u32, item: u32) -> Result<T>;
}

/// The eight trainable tensors, in canonical (checkpoint) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    UserEmb,
    ItemEmb,
    LstmWih,
    LstmWhh,
    LstmBias,
    InputProj,
    ProtoPis,
    ProtoPref,
}

pub const PARAM_GROUPS: [ParamGroup; 8] = [
    ParamGroup::UserEmb,
    ParamGroup::ItemEmb,
    ParamGroup::LstmWih,
    ParamGroup::LstmWhh,
    ParamGroup::LstmBias,
    ParamGroup::InputProj,
    ParamGroup::ProtoPis,
    ParamGroup::ProtoPref,
];

impl ParamGroup {
    pub fn tensor_name(self) -> &'static str {
        match self {
            ParamGroup::UserEmb => "user_emb",
            ParamGroup::ItemEmb => "item_emb",
            ParamGroup::LstmWih => "lstm_w_ih",
            ParamGroup::LstmWhh => "lstm_w_hh",
            ParamGroup::LstmBias => "lstm_bias",
            ParamGroup::InputProj => "input_proj",
            ParamGroup::ProtoPis => "proto_pis",
            ParamGroup::ProtoPref => "proto_pref",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerisModel<T> {
    pub k: usize,
    pub n_users: usize,
    pub n_items: usize,
    /// `n_users x k`, row-major.
    pub user_emb: Vec<T>,
    /// `n_items x k`, row-major.
    pub item_emb: Vec<T>,
    pub lstm: LstmCell<T>,
    /// Projects one scalar bin count into the encoder's k-dim input space.
    pub input_proj: Vec<T>,
    /// Sustainability prototype, compared against hidden states.
    pub proto_pis: Vec<T>,
    /// Preference prototype, compared against joint embeddings.
    pub proto_pref: Vec<T>,
}

fn xavier_uniform<T: Scalar>(rows: usize, cols: usize, rng: &mut impl Rng) -> Vec<T> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    (0..rows * cols)
        .map(|_| T::from_f64_lossy(rng.random_range(-bound..bound)))
        .collect()
}

impl<T: Scalar> PerisModel<T> {
    /// Fresh parameters: Xavier-style fan-based uniform embeddings and
    /// prototypes, `[-1/sqrt(k), 1/sqrt(k)]` recurrent weights, zero biases.
    pub fn init(n_users: usize, n_items: usize, k: usize, rng: &mut impl Rng) -> Self {
        let user_emb = xavier_uniform(n_users, k, rng);
        let item_emb = xavier_uniform(n_items, k, rng);
        let lstm = LstmCell::init(k, rng);
        let bound = 1.0 / (k as f64).sqrt();
        let input_proj = (0..k)
            .map(|_| T::from_f64_lossy(rng.random_range(-bound..bound)))
            .collect();
        let proto_pis = xavier_uniform(1, k, rng);
        let proto_pref = xavier_uniform(1, k, rng);
        PerisModel {
            k,
            n_users,
            n_items,
            user_emb,
            item_emb,
            lstm,
            input_proj,
            proto_pis,
            proto_pref,
        }
    }

    pub fn user(&self, u: u32) -> &[T] {
        &self.user_emb[u as usize * self.k..(u as usize + 1) * self.k]
    }

    pub fn item(&self, i: u32) -> &[T] {
        &self.item_emb[i as usize * self.k..(i as usize + 1) * self.k]
    }

    /// Joint representation `e = u + v`.
    pub fn joint(&self, u: u32, i: u32) -> Vec<T> {
        self.user(u)
            .iter()
            .zip(self.item(i))
            .map(|(&a, &b)| a + b)
            .collect()
    }

    /// Preference score `-||P - e||`.
    pub fn predict_preference(&self, u: u32, i: u32) -> T {
        -euclidean(&self.proto_pref, &self.joint(u, i))
    }

    /// Build encoder inputs: step `t` is `bins[t] * input_proj + extra`.
    pub fn encoder_inputs(&self, bins: &[T], extra: Option<&[T]>) -> Vec<T> {
        let k = self.k;
        let mut inputs = vec![T::zero(); bins.len() * k];
        for (t, &count) in bins.iter().enumerate() {
            let step = &mut inputs[t * k..(t + 1) * k];
            for j in 0..k {
                step[j] = count * self.input_proj[j];
            }
            if let Some(e) = extra {
                axpy(step, T::one(), e);
            }
        }
        inputs
    }

    /// Encode a feature vector; returns the final hidden state.
    pub fn encode(&self, bins: &[T], extra: Option<&[T]>) -> Vec<T> {
        self.lstm.forward(&self.encoder_inputs(bins, extra))
    }

    pub fn encode_traced(&self, bins: &[T], extra: Option<&[T]>) -> (Vec<T>, LstmTrace<T>) {
        self.lstm.forward_traced(&self.encoder_inputs(bins, extra))
    }

    /// Clamp every user and item embedding row onto the unit ball. Applied
    /// after each optimizer step.
    pub fn project_embeddings(&mut self) {
        let k = self.k;
        for row in self.user_emb.chunks_mut(k).chain(self.item_emb.chunks_mut(k)) {
            let n = norm2(row);
            if n > T::one() {
                for v in row.iter_mut() {
                    *v = *v / n;
                }
            }
        }
    }

    pub fn group(&self, g: ParamGroup) -> &[T] {
        match g {
            ParamGroup::UserEmb => &self.user_emb,
            ParamGroup::ItemEmb => &self.item_emb,
            ParamGroup::LstmWih => &self.lstm.w_ih,
            ParamGroup::LstmWhh => &self.lstm.w_hh,
            ParamGroup::LstmBias => &self.lstm.bias,
            ParamGroup::InputProj => &self.input_proj,
            ParamGroup::ProtoPis => &self.proto_pis,
            ParamGroup::ProtoPref => &self.proto_pref,
        }
    }

    pub fn group_mut(&mut self, g: ParamGroup) -> &mut [T] {
        match g {
            ParamGroup::UserEmb => &mut self.user_emb,
            ParamGroup::ItemEmb => &mut self.item_emb,
            ParamGroup::LstmWih => &mut self.lstm.w_ih,
            ParamGroup::LstmWhh => &mut self.lstm.w_hh,
            ParamGroup::LstmBias => &mut self.lstm.bias,
            ParamGroup::InputProj => &mut self.input_proj,
            ParamGroup::ProtoPis => &mut self.proto_pis,
            ParamGroup::ProtoPref => &mut self.proto_pref,
        }
    }

    pub fn n_params(&self) -> usize {
        PARAM_GROUPS.iter().map(|&g| self.group(g).len()).sum()
    }
}

/// Dense gradients with the same shapes as the model.
#[derive(Debug, Clone)]
pub struct ModelGrads<T> {
    pub k: usize,
    pub user_emb: Vec<T>,
    pub item_emb: Vec<T>,
    pub lstm: LstmGrads<T>,
    pub input_proj: Vec<T>,
    pub proto_pis: Vec<T>,
    pub proto_pref: Vec<T>,
}

impl<T: Scalar> ModelGrads<T> {
    pub fn zeros(model: &PerisModel<T>) -> Self {
        ModelGrads {
            k: model.k,
            user_emb: vec![T::zero(); model.user_emb.len()],
            item_emb: vec![T::zero(); model.item_emb.len()],
            lstm: LstmGrads::zeros(model.k),
            input_proj: vec![T::zero(); model.k],
            proto_pis: vec![T::zero(); model.k],
            proto_pref: vec![T::zero(); model.k],
        }
    }

    pub fn group(&self, g: ParamGroup) -> &[T] {
        match g {
            ParamGroup::UserEmb => &self.user_emb,
            ParamGroup::ItemEmb => &self.item_emb,
            ParamGroup::LstmWih => &self.lstm.w_ih,
            ParamGroup::LstmWhh => &self.lstm.w_hh,
            ParamGroup::LstmBias => &self.lstm.bias,
            ParamGroup::InputProj => &self.input_proj,
            ParamGroup::ProtoPis => &self.proto_pis,
            ParamGroup::ProtoPref => &self.proto_pref,
        }
    }

    pub fn user_row_mut(&mut self, u: u32) -> &mut [T] {
        &mut self.user_emb[u as usize * self.k..(u as usize + 1) * self.k]
    }

    pub fn item_row_mut(&mut self, i: u32) -> &mut [T] {
        &mut self.item_emb[i as usize * self.k..(i as usize + 1) * self.k]
    }
}
