//! Training configuration.
//!
//! `TrainConfig` mirrors the JSON config file field-for-field; CLI flags
//! override individual fields. Defaults are tuned for the bundled synthetic
//! corpus (hundreds of users, a one-year span) and every field documents the
//! sweep grid that is worth searching on real data.

use serde::{Deserialize, Serialize};

use crate::corpus::SECS_PER_DAY;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Embedding and hidden width. Sweep grid: 16, 32, 64, 128.
    pub k: usize,
    /// Weight of the sustainability task against preference learning, in
    /// [0, 1]. Sweep grid: 0.1, 0.3, 0.5, 0.7, 1.
    pub lambda: f64,
    /// Weight of the intrinsic head against the extrinsic head, in [0, 1].
    /// Sweep grid: 0.1, 0.3, 0.5, 0.7, 1.
    pub mu: f64,
    /// Similarity floor added to the rescaled cosine. Sweep grid: 0, 0.3,
    /// 0.5, 0.7.
    pub tau: f64,
    /// Hinge margin of the preference loss.
    pub margin: f64,
    /// Loss scale for negative sustainability labels, balancing the class
    /// skew. Sweep grid: 1, 0.1, 0.01.
    pub gamma: f64,
    /// Frequency-bin width in seconds. Sweep grid: 4, 8, 12 weeks.
    pub bin_width_secs: i64,
    /// Length of the recent period in seconds; the recency threshold is
    /// `train_end_time - t_offset_secs`. Sweep grid on long corpora: 16, 32,
    /// 64 weeks.
    pub t_offset_secs: i64,
    /// Epochs that train the preference head alone before the sustainability
    /// losses switch on.
    pub warmup_epochs: usize,
    /// Adam learning rate. Sweep grid: 0.01, 0.005, 0.001.
    pub lr: f64,
    /// Pairs per optimizer step. Sweep grid: powers of two, 64 to 2048.
    pub batch_size: usize,
    /// Neighbor cap of the extrinsic scheme; the heaviest past consumers of
    /// the item are kept.
    pub j_neighbors: usize,
    /// Negative items sampled per positive pair in the preference loss.
    pub neg_per_pos: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            k: 16,
            lambda: 0.5,
            mu: 0.3,
            tau: 0.0,
            margin: 0.5,
            gamma: 0.1,
            bin_width_secs: 28 * SECS_PER_DAY,
            t_offset_secs: 60 * SECS_PER_DAY,
            warmup_epochs: 5,
            lr: 0.005,
            batch_size: 128,
            j_neighbors: 20,
            neg_per_pos: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(flatten)]
    pub hyper: HyperParams,
    pub epochs: usize,
    /// Epochs without a validation nDCG@10 improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Enable the intrinsic (own-history) supplementation scheme.
    pub use_intrinsic: bool,
    /// Enable the extrinsic (like-minded users) supplementation scheme.
    pub use_extrinsic: bool,
    /// Enable the sustainability task at all; off is preference-only.
    pub use_pis: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hyper: HyperParams::default(),
            epochs: 60,
            patience: 10,
            seed: 17,
            use_intrinsic: true,
            use_extrinsic: true,
            use_pis: true,
        }
    }
}

/// How the heads combine, derived once from the config and shared verbatim
/// by the trainer and the scorer so ablations can never disagree between
/// training and inference. A disabled head contributes exactly zero to both
/// the loss and the recommendation score and is skipped outright.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScorePlan {
    pub lambda: f64,
    /// Effective intrinsic-vs-extrinsic weight after ablations.
    pub mu: f64,
    pub intrinsic: bool,
    pub extrinsic: bool,
    /// When false the intrinsic head runs on raw bins without companion
    /// items and without the joint-embedding input (the plain
    /// sustainability head of the two-scheme ablation).
    pub supplement: bool,
    pub tau: f64,
    pub j_neighbors: usize,
}

impl TrainConfig {
    pub fn plan(&self) -> ScorePlan {
        let lambda = if self.use_pis { self.hyper.lambda } else { 0.0 };
        let (mu, supplement) = match (self.use_intrinsic, self.use_extrinsic) {
            (true, true) => (self.hyper.mu, true),
            (true, false) => (1.0, true),
            (false, true) => (0.0, true),
            // Both schemes off but the task on: one head over raw bins.
            (false, false) => (1.0, false),
        };
        let pis_on = lambda > 0.0;
        ScorePlan {
            lambda,
            mu,
            intrinsic: pis_on && mu > 0.0,
            extrinsic: pis_on && mu < 1.0,
            supplement,
            tau: self.hyper.tau,
            j_neighbors: self.hyper.j_neighbors,
        }
    }

    /// Overlays `patch` (a flat JSON object, e.g. a config file or CLI
    /// overrides) onto `self`. Unknown keys are rejected here because serde
    /// cannot enforce that through the flattened hyperparameter block.
    pub fn merged(&self, patch: &serde_json::Value) -> Result<TrainConfig> {
        let obj = patch
            .as_object()
            .ok_or_else(|| Error::Config("config must be a JSON object".to_string()))?;
        let mut base = serde_json::to_value(self).expect("config serializes");
        let known = base.as_object().unwrap().clone();
        for (key, value) in obj {
            if !known.contains_key(key) {
                return Err(Error::Config(format!("unknown config field `{key}`")));
            }
            base.as_object_mut().unwrap().insert(key.clone(), value.clone());
        }
        let merged: TrainConfig = serde_json::from_value(base)
            .map_err(|e| Error::Config(format!("invalid config value: {e}")))?;
        merged.validate()?;
        Ok(merged)
    }

    pub fn validate(&self) -> Result<()> {
        let h = &self.hyper;
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(msg.to_string()))
            }
        };
        check(h.k >= 1, "k must be at least 1")?;
        check((0.0..=1.0).contains(&h.lambda), "lambda must lie in [0, 1]")?;
        check((0.0..=1.0).contains(&h.mu), "mu must lie in [0, 1]")?;
        check(h.tau >= 0.0, "tau must be non-negative")?;
        check(h.margin >= 0.0, "margin must be non-negative")?;
        check(h.gamma > 0.0 && h.gamma <= 1.0, "gamma must lie in (0, 1]")?;
        check(h.bin_width_secs > 0, "bin_width_secs must be positive")?;
        check(h.t_offset_secs > 0, "t_offset_secs must be positive")?;
        check(h.lr > 0.0 && h.lr.is_finite(), "lr must be positive")?;
        check(h.batch_size >= 1, "batch_size must be at least 1")?;
        check(h.neg_per_pos >= 1, "neg_per_pos must be at least 1")?;
        check(self.epochs >= 1, "epochs must be at least 1")?;
        check(self.patience >= 1, "patience must be at least 1")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_roundtrip_as_flat_json() {
        let cfg = TrainConfig::default();
        cfg.validate().unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"lambda\":0.5"));
        assert!(json.contains("\"epochs\":60"));
        let back: TrainConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_json_overrides_defaults_field_by_field() {
        let patch = serde_json::json!({"lambda": 0.7, "epochs": 3});
        let cfg = TrainConfig::default().merged(&patch).unwrap();
        assert_eq!(cfg.hyper.lambda, 0.7);
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.hyper.mu, 0.3);
    }

    #[test]
    fn plan_reduces_ablations_to_coefficients() {
        let mut cfg = TrainConfig::default();
        let p = cfg.plan();
        assert!(p.intrinsic && p.extrinsic && p.supplement);
        assert_eq!(p.mu, 0.3);

        cfg.use_intrinsic = false;
        let p = cfg.plan();
        assert!(!p.intrinsic && p.extrinsic);
        assert_eq!(p.mu, 0.0);

        cfg.use_intrinsic = true;
        cfg.use_extrinsic = false;
        let p = cfg.plan();
        assert!(p.intrinsic && !p.extrinsic && p.supplement);
        assert_eq!(p.mu, 1.0);

        cfg.use_intrinsic = false;
        let p = cfg.plan();
        assert!(p.intrinsic && !p.extrinsic && !p.supplement);
        assert_eq!(p.mu, 1.0);

        cfg = TrainConfig {
            use_pis: false,
            ..TrainConfig::default()
        };
        let p = cfg.plan();
        assert_eq!(p.lambda, 0.0);
        assert!(!p.intrinsic && !p.extrinsic);
    }

    #[test]
    fn lambda_zero_disables_both_heads() {
        let cfg = TrainConfig {
            hyper: HyperParams {
                lambda: 0.0,
                ..HyperParams::default()
            },
            ..TrainConfig::default()
        };
        let p = cfg.plan();
        assert!(!p.intrinsic && !p.extrinsic);
    }

    #[test]
    fn out_of_range_fields_are_rejected() {
        let mut cfg = TrainConfig::default();
        cfg.hyper.lambda = 1.5;
        assert!(cfg.validate().is_err());
        cfg.hyper.lambda = 0.5;
        cfg.hyper.gamma = 0.0;
        assert!(cfg.validate().is_err());
        cfg.hyper.gamma = 0.1;
        cfg.hyper.bin_width_secs = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_config_fields_are_rejected() {
        let patch = serde_json::json!({"lambd": 0.5});
        let err = TrainConfig::default().merged(&patch).unwrap_err();
        assert!(err.to_string().contains("lambd"), "{err}");
    }

    #[test]
    fn merged_rejects_values_that_fail_validation() {
        let patch = serde_json::json!({"gamma": -1.0});
        assert!(TrainConfig::default().merged(&patch).is_err());
    }
}
