//! Sequential recommender built around interest sustainability: whether a
//! user's interest in an item, summarized as binned consumption frequencies
//! over the training timeline, persists into the most recent period.
//!
//! The crate is organized along the data path:
//!
//! * [`corpus`]: TSV ingestion, filtering, chronological splits, histories.
//! * [`binning`]: time grids, frequency-bin vectors, sustainability labels,
//!   neighbor sets.
//! * [`model`]: embeddings, the recurrent bin encoder, prototype heads and
//!   the blended recommendation score.
//! * [`training`]: losses, Adam, the epoch loop, gradient checking.
//! * [`baselines`]: a pairwise-ranking matrix factorization baseline.
//! * [`evaluation`]: sampled ranking metrics, cohort/overlap/shift analyses.
//! * [`synth`]: a seeded generator for corpora with known sustained and
//!   drifting interests.
//! * [`checkpoint`]: self-describing binary checkpoints.
//!
//! All real arithmetic is generic over [`Scalar`]; the aliases below pin the
//! two supported widths. `f64` is the reference width used by every
//! correctness gate.

pub mod adam;
pub mod binning;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod gradcheck;
pub mod linalg;
pub mod lstm;
pub mod model;
pub mod scalar;
pub mod seeding;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;
