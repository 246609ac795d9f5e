//! Crate-wide error type.
//!
//! Variants are split between input/usage problems (bad files, bad configs,
//! unknown ids) and runtime failures (I/O, divergence), so callers such as the
//! CLI can map them to distinct exit codes via [`Error::is_usage`].

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("empty training split")]
    EmptyTrainingSplit,

    #[error("unknown {kind} id: {id:?}")]
    UnknownId { kind: &'static str, id: String },

    #[error("similarity undefined for zero vector")]
    ZeroVector,

    #[error("mismatched vector lengths: {left} vs {right}")]
    MismatchedLengths { left: usize, right: usize },

    #[error("user {user} has no eligible negative items")]
    NoNegatives { user: u32 },

    #[error("non-finite loss at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("infeasible generator spec: {0}")]
    InfeasibleSpec(String),

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("evaluation: {0}")]
    Eval(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by user input (files, flags, configs) rather
    /// than internal failures. The CLI maps these to exit code 2.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Config(_)
                | Error::UnknownId { .. }
                | Error::InfeasibleSpec(_)
                | Error::Checkpoint(_)
        )
    }
}
