//! Summary-grounded conversation generation and summarization-data
//! augmentation.
//!
//! The library covers the full pipeline: corpus ingestion and speaker
//! anonymization ([`corpus`]), linear sequence formats with control tokens
//! ([`seqformat`]), pluggable tiny/pretrained LM backends ([`lmbridge`]),
//! whole-conversation and controlled turn-by-turn generation
//! ([`generators`]), PPO training against a summarize-then-overlap reward
//! ([`rlloop`]), text-overlap metrics ([`metrics`]) and experiment
//! orchestration ([`harness`]).
//!
//! See the `examples/` directory for one runnable example per capability;
//! the `convforge` binary exposes the same operations as subcommands.

pub mod corpus;
pub mod generators;
pub mod harness;
pub mod lmbridge;
pub mod metrics;
pub mod rlloop;
pub mod seqformat;

pub mod cli;

use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum Error {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
