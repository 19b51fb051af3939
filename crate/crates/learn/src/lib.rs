//! Learned cut policies: position encoding, the value networks `N` and
//! `N₂`, their regression targets, sample pools and the training cycle.

pub mod checkpoint;
pub mod encode;
pub mod model;
pub mod oracle;
pub mod pool;
pub mod targets;
pub mod train;

use thiserror::Error;

pub use encode::{encode, feature_count, flat_dim, EncodedPosition};
pub use model::{Adam, Head, ValueModel};
pub use oracle::MinOracle;
pub use pool::SamplePool;
pub use targets::{policy_from_n2, GlobalEstimator, LocalEstimator, N2Policy};
pub use train::{generalization_run, training_cycle, Schedule, TrainConfig, Trainer};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] nilprove_core::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
