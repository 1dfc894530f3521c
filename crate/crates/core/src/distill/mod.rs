//! Context distillation at desk scale.
//!
//! A teacher that sees the query plus context supplies top-K next-token
//! targets along each rollout; a student that sees only the query is fitted
//! to them under the truncated KL objective.

pub mod checkpoint;
pub mod data;
pub mod model;
pub mod objective;
pub mod train;
pub mod vocab;

use thiserror::Error;

pub use checkpoint::Checkpoint;
pub use data::{build_examples, BuildOutcome, DistillExample, TargetSource, TeacherModel};
pub use model::{argmax, Architecture, StudentModel};
pub use objective::{kl_loss, soft_targets, truncate_topk, TopKTarget};
pub use train::{grad_kl, mean_kl, train, Schedule, TrainConfig, TrainOutcome};
pub use vocab::TokenVocab;

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("loss diverged at step {step}")]
    Diverged { step: usize, last: Box<StudentModel> },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
