//! Transformer models over circuit trajectories, with a small tape-based
//! autograd, Adam training and a binary checkpoint format.

pub mod checkpoint;
pub mod classifier;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod optim;
pub mod params;
pub mod policy;
pub mod tensor;
pub mod train;

use aigen_core::trajectory::TrajectoryError;
use thiserror::Error;

pub use checkpoint::{Checkpoint, RngState};
pub use classifier::{TtAccuracy, TtClassifier, TtExample};
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Graph, Mask, Var};
pub use model::{Arch, ModelConfig};
pub use optim::Adam;
pub use params::{Grads, ParamId, ParamStore};
pub use policy::{NeuralPolicy, PolicyExample, PolicyModel};
pub use tensor::Mat;
pub use train::{lr_at, StepLog, TrainConfig, Trainer};

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("training diverged at step {step} (loss {loss})")]
    Diverged { step: u64, loss: f64 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}
