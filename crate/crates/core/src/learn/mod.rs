//! Policy network, clipped-surrogate optimization and the training loop.

pub mod checkpoint;
pub mod network;
pub mod ppo;
pub mod train;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use network::{policy_forward, PolicyOutput, PolicyParams};
pub use ppo::{gae, Adam, PpoConfig, RolloutBatch};
pub use train::{train, LearnedPolicy, TrainConfig, TrainError, TrainLogRow, Trainer, TrainerState};
