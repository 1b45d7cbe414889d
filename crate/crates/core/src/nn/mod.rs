//! A small, explicit-backward numerical stack: dense layers, a masked BiLSTM,
//! additive attention, losses, optimizers, and checkpoints.

pub mod attention;
pub mod checkpoint;
pub mod dense;
pub mod gradcheck;
pub mod loss;
pub mod lstm;
pub mod optim;
pub mod param;
pub mod tensor;
pub mod train;

pub use attention::{additive_attention, average_pool, masked_softmax, AdditiveAttention};
pub use checkpoint::Checkpoint;
pub use dense::{dense, Activation, Dense};
pub use lstm::{bilstm, BiLstm, Lstm};
pub use loss::{class_weights, mse, weighted_cross_entropy};
pub use optim::{Adam, Optimizer, OptimizerKind};
pub use param::{Grads, Param};
pub use tensor::{MaskedBatch, Tensor};
pub use train::{fit, split_validation, TrainConfig, TrainHistory, Trainable};
