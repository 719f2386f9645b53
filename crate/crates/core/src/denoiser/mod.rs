//! Small conditional noise predictor with built-in reverse-mode
//! differentiation, an adaptive-moment optimizer with decoupled weight
//! decay, the synthetic desk-scale dataset, and the training loop with
//! bucketed loss tracking.

mod data;
mod model;
mod optim;
mod train;

pub use data::{synthetic_shapes, Dataset};
pub use model::{DenoiserModel, ModelConfig, ParamBlock};
pub use optim::{AdamW, Moments};
pub use train::{
    draw_batch, loss_and_gradients, train, LossBuckets, LossGrads, StepRecord, TrainBatch,
    TrainConfig, TrainLog, TrainMode,
};
