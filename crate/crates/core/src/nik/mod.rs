//! Neural implicit k-space: Fourier features, a sinusoidal coordinate network
//! with hand-written backpropagation, and the training loop.

mod encoding;
mod model;
mod train;

pub use encoding::FeatureEncoding;
pub use model::{ForwardCache, NikArchitecture, NikModel};
pub use train::{
    dc_loss, dc_loss_grad, frame_times, infer_frame, objective_gradient, predict_grid, train,
    AcquiredSet, ObjectiveGradient, Regularizer, TrainConfig, TrainEpoch,
};
