//! The local learner: a one-hidden-layer softmax classifier trained with exact
//! full-batch gradients, and the data it learns from.

mod data;
pub mod idx;
mod model;
mod partition;

pub use data::{gaussian_mixture, label_histogram, DeviceDataset, Sample, SyntheticSpec};
pub use model::{evaluate, init_model, local_loss_and_gradient, Activation, Dims, Gradient, ModelParams};
pub use partition::partition_noniid;
