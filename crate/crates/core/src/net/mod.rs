//! From-scratch convolutional encoder-decoder with manual backpropagation.

mod adam;
mod layers;
mod model;
mod spec;
mod train;
mod weights;

pub use adam::AdamState;
pub use layers::{conv2d_forward, tconv2d_forward, Filters, Tensor3};
pub use model::{backward, batch_loss, decode, decode_raw, encode, example_loss, inject_latent, latent_gradient, loss_unit, Example};
pub use spec::{Activation, LayerKind, LayerPlan, LayerShape, NetworkSpec};
pub use train::{dataset_loss, train, train_with, EpochLog, TrainReport, TrainSchedule, DIVERGENCE_LOSS};
pub use weights::{checksum, Gradients, NetworkWeights};
