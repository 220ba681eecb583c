//! Miniature convolutional style classifier with hand-written
//! backpropagation.
//!
//! Architecture: `K` blocks of (3x3 conv, ReLU, 2x2 max-pool), flatten,
//! FC-512 + ReLU (the feature head), FC-9 logits. Images are `[H, W, 3]`
//! row-major with interleaved channels, values in [0, 1].

mod checkpoint;
mod gradcam;
mod gradcheck;
mod model;
mod network;
mod tensor;
mod train;
mod visualize;

use thiserror::Error;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, CHECKPOINT_MAGIC};
pub use gradcam::{grad_cam_from_parts, GradCamMap};
pub use gradcheck::{gradient_check, relative_error, GradCheckReport};
pub use model::{cross_entropy, softmax, softmax_row, ForwardCache, Network, SampleCache, LOG_FLOOR};
pub use network::{
    infer_config, init_params, NetworkConfig, NetworkParams, CHANNELS, FEATURE_WIDTH, KERNEL,
    NUM_CLASSES, POOL,
};
pub use tensor::Tensor;
pub use train::{train, Dataset, EpochRecord, TrainConfig, TrainOutcome};
pub use visualize::{FilterVisConfig, FilterVisualization};

#[derive(Debug, Error)]
pub enum NnetError {
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {0} outside 0..9")]
    InvalidLabel(usize),
    #[error("unknown layer {0:?}")]
    UnknownLayer(String),
    #[error("stale or mismatched cache: {0}")]
    StaleCache(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("filter visualization objective became non-finite at iteration {iteration}")]
    VisualizationDiverged {
        iteration: usize,
        last_good: Box<Tensor>,
    },
    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
