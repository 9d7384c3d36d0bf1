//! Tensors with tape-based reverse-mode differentiation, a configurable
//! DenseNet feature extractor, its training loop, and Grad-CAM.

pub mod densenet;
pub mod gradcam;
pub mod layers;
pub mod mlp;
pub mod ops;
pub mod scalar;
pub mod tape;
pub mod tensor;
pub mod train;

use thiserror::Error;

pub use densenet::{image_batch, DenseBlock, DenseBlockSpec, DenseLayer, DenseNet, ForwardPass, NetworkConfig, Transition};
pub use gradcam::{gradcam, overlay, GradCam, Heatmap};
pub use layers::{BatchNormLayer, Binder, ConvLayer, Linear, Module};
pub use mlp::Mlp;
pub use scalar::Scalar;
pub use tape::{BnMode, Gradients, Tape, Var};
pub use tensor::Tensor;
pub use train::{refresh_running_stats, train, train_from, train_with, LabeledImage, Sgd, TrainConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("batch norm needs at least two values per channel in training mode")]
    DegenerateBatch,
    #[error("spatial size {0}x{1} is not even")]
    OddSpatialDim(usize, usize),
    #[error("no recorded computation for this node")]
    NoRecordedGraph,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("network has no output head")]
    UntrainedHead,
    #[error("label index {0} out of range")]
    InvalidLabel(usize),
    #[error("heatmap is {heatmap:?}, image is {image:?}")]
    DimMismatch {
        heatmap: (usize, usize),
        image: (usize, usize),
    },
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
}
