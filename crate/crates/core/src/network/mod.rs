//! Convolutional consonant classifier: forward pass, backpropagation, Adam
//! training, evaluation, saliency and model persistence.

mod arch;
mod layers;
mod model;
mod persist;
mod posterior;
mod real;
mod saliency;
mod tensor;
mod train;

use std::path::PathBuf;

use thiserror::Error;

pub use arch::{Activation, Architecture, ConvShape, ConvSpec, PoolSpec};
pub use model::{
    BackwardOptions, BackwardResult, ConvLayer, DenseLayer, ForwardCache, GradientRule, Network,
    Weights,
};
pub use persist::{load_model, save_model, write_model, Model, ModelMeta, MAGIC};
pub use posterior::{batch_loss, one_hot, PosteriorVector, PROB_FLOOR};
pub use real::Real;
pub use saliency::{min_max_normalize, SaliencyMap};
pub use tensor::Tensor;
pub use train::{
    evaluate, sweep_window, train, Adam, Batching, EpochLog, Evaluation, Example, SweepRow,
    TrainConfig,
};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("class index {index} out of range for {classes} classes")]
    InvalidClass { index: usize, classes: usize },
    #[error("unsupported model format version: {0}")]
    VersionMismatch(String),
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
