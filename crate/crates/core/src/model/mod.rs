//! The bidirectional heterogeneous message-passing model with random teleport.

mod checkpoint;
mod gradcheck;
mod layer;
mod params;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, ArrayEntry, Checkpoint,
    CheckpointHeader, FORMAT_VERSION, MAGIC,
};
pub use gradcheck::model_gradcheck;
pub use layer::{
    aggregate_in, aggregate_out, embed, layer_forward, model_forward, output, Features, ModelInput,
    Propagation, SPARSE_FEATURE_DENSITY,
};
pub use params::{
    Components, LayerLeaves, LayerParams, ModelParams, ModelSpec, ParamLeaves, PRELU_INIT,
};

use crate::tensor::TensorError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classify,
    Cluster,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Classify => "classify",
            Task::Cluster => "cluster",
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Task {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "classify" => Ok(Task::Classify),
            "cluster" => Ok(Task::Cluster),
            other => Err(ModelError::UnknownTask(other.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("gamma must lie in [0, 1], got {0}")]
    InvalidGamma(f64),
    #[error("need at least 2 layers (one convolution), got {0}")]
    TooFewLayers(usize),
    #[error("dimensions, relation count and basis count must be positive")]
    ZeroDimension,
    #[error("feature dimension {found} does not match the first layer ({expected})")]
    FeatureDim { expected: usize, found: usize },
    #[error("layer input has shape {found:?}, expected {expected:?}")]
    InputShape {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("graph has {graph} relations but the model was built for {model}")]
    RelationCount { graph: usize, model: usize },
    #[error("layer produces width {produced} but the next layer expects {expected}")]
    BrokenChain { produced: usize, expected: usize },
    #[error("unknown task {0:?} (expected classify or cluster)")]
    UnknownTask(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ModelError {
    /// Whether the error is a non-finite value raised during computation.
    pub fn is_divergence(&self) -> bool {
        matches!(self, ModelError::Tensor(TensorError::NonFinite { .. }))
    }
}
