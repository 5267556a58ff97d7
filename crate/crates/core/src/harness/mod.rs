//! Dataset loading, training loops, sweeps, evaluation and export.

mod config;
mod dataset;
mod export;
mod split;
mod sweep;
mod train;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{parse_seeds, parse_split, RelationMode, TrainConfig};
pub use dataset::{load_dataset, DatasetSummary, LoadOptions, LoadedDataset};
pub use export::{embeddings, export_embeddings, read_embeddings, write_embeddings};
pub use split::{split_nodes, Split, MIN_LABELED};
pub use sweep::{
    ablation_variants, aggregate, grid, run_once, sweep, write_aggregate_csv, write_runs_csv,
    AggregateRow, SweepAxis, SweepRow, GAMMA_GRID, LAYER_GRID,
};
pub use train::{
    evaluate_checkpoint, kmeans_raw, model_spec, train_classify, train_classify_with_split,
    train_cluster, ClassifyOutcome, ClusterOutcome, EpochRecord, RunRecord, StoredConfig,
};

use crate::cluster::ClusterError;
use crate::degree::DegreeError;
use crate::graph::GraphError;
use crate::metrics::MetricError;
use crate::model::ModelError;
use crate::objectives::ObjectiveError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{file}: {message}")]
    Dataset { file: String, message: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: {reason}")]
    Divergence { epoch: usize, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(ModelError),
    #[error(transparent)]
    Objective(ObjectiveError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Degree(#[from] DegreeError),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Non-finite values during training or evaluation.
    pub fn is_divergence(&self) -> bool {
        match self {
            HarnessError::Divergence { .. } => true,
            HarnessError::Model(e) => e.is_divergence(),
            HarnessError::Objective(ObjectiveError::Tensor(TensorError::NonFinite { .. })) => true,
            _ => false,
        }
    }
}

impl From<ModelError> for HarnessError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Tensor(TensorError::NonFinite { op }) => HarnessError::Divergence {
                epoch: 0,
                reason: format!("non-finite value in {op}"),
            },
            other => HarnessError::Model(other),
        }
    }
}

impl From<ObjectiveError> for HarnessError {
    fn from(e: ObjectiveError) -> Self {
        match e {
            ObjectiveError::Tensor(TensorError::NonFinite { op }) => HarnessError::Divergence {
                epoch: 0,
                reason: format!("non-finite value in {op}"),
            },
            other => HarnessError::Objective(other),
        }
    }
}

impl From<TensorError> for HarnessError {
    fn from(e: TensorError) -> Self {
        ModelError::from(e).into()
    }
}
