//! Training and evaluation: softmax cross-entropy, Adam, stratified splits,
//! the epoch loop and classification metrics.

mod adam;
mod loss;
mod metrics;
mod split;
mod train;

use thiserror::Error;

use crate::nn::NnError;

pub use adam::{adam_step, adam_update, AdamConfig, AdamState};
pub use loss::{cross_entropy, log_softmax, softmax, softmax_cross_entropy, CrossEntropy, PROB_FLOOR};
pub use metrics::{encode_labels, evaluate, predict_proba, EvalReport};
pub use split::{split_dataset, split_indices, SplitOutcome, StratifyWarning};
pub use train::{train, write_log_jsonl, EpochLog, Sample, TrainConfig, TrainOutcome};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite gradient in parameter {name}")]
    NonFiniteGradient { name: String },
    #[error("epoch {epoch}, batch {batch}: {source}")]
    InTraining {
        epoch: usize,
        batch: usize,
        #[source]
        source: Box<LearnError>,
    },
    #[error("label {label:?} is not one of the model's classes")]
    Label { label: String },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("report I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("report serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error("report CSV: {0}")]
    Csv(#[from] csv::Error),
}

pub type LearnResult<T> = Result<T, LearnError>;
