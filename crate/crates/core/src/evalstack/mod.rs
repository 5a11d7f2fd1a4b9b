//! Classification metrics, stratified splitting, and a stacking meta-learner
//! over base-model probability outputs.

mod metrics;
mod split;
mod stacker;

pub use metrics::{confusion_and_metrics, confusion_and_metrics_with_labels, ClassMetrics, ConfusionMatrix, MetricsReport};
pub use split::{split_dataset, Labeled};
pub use stacker::{
    loss_and_gradient, predict_stacker, read_prob_csv, train_stacker, write_prob_csv, Hyperparams, ProbRow, StackerModel,
};

use crate::lexmodel::SentimentClass;

pub const NUM_CLASSES: usize = SentimentClass::ORDER.len();

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("truths and predictions differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("nothing to evaluate")]
    Empty,
    #[error("split ratio {0} outside (0, 1)")]
    Ratio(f64),
    #[error("sample {0} has no label")]
    Unlabeled(usize),
    #[error("training data contains a single class")]
    SingleClass,
    #[error("row `{id}`: {message}")]
    BadRow { id: String, message: String },
    #[error("model expects {expected} base models, row `{id}` has {found}")]
    Width { expected: usize, found: usize, id: String },
    #[error("invalid hyperparameter: {0}")]
    Hyperparam(String),
    #[error("malformed probability CSV: {0}")]
    Csv(#[from] csv::Error),
}
