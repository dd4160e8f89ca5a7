//! Label construction, the training loop and evaluation metrics.

pub mod labels;
pub mod loss;
pub mod metrics;
pub mod train;

pub use labels::{build_labels, eval_labels, label_length, LabelSequence};
pub use loss::{masked_weighted_bce, standard_bce};
pub use metrics::{iou, MetricsReport, SampleOutcome};
pub use train::{
    evaluate, evaluate_outcomes, prepare_models, primary_type, stratified_split, train, EpochLog, PreparedModel,
    TrainConfig, TrainOutcome,
};
