//! Masked inference and evaluation metrics.

mod infer;
mod metrics;
mod report;

pub use infer::{
    format_predictions, infer_features, infer_scene, load_predictions, parse_predictions,
    save_predictions, Prediction,
};
pub use metrics::{miou, tpe, tpe_from_counts, Confusion, IouScores, TpeVariant};
pub use report::{evaluate_dataset, evaluate_predictions, EvalReport, SceneReport};
