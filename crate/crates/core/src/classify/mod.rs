//! RBF-kernel SVM (one-vs-rest, SMO dual solver), cross-validated grid search
//! and evaluation metrics.

mod grid;
mod kernel;
mod metrics;
pub mod smo;
mod svm;

pub use grid::{grid_search, stratified_folds, CvRow, GridResult, GridSpec, DEFAULT_FOLDS};
pub use kernel::{kernel_from_distances, rbf_kernel, self_squared_distances, squared_distances};
pub use metrics::{
    confidence_interval, evaluate, f_score, metrics_from_confusion, ClassMetrics, ConfusionMatrix, EvalReport,
    Interval, RunMetrics,
};
pub use svm::{train_svm, Machine, SvmModel, SvmParams, DEFAULT_MAX_ITER, KKT_TOLERANCE};
