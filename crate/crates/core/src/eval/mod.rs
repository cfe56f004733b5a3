//! Leave-one-subject-out evaluation, segment aggregation, metrics and the
//! end-to-end pipeline.

mod folds;
mod metrics;
mod pipeline;
mod report;

pub use folds::{check_fold, loso_folds, Fold};
pub use metrics::{
    aggregate_segment, confusion_and_accuracy, confusion_from_predictions, roc_auc, trapezoid_area, Classification,
    ConfusionMatrix, RocPoint, DEFAULT_TRIM,
};
pub use pipeline::{
    auc_vs_m_sweep, classical_loso, cnn_loso, evaluate_corpus, metrics_for, prepare_corpus, run_pipeline, run_sweep,
    Branch, BranchReport, ClassicalConfig, EvaluationReport, FeatureTable, FoldSummary, Metrics, PipelineConfig,
    PreparedCorpus, SegmentPrediction, SweepCurve, SweepPoint, TaskMetrics, REPORT_SCHEMA_VERSION,
};
pub use report::{report_json, report_without_timestamp, write_outputs};
