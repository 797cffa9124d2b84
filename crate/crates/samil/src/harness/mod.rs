//! Experiment harness: configuration, metrics, training loops, and the
//! two-stage pipeline driver behind the CLI.

pub mod audit;
pub mod config;
pub mod metrics;
pub mod pipeline;
pub mod sweep;
pub mod train;

pub use config::{ExperimentConfig, PretrainMode};
pub use metrics::{
    attention_relevance_curve, auroc, balanced_accuracy, confusion_matrix, screening_aurocs,
    MetricsReport, ScreeningAurocs, N_CLASSES,
};
pub use audit::{audit_csv, audit_split, curve_csv, AuditRecord};
pub use pipeline::{
    ensure_stage1, load_stage1, pretrain_stage1, run_pipeline, run_train_only, Manifest,
    PipelineOutcome, RunRecord, Stage1Init,
};
pub use sweep::{run_sweep, run_sweep_to_dir, select_best, sweep_csv, SweepRecord, SweepSelection};
pub use train::{evaluate_split, run_training, split_report, train_model, SplitEval, TrainOutcome};
