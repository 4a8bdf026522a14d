//! Reproduction machinery: trainers, evaluation, comparison, diagnostics,
//! and the run-directory layout (manifest.json, metrics.csv, timings.csv,
//! checkpoints/, eval/).

pub mod compare;
pub mod config;
pub mod diag;
pub mod eval;
pub mod manifest;
pub mod optim;
pub mod trainer;

pub use compare::{compare, median, CompareReport, RunSummary};
pub use config::{parse_override, CurriculumMode, Method, TrainConfig};
pub use diag::{diag_gradnorm, write_diag_csv, DiagSummary};
pub use eval::{evaluate_model, write_eval_csv, EvalRow, EvalSummary};
pub use manifest::{read_metrics_csv, DatasetFingerprint, MetricsRow, RunManifest};
pub use optim::{ema_update, lr_at, AdamConfig, AdamState};
pub use trainer::{train, TrainOutcome};
