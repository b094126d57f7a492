//! Experiment harness: run configs, the variant matrix, sweeps and reports.

pub mod config;
pub mod report;
pub mod runner;
pub mod variant;

pub use config::{parse_kv_text, RunConfig, TaskId, SEED_ENV};
pub use report::{emit_report, format_mean_std, mean_std, metrics_csv, MetricsRow, METRICS_HEADER};
pub use runner::{complete_minf_grid, default_minf_grid, evaluate, Delay, EvalExample, EvalResult, Lab, TaskData};
pub use variant::{Variant, VariantSpec};
