//! Metrics, experiment orchestration and reports.

pub mod config;
pub mod experiment;
pub mod metrics;
pub mod report;

pub use config::{ExperimentConfig, Mode};
pub use experiment::{evaluate, predict_rows, run_experiment, run_on_dataset, train_pipeline, Models, Pipeline};
pub use metrics::{indicator_cross_entropy, normalized_l1, precision_rate};
pub use report::{Aggregate, Cell, Metrics, Report, RepetitionInfo};
