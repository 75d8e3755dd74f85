//! Experiment harness for the planar navigation tasks: configuration
//! presets, seeded evaluation sweeps, metrics aggregation, timing reports
//! and the numerical verification suite behind the `verify` subcommand.

pub mod config;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod output;
pub mod timing;
pub mod train;
pub mod verify;

pub use config::{Checkpoints, ControllerKind, ExperimentConfig, Hyperparameters, Task, TrainingSettings};
pub use error::{BenchError, Result};
pub use experiment::{run_experiment, Experiment, Models};
pub use metrics::{aggregate, quantile, quartiles, EpisodeRecord, MetricsSummary, SummaryRow, TimingRecord};
pub use output::{emit_outputs, read_episodes, read_timings};
pub use timing::{timing_report, TimingReport, TimingRow};
pub use train::{train, TrainOutcome};
