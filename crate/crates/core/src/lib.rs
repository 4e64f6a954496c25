//! Benchmark toolkit for fairness-aware pre-processing on tabular data.
//!
//! The crate is organised around a two-stage protocol:
//!
//! * **stage one** loads and encodes a dataset, applies a bias-mitigation
//!   transform ([`preproc`]) and reports data-level fairness metrics
//!   ([`metrics::DatasetMetrics`]) for the original and transformed data;
//! * **stage two** trains a classifier ([`model`]) on both versions using a
//!   holdout split, sweeps classification thresholds and selects a threshold
//!   that trades balanced accuracy against a fairness metric ([`pipeline`]).
//!
//! [`batch`] expands YAML experiment matrices into jobs and [`report`] writes
//! the CSV, JSON and SVG artifacts.

pub mod batch;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod model;
pub mod params;
pub mod pipeline;
pub mod preproc;
pub mod report;

pub use error::{Error, MetricError, Result};
