//! The two-stage benchmark protocol.
//!
//! Stage one transforms a whole dataset and compares data-level metrics.
//! Stage two splits the original data once, trains a classifier on the
//! original and on the transformed training part, sweeps thresholds on the
//! validation and test parts, and selects a threshold on validation.

pub mod source;
pub mod stage;
pub mod sweep;

pub use source::{default_data_dir, DatasetSource, LoadedDataset, DATA_DIR_ENV, SYNTHETIC_ATTRIBUTE};
pub use stage::{
    dataset_fingerprint, derive_seed, load_original, run_bench_stage, run_prep_stage, Arm, ArmOutcome,
    BenchConfig, BenchReport, StageOne, StageOneReport, SweepResult,
};
pub use sweep::{select_optimal_threshold, selection_score, sweep_thresholds, SweepRecord, ThresholdGrid};
