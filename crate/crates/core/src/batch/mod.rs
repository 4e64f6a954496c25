//! YAML experiment matrices.
//!
//! ```yaml
//! datasets: [german, compas, schemas/custom.yaml, { synthetic: { n: 2000, disparity: 0.4 } }]
//! sensitive_attributes: [sex, race]        # or { german: [sex, age] }; default per dataset
//! methods:
//!   - RW
//!   - { name: LFR, params: { a_z: 50 } }
//! models: [logreg]                         # default [logreg]
//! seeds: [0, 1, 2]                         # default [0]
//! split: { train: 0.7, validation: 0.15, test: 0.15 }
//! selection_metric: SPD                    # SPD, DI, EOD, AOD or Theil
//! output: results
//! parallelism: 4
//! ```
//!
//! Attributes a dataset does not declare are skipped for that dataset. Jobs
//! are ordered by their canonical JSON form and identified by a prefix of its
//! SHA-256; each job draws every seed from `(listed seed, job id)`.

pub mod run;
pub mod spec;

pub use run::{run_batch, BatchReport, JobRecord, JobStatus, RunOptions};
pub use spec::{
    expand_jobs, load_batch_file, parse_batch_yaml, AttributeSelection, BatchSpec, DatasetEntry, Expansion,
    JobSpec, ModelEntry, SyntheticEntry,
};
