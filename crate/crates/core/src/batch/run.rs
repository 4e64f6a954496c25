use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::batch::spec::JobSpec;
use crate::dataset::DatasetCache;
use crate::error::{Error, Result};
use crate::model::ModelRegistry;
use crate::pipeline::{run_bench_stage, run_prep_stage, BenchConfig, StageOneReport, ThresholdGrid};
use crate::report::{write_job_artifacts, write_stage1_csv, Summary};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub output: PathBuf,
    /// Defaults to `<output>/cache`.
    pub cache_dir: Option<PathBuf>,
    pub parallelism: usize,
    pub grid: ThresholdGrid,
}

impl RunOptions {
    pub fn new(output: impl Into<PathBuf>) -> Self {
        Self {
            output: output.into(),
            cache_dir: None,
            parallelism: 1,
            grid: ThresholdGrid::standard(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum JobStatus {
    Succeeded,
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub dataset: String,
    pub attribute: String,
    pub method: String,
    pub model: String,
    pub seed: u64,
    #[serde(flatten)]
    pub status: JobStatus,
    pub wall_time_secs: f64,
    /// Stage-one output came from the cache.
    pub cache_hit: bool,
    pub artifacts: Vec<PathBuf>,
}

/// Per-job outcomes in job order. Wall times make this file run-specific;
/// metric files are not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub succeeded: usize,
    pub failed: usize,
    pub skipped_combinations: Vec<(String, String)>,
    pub jobs: Vec<JobRecord>,
}

impl BatchReport {
    pub fn all_succeeded(&self) -> bool {
        self.failed == 0
    }
}

/// Finished jobs by index.
type Slots = Mutex<Vec<Option<(JobRecord, Option<StageOneReport>)>>>;

struct JobOutput {
    stage1: Option<StageOneReport>,
    cache_hit: bool,
    artifacts: Vec<PathBuf>,
}

fn run_job(
    job: &JobSpec,
    options: &RunOptions,
    cache: &DatasetCache,
    registry: &ModelRegistry,
) -> (Result<()>, JobOutput) {
    let mut out = JobOutput {
        stage1: None,
        cache_hit: false,
        artifacts: Vec::new(),
    };
    let result = (|| {
        let seed = job.job_seed();
        let loaded = job.source.load(Some(&job.attribute))?;
        let stage1 = run_prep_stage(&loaded, &job.method, seed, Some(cache))?;
        out.cache_hit = stage1.cache_hit;
        out.stage1 = Some(stage1.report.clone());
        let cfg = BenchConfig {
            model: job.model.name.clone(),
            model_params: job.model.params.clone(),
            split: job.split.with_seed(seed),
            selection_metric: job.selection_metric,
            grid: options.grid.clone(),
            weighted_evaluation: false,
        };
        let bench = run_bench_stage(&stage1.report, &stage1.original, &cfg, registry)?;
        let failures: Vec<String> = [&bench.original, &bench.processed]
            .into_iter()
            .filter_map(|arm| match arm {
                crate::pipeline::ArmOutcome::Failed { error } => Some(error.clone()),
                crate::pipeline::ArmOutcome::Completed(_) => None,
            })
            .collect();
        let summary = Summary::new(Some(job.id.clone()), stage1.report, Some(bench));
        out.artifacts = write_job_artifacts(&options.output.join(&job.id), &summary)?;
        if failures.is_empty() {
            Ok(())
        } else {
            Err(Error::Optimization(failures.join("; ")))
        }
    })();
    (result, out)
}

/// Runs every job with at most `options.parallelism` workers. A failing job
/// is recorded and the rest continue. Also writes `stage1.csv` over all
/// jobs and `batch_report.json` into the output directory.
pub fn run_batch(
    jobs: &[JobSpec],
    skipped: &[(String, String)],
    options: &RunOptions,
    registry: &ModelRegistry,
) -> Result<BatchReport> {
    std::fs::create_dir_all(&options.output).map_err(|e| Error::io(&options.output, e))?;
    let cache = DatasetCache::new(
        options
            .cache_dir
            .clone()
            .unwrap_or_else(|| options.output.join("cache")),
    )?;
    let next = AtomicUsize::new(0);
    let slots: Slots = Mutex::new(vec![None; jobs.len()]);
    let workers = options.parallelism.clamp(1, jobs.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else {
                    break;
                };
                let started = Instant::now();
                let (result, out) = match catch_unwind(AssertUnwindSafe(|| run_job(job, options, &cache, registry))) {
                    Ok(r) => r,
                    Err(panic) => {
                        let msg = panic
                            .downcast_ref::<String>()
                            .cloned()
                            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                            .unwrap_or_else(|| "unknown panic".into());
                        (
                            Err(Error::Optimization(format!("job panicked: {msg}"))),
                            JobOutput {
                                stage1: None,
                                cache_hit: false,
                                artifacts: Vec::new(),
                            },
                        )
                    }
                };
                let status = match result {
                    Ok(()) => JobStatus::Succeeded,
                    Err(e) => {
                        log::warn!("job {} failed: {e}", job.id);
                        JobStatus::Failed { error: e.to_string() }
                    }
                };
                let record = JobRecord {
                    id: job.id.clone(),
                    dataset: job.dataset.label(),
                    attribute: job.attribute.clone(),
                    method: job.method.method().abbreviation().into(),
                    model: job.model.name.clone(),
                    seed: job.seed,
                    status,
                    wall_time_secs: started.elapsed().as_secs_f64(),
                    cache_hit: out.cache_hit,
                    artifacts: out.artifacts,
                };
                slots.lock().expect("no worker panics while holding the lock")[i] = Some((record, out.stage1));
            });
        }
    });

    let mut records = Vec::with_capacity(jobs.len());
    let mut stage1 = Vec::new();
    for slot in slots.into_inner().expect("workers finished") {
        let (record, report) = slot.expect("every job index is claimed once");
        records.push(record);
        stage1.extend(report);
    }
    if !stage1.is_empty() {
        write_stage1_csv(&options.output.join("stage1.csv"), &stage1)?;
    }
    let failed = records
        .iter()
        .filter(|r| matches!(r.status, JobStatus::Failed { .. }))
        .count();
    let report = BatchReport {
        succeeded: records.len() - failed,
        failed,
        skipped_combinations: skipped.to_vec(),
        jobs: records,
    };
    write_batch_report(&options.output.join("batch_report.json"), &report)?;
    Ok(report)
}

fn write_batch_report(path: &Path, report: &BatchReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report).expect("batch report serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
