use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::cache::to_bytes;
use crate::dataset::{split_indices, CacheKey, DatasetCache, SplitSpec, TabularDataset};
use crate::error::{Error, Result};
use crate::metrics::{
    dataset_metrics, ClassificationMetrics, DatasetMetrics, FairnessMetric,
};
use crate::model::ModelRegistry;
use crate::params::Params;
use crate::pipeline::source::LoadedDataset;
use crate::pipeline::sweep::{select_optimal_threshold, sweep_thresholds, SweepRecord, ThresholdGrid};
use crate::preproc::MethodConfig;

/// Deterministic 64-bit seed for a named sub-task of `base`.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Hex SHA-256 of the canonical serialization of an encoded dataset.
pub fn dataset_fingerprint(ds: &TabularDataset) -> String {
    hex::encode(Sha256::digest(to_bytes(ds)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOneReport {
    pub dataset: String,
    pub attribute: String,
    pub method: MethodConfig,
    pub seed: u64,
    pub n_records: usize,
    pub n_features: usize,
    /// Metrics of the encoded data before the transform.
    pub original: DatasetMetrics,
    /// Metrics of the transform applied to the full dataset.
    pub processed: DatasetMetrics,
    pub original_cache_id: String,
    pub processed_cache_id: String,
}

#[derive(Debug, Clone)]
pub struct StageOne {
    pub report: StageOneReport,
    pub original: TabularDataset,
    pub processed: TabularDataset,
    /// The transform was loaded from the cache instead of recomputed.
    pub cache_hit: bool,
}

/// Transforms the full dataset and measures both versions.
///
/// With a cache, both datasets are stored under content-derived keys and a
/// stored transform output is reused.
pub fn run_prep_stage(
    dataset: &LoadedDataset,
    method: &MethodConfig,
    seed: u64,
    cache: Option<&DatasetCache>,
) -> Result<StageOne> {
    let original = &dataset.data;
    let fingerprint = dataset_fingerprint(original);
    let original_key = CacheKey::new(&fingerprint, "original", &(), 0);
    let processed_key = CacheKey::new(&fingerprint, method.method().abbreviation(), method, seed);
    let context = |e: Error| {
        e.context(format!(
            "{} on `{}` ({})",
            method.method(),
            dataset.name,
            dataset.attribute
        ))
    };

    let cached = match cache {
        Some(c) => c.load(&processed_key)?,
        None => None,
    };
    let cache_hit = cached.is_some();
    let processed = match cached {
        Some(ds) => ds,
        None => method.fit(original, seed).map_err(context)?.output,
    };
    if let Some(c) = cache {
        if !c.contains(&original_key) {
            c.store(original, &original_key)?;
        }
        if !cache_hit {
            c.store(&processed, &processed_key)?;
        }
    }

    let report = StageOneReport {
        dataset: dataset.name.clone(),
        attribute: dataset.attribute.clone(),
        method: method.clone(),
        seed,
        n_records: original.n(),
        n_features: original.d(),
        original: dataset_metrics(original),
        processed: dataset_metrics(&processed),
        original_cache_id: original_key.as_str().to_string(),
        processed_cache_id: processed_key.as_str().to_string(),
    };
    Ok(StageOne {
        report,
        original: original.clone(),
        processed,
        cache_hit,
    })
}

/// Loads the original dataset of a stage-one report from the cache.
pub fn load_original(report: &StageOneReport, cache: &DatasetCache) -> Result<TabularDataset> {
    let key: CacheKey = serde_json::from_value(report.original_cache_id.clone().into())
        .expect("cache keys are plain strings");
    cache.load(&key)?.ok_or_else(|| {
        Error::Dataset(format!(
            "cache entry {} for `{}` not found in {}",
            report.original_cache_id,
            report.dataset,
            cache.root().display()
        ))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub model_params: Params,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default = "default_metric")]
    pub selection_metric: FairnessMetric,
    #[serde(default)]
    pub grid: ThresholdGrid,
    /// Use instance weights of evaluation records in metrics. Held-out
    /// weights are 1 unless the source data carried weights.
    #[serde(default)]
    pub weighted_evaluation: bool,
}

fn default_model() -> String {
    "logreg".into()
}

fn default_metric() -> FairnessMetric {
    FairnessMetric::StatisticalParityDifference
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            model: default_model(),
            model_params: Params::default(),
            split: SplitSpec::default(),
            selection_metric: default_metric(),
            grid: ThresholdGrid::default(),
            weighted_evaluation: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Original,
    Processed,
}

impl Arm {
    pub const ALL: [Arm; 2] = [Arm::Original, Arm::Processed];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Original => "original",
            Arm::Processed => "processed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub arm: Arm,
    pub selection_metric: FairnessMetric,
    /// Chosen on the validation sweep.
    pub optimal_threshold: f64,
    pub validation: Vec<SweepRecord>,
    pub test: Vec<SweepRecord>,
    pub test_at_optimum: ClassificationMetrics,
    pub model_diagnostics: serde_json::Value,
    /// Fit summary of the transform re-fitted on the training split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform_diagnostics: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ArmOutcome {
    Completed(Box<SweepResult>),
    Failed { error: String },
}

impl ArmOutcome {
    pub fn result(&self) -> Option<&SweepResult> {
        match self {
            ArmOutcome::Completed(r) => Some(r),
            ArmOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub dataset: String,
    pub attribute: String,
    pub method: MethodConfig,
    pub seed: u64,
    pub config: BenchConfig,
    /// Shared by both arms.
    pub split_fingerprint: String,
    pub original: ArmOutcome,
    pub processed: ArmOutcome,
}

impl BenchReport {
    pub fn arm(&self, arm: Arm) -> &ArmOutcome {
        match arm {
            Arm::Original => &self.original,
            Arm::Processed => &self.processed,
        }
    }

    pub fn all_completed(&self) -> bool {
        Arm::ALL.iter().all(|&a| self.arm(a).result().is_some())
    }
}

/// Trains on the original data and on the transformed data, sweeps
/// thresholds on validation and test, and picks a threshold on validation.
///
/// Both arms use the same split of `original`, seeded by `cfg.split.seed`.
/// The processed arm re-fits the transform on the training part and maps
/// the evaluation parts through it. A failing arm is reported, not raised.
pub fn run_bench_stage(
    stage1: &StageOneReport,
    original: &TabularDataset,
    cfg: &BenchConfig,
    registry: &ModelRegistry,
) -> Result<BenchReport> {
    cfg.split.validate()?;
    let adapter = registry.get(&cfg.model)?;
    adapter.check_params(&cfg.model_params)?;
    let indices = split_indices(original, &cfg.split)?;
    let train = original.subset(&indices.train)?;
    let validation = original.subset(&indices.validation)?;
    let test = original.subset(&indices.test)?;
    let seed = stage1.seed;

    let run_arm = |arm: Arm| -> Result<SweepResult> {
        let (train, validation, test, transform_diagnostics) = match arm {
            Arm::Original => (train.clone(), validation.clone(), test.clone(), None),
            Arm::Processed => {
                let fitted = stage1.method.fit(&train, derive_seed(seed, "transform"))?;
                let val = fitted
                    .model
                    .transform_held_out(&validation, derive_seed(seed, "validation"))?;
                let tst = fitted.model.transform_held_out(&test, derive_seed(seed, "test"))?;
                (fitted.output, val, tst, Some(fitted.model.diagnostics()))
            }
        };
        let model = adapter.fit(&train, &cfg.model_params, derive_seed(seed, "model"))?;
        let sweep = |ds: &TabularDataset| -> Result<Vec<SweepRecord>> {
            let scores = model.score(ds)?;
            let unit;
            let weights = if cfg.weighted_evaluation {
                ds.weights()
            } else {
                unit = vec![1.0; ds.n()];
                &unit
            };
            Ok(sweep_thresholds(ds.labels(), &scores, ds.protected(), weights, &cfg.grid)?)
        };
        let validation = sweep(&validation)?;
        let test_records = sweep(&test)?;
        let optimal_threshold = select_optimal_threshold(&validation, cfg.selection_metric)?;
        let test_at_optimum = test_records
            .iter()
            .find(|r| r.threshold == optimal_threshold)
            .cloned()
            .expect("both sweeps share the grid");
        Ok(SweepResult {
            arm,
            selection_metric: cfg.selection_metric,
            optimal_threshold,
            validation,
            test: test_records,
            test_at_optimum,
            model_diagnostics: model.diagnostics(),
            transform_diagnostics,
        })
    };
    let outcome = |arm: Arm| match run_arm(arm) {
        Ok(r) => ArmOutcome::Completed(Box::new(r)),
        Err(e) => ArmOutcome::Failed {
            error: format!("{} arm: {e}", arm.name()),
        },
    };
    Ok(BenchReport {
        dataset: stage1.dataset.clone(),
        attribute: stage1.attribute.clone(),
        method: stage1.method.clone(),
        seed,
        config: cfg.clone(),
        split_fingerprint: indices.fingerprint(),
        original: outcome(Arm::Original),
        processed: outcome(Arm::Processed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_synthetic;
    use crate::preproc::{DirConfig, LfrConfig};

    fn synthetic(seed: u64, disparity: f64) -> LoadedDataset {
        LoadedDataset {
            name: "synthetic".into(),
            attribute: "group".into(),
            data: make_synthetic(seed, 600, disparity).unwrap(),
        }
    }

    #[test]
    fn derived_seeds_differ_by_label_and_base() {
        assert_eq!(derive_seed(1, "a"), derive_seed(1, "a"));
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_ne!(derive_seed(1, "a"), derive_seed(2, "a"));
    }

    #[test]
    fn reweighing_on_independent_data_changes_nothing() {
        let ds = synthetic(3, 0.0);
        let out = run_prep_stage(&ds, &MethodConfig::Reweighing, 0, None).unwrap();
        // the synthetic generator is independent only in expectation
        let ratio = out.processed.weights().iter().fold((f64::MAX, 0.0f64), |(lo, hi), &w| {
            (lo.min(w), hi.max(w))
        });
        assert!(ratio.0 > 0.8 && ratio.1 < 1.25, "{ratio:?}");
        assert_eq!(out.report.original.num_positives, out.report.processed.num_positives);
    }

    #[test]
    fn reweighing_on_exactly_independent_data_is_identity() {
        let x = ndarray::Array2::from_shape_fn((8, 1), |(i, _)| i as f64);
        let data = TabularDataset::from_parts(x, vec![1, 0, 1, 0, 1, 0, 1, 0], vec![0, 0, 1, 1, 0, 0, 1, 1], "t")
            .unwrap();
        let loaded = LoadedDataset {
            name: "t".into(),
            attribute: "group".into(),
            data,
        };
        let out = run_prep_stage(&loaded, &MethodConfig::Reweighing, 0, None).unwrap();
        assert!(out.processed.weights().iter().all(|w| (w - 1.0).abs() < 1e-12));
        let (a, b) = (&out.report.original, &out.report.processed);
        for (x, y) in [
            (&a.disparate_impact, &b.disparate_impact),
            (&a.statistical_parity_difference, &b.statistical_parity_difference),
            (&a.base_rate, &b.base_rate),
        ] {
            assert!((x.clone().unwrap() - y.clone().unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn dir_leaves_label_metrics_untouched() {
        let ds = synthetic(4, 0.3);
        let out = run_prep_stage(&ds, &MethodConfig::Dir(DirConfig::default()), 0, None).unwrap();
        let (a, b) = (&out.report.original, &out.report.processed);
        assert_eq!(a.base_rate, b.base_rate);
        assert_eq!(a.disparate_impact, b.disparate_impact);
        assert_eq!(a.statistical_parity_difference, b.statistical_parity_difference);
        assert_eq!(a.empirical_difference, b.empirical_difference);
        assert_eq!((a.num_positives, a.num_negatives), (b.num_positives, b.num_negatives));
    }

    #[test]
    fn cache_round_trip_reuses_the_transform() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DatasetCache::new(dir.path()).unwrap();
        let ds = synthetic(5, 0.3);
        let method = MethodConfig::Lfr(LfrConfig {
            prototypes: 3,
            max_iter: 30,
            ..Default::default()
        });
        let cold = run_prep_stage(&ds, &method, 9, Some(&cache)).unwrap();
        let warm = run_prep_stage(&ds, &method, 9, Some(&cache)).unwrap();
        assert!(!cold.cache_hit && warm.cache_hit);
        assert_eq!(cold.report, warm.report);
        assert_eq!(load_original(&cold.report, &cache).unwrap(), ds.data);
        let other_seed = run_prep_stage(&ds, &method, 10, Some(&cache)).unwrap();
        assert!(!other_seed.cache_hit);
    }

    #[test]
    fn original_metrics_do_not_depend_on_the_method() {
        let ds = synthetic(6, 0.3);
        let a = run_prep_stage(&ds, &MethodConfig::Reweighing, 1, None).unwrap();
        let b = run_prep_stage(&ds, &MethodConfig::Dir(DirConfig::default()), 1, None).unwrap();
        assert_eq!(
            serde_json::to_vec(&a.report.original).unwrap(),
            serde_json::to_vec(&b.report.original).unwrap()
        );
        assert_eq!(a.report.original_cache_id, b.report.original_cache_id);
    }

    #[test]
    fn bench_is_deterministic_and_complete() {
        let ds = synthetic(7, 0.4);
        let stage1 = run_prep_stage(&ds, &MethodConfig::Reweighing, 2, None).unwrap();
        let registry = ModelRegistry::builtin();
        let cfg = BenchConfig::default();
        let first = run_bench_stage(&stage1.report, &ds.data, &cfg, &registry).unwrap();
        let second = run_bench_stage(&stage1.report, &ds.data, &cfg, &registry).unwrap();
        assert_eq!(serde_json::to_vec(&first).unwrap(), serde_json::to_vec(&second).unwrap());
        assert!(first.all_completed());
        for arm in Arm::ALL {
            let r = first.arm(arm).result().unwrap();
            assert_eq!(r.validation.len(), 99);
            assert_eq!(r.test.len(), 99);
            assert!(cfg.grid.values().contains(&r.optimal_threshold));
            assert_eq!(r.test_at_optimum.threshold, r.optimal_threshold);
        }
    }

    /// Refuses to train on non-unit weights.
    struct UnweightedOnly;

    impl crate::model::ModelAdapter for UnweightedOnly {
        fn name(&self) -> &str {
            "unweighted"
        }

        fn check_params(&self, _: &Params) -> Result<()> {
            Ok(())
        }

        fn fit(&self, train: &TabularDataset, p: &Params, s: u64) -> Result<Box<dyn crate::model::Scorer>> {
            if train.weights().iter().any(|&w| w != 1.0) {
                return Err(Error::Dataset("weighted training data".into()));
            }
            crate::model::LogRegAdapter.fit(train, p, s)
        }
    }

    #[test]
    fn failing_arm_does_not_abort_the_other() {
        let ds = synthetic(8, 0.3);
        let stage1 = run_prep_stage(&ds, &MethodConfig::Reweighing, 2, None).unwrap();
        let mut registry = ModelRegistry::builtin();
        registry.register(Box::new(UnweightedOnly));
        let cfg = BenchConfig {
            model: "unweighted".into(),
            ..Default::default()
        };
        let report = run_bench_stage(&stage1.report, &ds.data, &cfg, &registry).unwrap();
        assert_eq!(report.original.result().unwrap().test.len(), 99);
        match &report.processed {
            ArmOutcome::Failed { error } => {
                assert!(error.contains("processed") && error.contains("weighted"), "{error}")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_model_is_rejected_up_front() {
        let ds = synthetic(9, 0.3);
        let stage1 = run_prep_stage(&ds, &MethodConfig::Reweighing, 0, None).unwrap();
        let cfg = BenchConfig {
            model: "forest".into(),
            ..Default::default()
        };
        assert!(run_bench_stage(&stage1.report, &ds.data, &cfg, &ModelRegistry::builtin()).is_err());
    }

    #[test]
    fn report_round_trips_through_json() {
        let ds = synthetic(10, 0.3);
        let stage1 = run_prep_stage(&ds, &MethodConfig::Reweighing, 0, None).unwrap();
        let json = serde_json::to_string(&stage1.report).unwrap();
        assert_eq!(serde_json::from_str::<StageOneReport>(&json).unwrap(), stage1.report);
        let bench =
            run_bench_stage(&stage1.report, &ds.data, &BenchConfig::default(), &ModelRegistry::builtin())
                .unwrap();
        let json = serde_json::to_string(&bench).unwrap();
        assert_eq!(serde_json::from_str::<BenchReport>(&json).unwrap(), bench);
    }
}
