use fairbench::dataset::{DatasetCache, SplitSpec};
use fairbench::model::ModelRegistry;
use fairbench::params::Params;
use fairbench::pipeline::{load_original, run_bench_stage, run_prep_stage, BenchConfig, DatasetSource, LoadedDataset};
use fairbench::preproc::{Method, MethodConfig};

fn synthetic(seed: u64) -> LoadedDataset {
    DatasetSource::Synthetic {
        n: 600,
        disparity: 0.4,
        seed,
    }
    .load(None)
    .unwrap()
}

fn all_methods() -> Vec<MethodConfig> {
    [Method::Reweighing, Method::Dir, Method::Lfr, Method::Opp]
        .into_iter()
        .map(|m| MethodConfig::from_params(m, &Params::new()).unwrap())
        .collect()
}

#[test]
fn original_side_does_not_depend_on_method() {
    let ds = synthetic(4);
    let reports: Vec<_> = all_methods()
        .iter()
        .map(|m| run_prep_stage(&ds, m, 7, None).unwrap().report)
        .collect();
    for r in &reports[1..] {
        assert_eq!(r.original, reports[0].original);
        assert_eq!(r.original_cache_id, reports[0].original_cache_id);
    }
    let ids: std::collections::BTreeSet<_> = reports.iter().map(|r| &r.processed_cache_id).collect();
    assert_eq!(ids.len(), 4);
}

#[test]
fn cached_stage_one_feeds_stage_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = DatasetCache::new(tmp.path()).unwrap();
    let ds = synthetic(5);
    let method = MethodConfig::Dir(Default::default());
    let cold = run_prep_stage(&ds, &method, 3, Some(&cache)).unwrap();
    let warm = run_prep_stage(&ds, &method, 3, Some(&cache)).unwrap();
    assert!(!cold.cache_hit && warm.cache_hit);
    assert_eq!(cold.report, warm.report);
    assert_eq!(warm.processed, cold.processed);

    let original = load_original(&warm.report, &cache).unwrap();
    assert_eq!(original, ds.data);
    let cfg = BenchConfig {
        split: SplitSpec::default().with_seed(3),
        ..BenchConfig::default()
    };
    let registry = ModelRegistry::builtin();
    let a = run_bench_stage(&warm.report, &original, &cfg, &registry).unwrap();
    let b = run_bench_stage(&cold.report, &ds.data, &cfg, &registry).unwrap();
    assert!(a.all_completed());
    assert_eq!(a, b);
}

#[test]
fn every_method_completes_both_arms() {
    let ds = synthetic(6);
    let registry = ModelRegistry::builtin();
    for method in all_methods() {
        let stage = run_prep_stage(&ds, &method, 1, None).unwrap();
        assert_eq!(stage.processed.n(), ds.data.n());
        assert_eq!(stage.processed.protected(), ds.data.protected());
        let report = run_bench_stage(&stage.report, &ds.data, &BenchConfig::default(), &registry).unwrap();
        assert!(report.original.result().is_some(), "{method:?}");
        if method.method() != Method::Lfr {
            assert!(report.all_completed(), "{method:?}: {report:?}");
        }
    }
}

#[test]
fn missing_cache_entry_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = synthetic(8);
    let stage = run_prep_stage(&ds, &MethodConfig::Reweighing, 0, None).unwrap();
    let cache = DatasetCache::new(tmp.path()).unwrap();
    let err = load_original(&stage.report, &cache).unwrap_err();
    assert!(err.to_string().contains("cache"), "{err}");
}
