use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::SplitSpec;
use crate::error::{Error, Result};
use crate::metrics::FairnessMetric;
use crate::model::ModelRegistry;
use crate::params::Params;
use crate::pipeline::{derive_seed, DatasetSource, ThresholdGrid};
use crate::preproc::{Method, MethodConfig};

/// A dataset as written in the batch file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetEntry {
    /// Bundled dataset name or schema file path.
    Named(String),
    Synthetic { synthetic: SyntheticEntry },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticEntry {
    pub n: usize,
    pub disparity: f64,
    #[serde(default)]
    pub seed: u64,
}

impl DatasetEntry {
    /// Key used by per-dataset attribute lists and in job listings.
    pub fn label(&self) -> String {
        match self {
            DatasetEntry::Named(s) => s.clone(),
            DatasetEntry::Synthetic { .. } => "synthetic".into(),
        }
    }

    /// Schema paths are resolved against `base`.
    pub fn resolve(&self, base: &Path) -> Result<DatasetSource> {
        match self {
            DatasetEntry::Named(s) => match DatasetSource::parse(s)? {
                DatasetSource::Schema { path } if path.is_relative() => Ok(DatasetSource::Schema {
                    path: base.join(path),
                }),
                other => Ok(other),
            },
            DatasetEntry::Synthetic { synthetic } => Ok(DatasetSource::Synthetic {
                n: synthetic.n,
                disparity: synthetic.disparity,
                seed: synthetic.seed,
            }),
        }
    }
}

/// `name` alone or `{ name, params }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum RawEntry {
    Name(String),
    Full {
        name: String,
        #[serde(default)]
        params: Params,
    },
}

impl RawEntry {
    fn into_parts(self) -> (String, Params) {
        match self {
            RawEntry::Name(name) => (name, Params::default()),
            RawEntry::Full { name, params } => (name, params),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub name: String,
    #[serde(default)]
    pub params: Params,
}

/// Either one list applied to every dataset or a list per dataset label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttributeSelection {
    All(Vec<String>),
    PerDataset(BTreeMap<String, Vec<String>>),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSplit {
    train: Option<f64>,
    validation: Option<f64>,
    test: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBatch {
    datasets: Vec<DatasetEntry>,
    #[serde(default)]
    sensitive_attributes: Option<AttributeSelection>,
    methods: Vec<RawEntry>,
    #[serde(default)]
    models: Option<Vec<RawEntry>>,
    #[serde(default)]
    seeds: Option<Vec<u64>>,
    #[serde(default)]
    split: Option<RawSplit>,
    #[serde(default)]
    selection_metric: Option<String>,
    #[serde(default)]
    output: Option<PathBuf>,
    #[serde(default)]
    parallelism: Option<usize>,
}

/// A validated experiment matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSpec {
    pub datasets: Vec<DatasetEntry>,
    /// `None` uses each dataset's default attribute.
    pub sensitive_attributes: Option<AttributeSelection>,
    pub methods: Vec<MethodConfig>,
    pub models: Vec<ModelEntry>,
    pub seeds: Vec<u64>,
    pub split: SplitSpec,
    pub grid: ThresholdGrid,
    pub selection_metric: FairnessMetric,
    pub output: PathBuf,
    pub parallelism: usize,
    /// Directory against which relative schema paths resolve.
    pub base_dir: PathBuf,
}

fn config_error(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

fn non_empty<T>(items: &[T], key: &str) -> Result<()> {
    if items.is_empty() {
        return Err(config_error(key, "must list at least one entry"));
    }
    Ok(())
}

fn split_from(raw: Option<RawSplit>) -> Result<SplitSpec> {
    let Some(raw) = raw else {
        return Ok(SplitSpec::default());
    };
    let spec = SplitSpec {
        train: raw.train.unwrap_or(0.0),
        validation: raw.validation.unwrap_or(0.0),
        test: raw.test.unwrap_or(0.0),
        seed: 0,
    };
    let sum = spec.train + spec.validation + spec.test;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(config_error(
            "split",
            format!("train + validation + test must sum to 1, got {sum}"),
        ));
    }
    spec.validate()?;
    Ok(spec)
}

/// Parses and validates a batch file body; relative schema paths resolve
/// against `base_dir`.
pub fn parse_batch_yaml(text: &str, base_dir: &Path) -> Result<BatchSpec> {
    let de = serde_yaml::Deserializer::from_str(text);
    let raw: RawBatch = serde_path_to_error::deserialize(de)
        .map_err(|e| config_error(e.path().to_string(), e.inner().to_string()))?;

    non_empty(&raw.datasets, "datasets")?;
    non_empty(&raw.methods, "methods")?;
    let methods = raw
        .methods
        .into_iter()
        .enumerate()
        .map(|(i, entry)| {
            let (name, params) = entry.into_parts();
            let method: Method = name.parse().map_err(|e: Error| config_error(format!("methods[{i}]"), e.to_string()))?;
            MethodConfig::from_params(method, &params)
                .map_err(|e| config_error(format!("methods[{i}].params"), e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let models: Vec<ModelEntry> = match raw.models {
        Some(models) => {
            non_empty(&models, "models")?;
            models
                .into_iter()
                .map(|m| {
                    let (name, params) = m.into_parts();
                    ModelEntry { name, params }
                })
                .collect()
        }
        None => vec![ModelEntry {
            name: "logreg".into(),
            params: Params::default(),
        }],
    };
    let seeds = raw.seeds.unwrap_or_else(|| vec![0]);
    non_empty(&seeds, "seeds")?;
    if let Some(AttributeSelection::All(list)) = &raw.sensitive_attributes {
        non_empty(list, "sensitive_attributes")?;
    }
    let selection_metric = match raw.selection_metric {
        Some(s) => s.parse().map_err(|e: String| config_error("selection_metric", e))?,
        None => FairnessMetric::StatisticalParityDifference,
    };
    let parallelism = raw.parallelism.unwrap_or(1);
    if parallelism == 0 {
        return Err(config_error("parallelism", "must be at least 1"));
    }
    Ok(BatchSpec {
        datasets: raw.datasets,
        sensitive_attributes: raw.sensitive_attributes,
        methods,
        models,
        seeds,
        split: split_from(raw.split)?,
        grid: ThresholdGrid::standard(),
        selection_metric,
        output: raw.output.unwrap_or_else(|| PathBuf::from("results")),
        parallelism,
        base_dir: base_dir.to_path_buf(),
    })
}

/// Reads a batch file; schema paths resolve against its directory.
pub fn load_batch_file(path: &Path) -> Result<BatchSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_batch_yaml(&text, base).map_err(|e| e.context(path.display().to_string()))
}

/// One concrete cell of the matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobSpec {
    pub id: String,
    pub dataset: DatasetEntry,
    #[serde(skip)]
    pub source: DatasetSource,
    pub attribute: String,
    pub method: MethodConfig,
    pub model: ModelEntry,
    pub seed: u64,
    pub split: SplitSpec,
    pub selection_metric: FairnessMetric,
}

#[derive(Serialize)]
struct CanonicalJob<'a> {
    dataset: &'a DatasetEntry,
    attribute: &'a str,
    method: &'a MethodConfig,
    model: &'a ModelEntry,
    seed: u64,
    split: &'a SplitSpec,
    selection_metric: FairnessMetric,
}

impl JobSpec {
    /// Seed for every random choice of the job, split included.
    pub fn job_seed(&self) -> u64 {
        derive_seed(self.seed, &self.id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub jobs: Vec<JobSpec>,
    /// (dataset, attribute) pairs dropped because the dataset lacks the
    /// attribute, counted once per pair.
    pub skipped: Vec<(String, String)>,
}

/// Cartesian product of datasets, attributes, methods, models and seeds,
/// ordered by canonical serialization.
pub fn expand_jobs(spec: &BatchSpec, registry: &ModelRegistry) -> Result<Expansion> {
    for (i, m) in spec.models.iter().enumerate() {
        registry
            .get(&m.name)
            .and_then(|a| a.check_params(&m.params))
            .map_err(|e| config_error(format!("models[{i}]"), e.to_string()))?;
    }
    let mut keyed = BTreeMap::new();
    let mut skipped = Vec::new();
    for (i, entry) in spec.datasets.iter().enumerate() {
        let source = entry
            .resolve(&spec.base_dir)
            .map_err(|e| config_error(format!("datasets[{i}]"), e.to_string()))?;
        let available = source
            .attributes()
            .map_err(|e| config_error(format!("datasets[{i}]"), e.to_string()))?;
        let wanted = match &spec.sensitive_attributes {
            None => vec![source.default_attribute()?],
            Some(AttributeSelection::All(list)) => list.clone(),
            Some(AttributeSelection::PerDataset(map)) => match map.get(&entry.label()) {
                Some(list) => list.clone(),
                None => vec![source.default_attribute()?],
            },
        };
        for attribute in wanted {
            if !available.contains(&attribute) {
                skipped.push((entry.label(), attribute));
                continue;
            }
            for method in &spec.methods {
                for model in &spec.models {
                    for &seed in &spec.seeds {
                        let canonical = serde_json::to_string(&CanonicalJob {
                            dataset: entry,
                            attribute: &attribute,
                            method,
                            model,
                            seed,
                            split: &spec.split,
                            selection_metric: spec.selection_metric,
                        })
                        .expect("job fields serialize");
                        let id = hex::encode(&Sha256::digest(canonical.as_bytes())[..8]);
                        keyed.entry(canonical).or_insert(JobSpec {
                            id,
                            dataset: entry.clone(),
                            source: source.clone(),
                            attribute: attribute.clone(),
                            method: method.clone(),
                            model: model.clone(),
                            seed,
                            split: spec.split,
                            selection_metric: spec.selection_metric,
                        });
                    }
                }
            }
        }
    }
    if keyed.is_empty() {
        return Err(config_error(
            "sensitive_attributes",
            "no valid (dataset, attribute) combination; nothing to run",
        ));
    }
    let jobs: Vec<JobSpec> = keyed.into_values().collect();
    let mut ids: Vec<&str> = jobs.iter().map(|j| j.id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Dataset("job id collision".into()));
    }
    Ok(Expansion { jobs, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<BatchSpec> {
        parse_batch_yaml(text, Path::new("."))
    }

    #[test]
    fn minimal_spec_gets_defaults() {
        let spec = parse("datasets: [german]\nmethods: [RW]\nmodels: [logreg]\nseeds: [1]\n").unwrap();
        assert_eq!(spec.split, SplitSpec::default());
        assert_eq!(spec.grid.len(), 99);
        assert_eq!(spec.parallelism, 1);
        assert_eq!(spec.methods, [MethodConfig::Reweighing]);
        assert_eq!(spec.selection_metric, FairnessMetric::StatisticalParityDifference);
    }

    #[test]
    fn fraction_sum_rule_is_cited() {
        let err = parse("datasets: [german]\nmethods: [RW]\nsplit: { train: 0.9 }\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("sum to 1"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected_with_path() {
        let err = parse("datasets: [german]\nmethods: [RW]\nthreads: 3\n").unwrap_err().to_string();
        assert!(err.contains("threads"), "{err}");
        let err = parse("datasets: [german]\nmethods: [{name: DIR, params: {lambda: 1}}]\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("methods[0]"), "{err}");
        assert!(parse("datasets: []\nmethods: [RW]\n").is_err());
        assert!(parse("datasets: [german]\nmethods: [RW]\nparallelism: 0\n").is_err());
        assert!(parse("datasets: [german]\nmethods: [RW]\nselection_metric: accuracy\n").is_err());
    }

    #[test]
    fn lists_and_params_parse() {
        let spec = parse(
            "datasets: [german, adult]\nmethods:\n  - RW\n  - { name: LFR, params: { a_z: 5 } }\n\
             models: [{ name: logreg, params: { l2: 0.01 } }]\nseeds: [1, 2]\nselection_metric: DI\n\
             parallelism: 4\noutput: out\n",
        )
        .unwrap();
        assert_eq!(spec.datasets.len(), 2);
        assert_eq!(spec.methods.len(), 2);
        assert_eq!(spec.models[0].params.f64_or("l2", 0.0).unwrap(), 0.01);
        assert_eq!(spec.selection_metric, FairnessMetric::DisparateImpact);
        assert_eq!(spec.output, PathBuf::from("out"));
    }

    #[test]
    fn expansion_is_the_product() {
        let spec = parse("datasets: [german, compas]\nmethods: [RW, DIR]\nseeds: [7]\n").unwrap();
        let exp = expand_jobs(&spec, &ModelRegistry::builtin()).unwrap();
        assert_eq!(exp.jobs.len(), 4);
        assert!(exp.skipped.is_empty());
        let again = expand_jobs(&parse("datasets: [german, compas]\nmethods: [RW, DIR]\nseeds: [7]\n").unwrap(), &ModelRegistry::builtin())
            .unwrap();
        let ids = |e: &Expansion| e.jobs.iter().map(|j| j.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&exp), ids(&again));
    }

    #[test]
    fn missing_attributes_are_skipped_and_counted() {
        let spec = parse("datasets: [german, compas]\nsensitive_attributes: [sex, race]\nmethods: [RW]\n").unwrap();
        let exp = expand_jobs(&spec, &ModelRegistry::builtin()).unwrap();
        assert_eq!(exp.skipped, [("german".to_string(), "race".to_string())]);
        assert_eq!(exp.jobs.len(), 3);
        let none = parse("datasets: [german]\nsensitive_attributes: [religion]\nmethods: [RW]\n").unwrap();
        assert!(expand_jobs(&none, &ModelRegistry::builtin()).is_err());
    }

    #[test]
    fn unknown_model_rejected_at_expansion() {
        let spec = parse("datasets: [german]\nmethods: [RW]\nmodels: [svm]\n").unwrap();
        assert!(expand_jobs(&spec, &ModelRegistry::builtin()).is_err());
    }

    #[test]
    fn ids_are_stable_and_seeds_independent() {
        let one = parse("datasets: [german]\nmethods: [RW]\nseeds: [1]\n").unwrap();
        let two = parse("datasets: [german]\nmethods: [RW, DIR]\nseeds: [1]\n").unwrap();
        let a = expand_jobs(&one, &ModelRegistry::builtin()).unwrap();
        let b = expand_jobs(&two, &ModelRegistry::builtin()).unwrap();
        let rw = b.jobs.iter().find(|j| j.method == MethodConfig::Reweighing).unwrap();
        assert_eq!(a.jobs[0].id, rw.id);
        assert_eq!(a.jobs[0].job_seed(), rw.job_seed());
    }

    #[test]
    fn synthetic_entry() {
        let spec = parse(
            "datasets: [{ synthetic: { n: 100, disparity: 0.3 } }]\nmethods: [RW]\nsensitive_attributes: [group]\n",
        )
        .unwrap();
        let exp = expand_jobs(&spec, &ModelRegistry::builtin()).unwrap();
        assert_eq!(exp.jobs.len(), 1);
        assert!(matches!(exp.jobs[0].source, DatasetSource::Synthetic { n: 100, .. }));
    }
}
