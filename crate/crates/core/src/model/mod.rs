//! Probabilistic classifiers trained on (possibly weighted) tabular data.
//!
//! New classifiers plug in through [`ModelAdapter`] and a [`ModelRegistry`]
//! keyed by name; the pipeline never names a concrete model type.

pub mod logreg;

use std::collections::BTreeMap;
use std::fmt;

pub use logreg::{train_logreg, train_logreg_from, LogRegConfig, TrainedModel, TrainingDiagnostics};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::params::Params;

/// A fitted model that maps records to scores in `[0, 1]`.
pub trait Scorer: Send + Sync + fmt::Debug {
    fn score(&self, ds: &TabularDataset) -> Result<Vec<f64>>;

    fn diagnostics(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

pub trait ModelAdapter: Send + Sync {
    fn name(&self) -> &str;

    /// Rejects parameter blocks the adapter cannot use.
    fn check_params(&self, params: &Params) -> Result<()>;

    fn fit(&self, train: &TabularDataset, params: &Params, seed: u64) -> Result<Box<dyn Scorer>>;
}

impl Scorer for TrainedModel {
    fn score(&self, ds: &TabularDataset) -> Result<Vec<f64>> {
        self.predict_scores(ds)
    }

    fn diagnostics(&self) -> serde_json::Value {
        serde_json::to_value(self.diagnostics).expect("plain struct")
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LogRegAdapter;

impl LogRegAdapter {
    fn config(params: &Params, seed: u64) -> Result<LogRegConfig> {
        let mut value = serde_json::to_value(params).expect("params are plain JSON");
        if let serde_json::Value::Object(map) = &mut value {
            map.entry("seed").or_insert(seed.into());
        }
        let cfg: LogRegConfig = serde_path_to_error::deserialize(value).map_err(|e| Error::Param {
            name: format!("logreg.{}", e.path()),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ModelAdapter for LogRegAdapter {
    fn name(&self) -> &str {
        "logreg"
    }

    fn check_params(&self, params: &Params) -> Result<()> {
        Self::config(params, 0).map(|_| ())
    }

    fn fit(&self, train: &TabularDataset, params: &Params, seed: u64) -> Result<Box<dyn Scorer>> {
        let cfg = Self::config(params, seed)?;
        Ok(Box::new(train_logreg(train, &cfg)?))
    }
}

pub struct ModelRegistry {
    adapters: BTreeMap<String, Box<dyn ModelAdapter>>,
}

impl ModelRegistry {
    pub fn empty() -> Self {
        Self {
            adapters: BTreeMap::new(),
        }
    }

    /// Registry holding every adapter shipped with the crate.
    pub fn builtin() -> Self {
        let mut registry = Self::empty();
        registry.register(Box::new(LogRegAdapter));
        registry
    }

    /// Replaces any adapter already registered under the same name.
    pub fn register(&mut self, adapter: Box<dyn ModelAdapter>) {
        self.adapters.insert(adapter.name().to_string(), adapter);
    }

    pub fn get(&self, name: &str) -> Result<&dyn ModelAdapter> {
        self.adapters.get(name).map(|a| a.as_ref()).ok_or_else(|| Error::Param {
            name: "model".into(),
            message: format!(
                "unknown model `{name}`; registered: {}",
                self.names().collect::<Vec<_>>().join(", ")
            ),
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.adapters.keys().map(String::as_str)
    }
}

impl Default for ModelRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug)]
    struct Constant(f64);

    impl Scorer for Constant {
        fn score(&self, ds: &TabularDataset) -> Result<Vec<f64>> {
            Ok(vec![self.0; ds.n()])
        }
    }

    struct ConstantAdapter;

    impl ModelAdapter for ConstantAdapter {
        fn name(&self) -> &str {
            "constant"
        }

        fn check_params(&self, params: &Params) -> Result<()> {
            params.check_keys("constant", &["value"])
        }

        fn fit(&self, _: &TabularDataset, params: &Params, _: u64) -> Result<Box<dyn Scorer>> {
            Ok(Box::new(Constant(params.f64_or("value", 0.5)?)))
        }
    }

    #[test]
    fn registry_dispatches_by_name() {
        let ds = crate::dataset::make_synthetic(2, 100, 0.2).unwrap();
        let mut registry = ModelRegistry::builtin();
        registry.register(Box::new(ConstantAdapter));
        assert_eq!(registry.names().collect::<Vec<_>>(), ["constant", "logreg"]);

        let params = Params::from_pairs(&["value=0.25"]).unwrap();
        let scorer = registry.get("constant").unwrap().fit(&ds, &params, 0).unwrap();
        assert!(scorer.score(&ds).unwrap().iter().all(|&s| s == 0.25));

        let logreg = registry.get("logreg").unwrap();
        let scores = logreg.fit(&ds, &Params::default(), 0).unwrap().score(&ds).unwrap();
        assert!(scores.iter().all(|&s| s > 0.0 && s < 1.0));
        assert!(registry.get("forest").is_err());
    }

    #[test]
    fn logreg_params_validated() {
        let adapter = LogRegAdapter;
        assert!(adapter.check_params(&Params::from_pairs(&["l2=0.1", "tol=1e-8"]).unwrap()).is_ok());
        assert!(adapter.check_params(&Params::from_pairs(&["depth=3"]).unwrap()).is_err());
        assert!(adapter.check_params(&Params::from_pairs(&["tol=0"]).unwrap()).is_err());
        assert!(adapter.check_params(&Params::from_pairs(&["l2=-1"]).unwrap()).is_err());
    }
}
