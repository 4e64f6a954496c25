//! Free-form method and model parameter blocks.
//!
//! Parameters arrive either as a YAML mapping (batch files) or as `key=value`
//! strings (command line). Both become a [`Params`] map of JSON values, which
//! each consumer reads with typed accessors that reject unknown keys.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Params(BTreeMap<String, Value>);

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `key=value` pairs; values are read as YAML scalars so that
    /// `k=3`, `k=0.5`, `k=true` and `k=text` get their natural types.
    pub fn from_pairs<S: AsRef<str>>(pairs: &[S]) -> Result<Self> {
        let mut out = BTreeMap::new();
        for pair in pairs {
            let pair = pair.as_ref();
            let (key, raw) = pair.split_once('=').ok_or_else(|| Error::Param {
                name: pair.to_string(),
                message: "expected key=value".into(),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Param {
                    name: pair.to_string(),
                    message: "empty key".into(),
                });
            }
            let value: Value = serde_yaml::from_str(raw.trim()).map_err(|e| Error::Param {
                name: key.to_string(),
                message: e.to_string(),
            })?;
            out.insert(key.to_string(), value);
        }
        Ok(Self(out))
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.0.insert(key.to_string(), value.into());
        self
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.0.get(key)
    }

    /// Fails on the first key not in `allowed`.
    pub fn check_keys(&self, owner: &str, allowed: &[&str]) -> Result<()> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(Error::Param {
                name: k.to_string(),
                message: format!(
                    "unknown parameter for {owner}; expected one of: {}",
                    allowed.join(", ")
                ),
            }),
            None => Ok(()),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v.as_f64().ok_or_else(|| type_err(key, "a number", v)),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_u64()
                .map(|u| u as usize)
                .ok_or_else(|| type_err(key, "a non-negative integer", v)),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_u64()
                .ok_or_else(|| type_err(key, "a non-negative integer", v)),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v.as_bool().ok_or_else(|| type_err(key, "a boolean", v)),
        }
    }

    pub fn str_list(&self, key: &str) -> Result<Option<Vec<String>>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(vec![s.clone()])),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| {
                    v.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| type_err(key, "a list of strings", v))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(v) => Err(type_err(key, "a list of strings", v)),
        }
    }
}

fn type_err(key: &str, expected: &str, got: &Value) -> Error {
    Error::Param {
        name: key.to_string(),
        message: format!("expected {expected}, got {got}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_get_natural_types() {
        let p = Params::from_pairs(&["k=3", "a_z=0.5", "standardize=true", "name=x"]).unwrap();
        assert_eq!(p.usize_or("k", 0).unwrap(), 3);
        assert_eq!(p.f64_or("a_z", 0.0).unwrap(), 0.5);
        assert!(p.bool_or("standardize", false).unwrap());
        assert_eq!(p.f64_or("missing", 2.0).unwrap(), 2.0);
        assert!(p.usize_or("name", 0).is_err());
    }

    #[test]
    fn integers_read_as_reals() {
        let p = Params::from_pairs(&["lambda=1"]).unwrap();
        assert_eq!(p.f64_or("lambda", 0.0).unwrap(), 1.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        let p = Params::new().with("bogus", 1);
        let err = p.check_keys("reweighing", &[]).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn malformed_pair() {
        assert!(Params::from_pairs(&["novalue"]).is_err());
    }
}
