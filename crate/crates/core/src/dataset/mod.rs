//! Tabular data ingestion, encoding, splitting and caching.
//!
//! Encoded datasets use fixed conventions: the protected indicator is 1 for
//! the privileged group and 0 for the unprivileged group, and the label is 1
//! for the favourable outcome.

pub mod cache;
pub mod encode;
pub mod recipes;
pub mod schema;
pub mod split;
pub mod synthetic;
pub mod table;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cache::{CacheKey, DatasetCache};
pub use encode::{encode, encode_with, EncodeReport, Encoder};
pub use schema::{DatasetSchema, GroupSpec, Predicate, RawValue};
pub use split::{split, split_indices, SplitIndices, SplitSpec};
pub use synthetic::make_synthetic;
pub use table::{load_csv, Cell, RawTable};

pub const UNPRIVILEGED: u8 = 0;
pub const PRIVILEGED: u8 = 1;
pub const FAVORABLE: u8 = 1;
pub const UNFAVORABLE: u8 = 0;

/// How a feature column was produced by the encoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    OneHot { source: String, level: String },
}

impl FeatureKind {
    pub fn is_numeric(&self) -> bool {
        matches!(self, FeatureKind::Numeric)
    }
}

/// Encoded dataset: `n x d` feature matrix plus binary label, binary
/// protected indicator and non-negative instance weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    features: Array2<f64>,
    labels: Vec<u8>,
    protected: Vec<u8>,
    weights: Vec<f64>,
    feature_names: Vec<String>,
    feature_kinds: Vec<FeatureKind>,
    provenance: String,
}

impl TabularDataset {
    /// Builds a dataset, checking every shape and domain invariant.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<u8>,
        protected: Vec<u8>,
        weights: Vec<f64>,
        feature_names: Vec<String>,
        feature_kinds: Vec<FeatureKind>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let ds = Self {
            features,
            labels,
            protected,
            weights,
            feature_names,
            feature_kinds,
            provenance: provenance.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Convenience constructor with unit weights and numeric features named
    /// `x0, x1, ...`.
    pub fn from_parts(
        features: Array2<f64>,
        labels: Vec<u8>,
        protected: Vec<u8>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let d = features.ncols();
        let n = features.nrows();
        Self::new(
            features,
            labels,
            protected,
            vec![1.0; n],
            (0..d).map(|j| format!("x{j}")).collect(),
            vec![FeatureKind::Numeric; d],
            provenance,
        )
    }

    fn validate(&self) -> Result<()> {
        let n = self.features.nrows();
        let d = self.features.ncols();
        if n == 0 {
            return Err(Error::Dataset("dataset has no rows".into()));
        }
        if d == 0 {
            return Err(Error::Dataset("dataset has no feature columns".into()));
        }
        if self.labels.len() != n || self.protected.len() != n || self.weights.len() != n {
            return Err(Error::Dataset(format!(
                "length mismatch: {n} feature rows, {} labels, {} protected, {} weights",
                self.labels.len(),
                self.protected.len(),
                self.weights.len()
            )));
        }
        if self.feature_names.len() != d || self.feature_kinds.len() != d {
            return Err(Error::Dataset(format!(
                "{d} feature columns but {} names and {} kinds",
                self.feature_names.len(),
                self.feature_kinds.len()
            )));
        }
        if let Some(i) = self.labels.iter().position(|&y| y > 1) {
            return Err(Error::Dataset(format!("label at row {i} is not binary")));
        }
        if let Some(i) = self.protected.iter().position(|&s| s > 1) {
            return Err(Error::Dataset(format!(
                "protected indicator at row {i} is not binary"
            )));
        }
        if let Some(i) = self
            .weights
            .iter()
            .position(|w| !w.is_finite() || *w < 0.0)
        {
            return Err(Error::Dataset(format!(
                "weight at row {i} is negative or not finite"
            )));
        }
        if self.weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Dataset("weights have zero total".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn protected(&self) -> &[u8] {
        &self.protected
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_kinds(&self) -> &[FeatureKind] {
        &self.feature_kinds
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Indices of the numeric (non one-hot) feature columns.
    pub fn numeric_columns(&self) -> Vec<usize> {
        self.feature_kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| k.is_numeric())
            .map(|(j, _)| j)
            .collect()
    }

    /// One-hot blocks as `(source column, feature indices)` in column order.
    pub fn one_hot_blocks(&self) -> Vec<(String, Vec<usize>)> {
        let mut blocks: Vec<(String, Vec<usize>)> = Vec::new();
        for (j, kind) in self.feature_kinds.iter().enumerate() {
            if let FeatureKind::OneHot { source, .. } = kind {
                match blocks.iter_mut().find(|(s, _)| s == source) {
                    Some((_, cols)) => cols.push(j),
                    None => blocks.push((source.clone(), vec![j])),
                }
            }
        }
        blocks
    }

    pub fn group_count(&self, group: u8) -> usize {
        self.protected.iter().filter(|&&s| s == group).count()
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        self.weights = weights;
        self.validate()?;
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<u8>) -> Result<Self> {
        self.labels = labels;
        self.validate()?;
        Ok(self)
    }

    pub fn with_features(mut self, features: Array2<f64>) -> Result<Self> {
        if features.dim() != self.features.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                actual: features.ncols(),
            });
        }
        self.features = features;
        Ok(self)
    }

    pub fn with_protected(mut self, protected: Vec<u8>) -> Result<Self> {
        self.protected = protected;
        self.validate()?;
        Ok(self)
    }

    /// Appends a step to the lineage tag, e.g. `german` -> `german>RW`.
    pub fn with_lineage(mut self, step: &str) -> Self {
        self.provenance = format!("{}>{step}", self.provenance);
        self
    }

    /// Unit weights, keeping everything else.
    pub fn unweighted(mut self) -> Self {
        self.weights.iter_mut().for_each(|w| *w = 1.0);
        self
    }

    /// Rows selected by `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Dataset("empty subset".into()));
        }
        let features = self.features.select(Axis(0), indices);
        Self::new(
            features,
            indices.iter().map(|&i| self.labels[i]).collect(),
            indices.iter().map(|&i| self.protected[i]).collect(),
            indices.iter().map(|&i| self.weights[i]).collect(),
            self.feature_names.clone(),
            self.feature_kinds.clone(),
            self.provenance.clone(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_non_binary_labels() {
        let err = TabularDataset::from_parts(array![[1.0], [2.0]], vec![0, 2], vec![0, 1], "t");
        assert!(err.is_err());
    }

    #[test]
    fn rejects_zero_weight_total() {
        let ds = TabularDataset::from_parts(array![[1.0], [2.0]], vec![0, 1], vec![0, 1], "t")
            .unwrap();
        assert!(ds.with_weights(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn one_hot_blocks_group_by_source() {
        let kinds = vec![
            FeatureKind::Numeric,
            FeatureKind::OneHot {
                source: "c".into(),
                level: "a".into(),
            },
            FeatureKind::OneHot {
                source: "c".into(),
                level: "b".into(),
            },
        ];
        let ds = TabularDataset::new(
            array![[1.0, 1.0, 0.0]],
            vec![1],
            vec![0],
            vec![1.0],
            vec!["x".into(), "c=a".into(), "c=b".into()],
            kinds,
            "t",
        )
        .unwrap();
        assert_eq!(ds.numeric_columns(), vec![0]);
        assert_eq!(ds.one_hot_blocks(), vec![("c".to_string(), vec![1, 2])]);
        assert_eq!(ds.with_lineage("RW").provenance(), "t>RW");
    }
}
