use serde::{Deserialize, Serialize};

use super::consistency::{consistency_with, ConsistencyConfig};
use super::outcome::{self, Measured};
use super::{ratio_and_difference, weighted_rate};
use crate::dataset::{TabularDataset, PRIVILEGED, UNPRIVILEGED};
use crate::MetricError;

/// Data-level metrics of a labelled dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetrics {
    #[serde(with = "outcome")]
    pub base_rate: Measured,
    #[serde(with = "outcome")]
    pub base_rate_unprivileged: Measured,
    #[serde(with = "outcome")]
    pub base_rate_privileged: Measured,
    #[serde(with = "outcome")]
    pub consistency: Measured,
    #[serde(with = "outcome")]
    pub disparate_impact: Measured,
    #[serde(with = "outcome")]
    pub statistical_parity_difference: Measured,
    pub num_positives: usize,
    pub num_negatives: usize,
    #[serde(with = "outcome")]
    pub empirical_difference: Measured,
}

/// Weighted favourable-label rate, overall or within one group.
pub fn base_rate(ds: &TabularDataset, group: Option<u8>) -> Measured {
    weighted_rate(ds.labels(), ds.protected(), ds.weights(), group)
}

/// `P(Y=1 | S=0) / P(Y=1 | S=1)`, weighted.
pub fn disparate_impact(ds: &TabularDataset) -> Measured {
    group_rate_comparison(ds).0
}

/// `P(Y=1 | S=0) - P(Y=1 | S=1)`, weighted.
pub fn statistical_parity_difference(ds: &TabularDataset) -> Measured {
    group_rate_comparison(ds).1
}

fn group_rate_comparison(ds: &TabularDataset) -> (Measured, Measured) {
    ratio_and_difference(
        base_rate(ds, Some(UNPRIVILEGED)),
        base_rate(ds, Some(PRIVILEGED)),
    )
}

/// Unweighted `(positives, negatives)`.
pub fn count_labels(ds: &TabularDataset) -> (usize, usize) {
    let pos = ds.labels().iter().filter(|&&y| y == 1).count();
    (pos, ds.n() - pos)
}

/// Smoothed differential fairness of the label.
///
/// With unweighted counts and a symmetric Dirichlet prior of total mass 1,
/// `p(y|s) = (count(y, s) + 1/2) / (count(s) + 1)`; the result is the largest
/// absolute log-ratio of `p(y|0)` to `p(y|1)` over both label values.
pub fn empirical_difference(ds: &TabularDataset) -> Measured {
    let mut counts = [[0usize; 2]; 2];
    for (&y, &s) in ds.labels().iter().zip(ds.protected()) {
        counts[s as usize][y as usize] += 1;
    }
    for group in [UNPRIVILEGED, PRIVILEGED] {
        if counts[group as usize].iter().sum::<usize>() == 0 {
            return Err(MetricError::EmptyGroup { group });
        }
    }
    let smoothed = |s: usize, y: usize| {
        let total = (counts[s][0] + counts[s][1]) as f64;
        (counts[s][y] as f64 + 0.5) / (total + 1.0)
    };
    Ok((0..2)
        .map(|y| (smoothed(0, y) / smoothed(1, y)).ln().abs())
        .fold(0.0, f64::max))
}

/// Every data-level metric with default consistency settings.
pub fn dataset_metrics(ds: &TabularDataset) -> DatasetMetrics {
    dataset_metrics_with(ds, &ConsistencyConfig::default())
}

pub fn dataset_metrics_with(ds: &TabularDataset, cfg: &ConsistencyConfig) -> DatasetMetrics {
    let (num_positives, num_negatives) = count_labels(ds);
    let base_rate_unprivileged = base_rate(ds, Some(UNPRIVILEGED));
    let base_rate_privileged = base_rate(ds, Some(PRIVILEGED));
    let (disparate_impact, statistical_parity_difference) =
        ratio_and_difference(base_rate_unprivileged.clone(), base_rate_privileged.clone());
    DatasetMetrics {
        base_rate: base_rate(ds, None),
        base_rate_unprivileged,
        base_rate_privileged,
        consistency: consistency_with(ds, cfg),
        disparate_impact,
        statistical_parity_difference,
        num_positives,
        num_negatives,
        empirical_difference: empirical_difference(ds),
    }
}
