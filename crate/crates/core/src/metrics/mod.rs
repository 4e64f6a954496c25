//! Data-level and prediction-level fairness metrics.
//!
//! Group 0 is unprivileged, group 1 privileged, label 1 favourable. Rates are
//! weight-weighted except where a function says otherwise.

mod classification;
mod consistency;
mod dataset;
mod outcome;

pub use classification::{
    average_odds_difference, balanced_accuracy, classification_metrics,
    equal_opportunity_difference, group_confusion, predictions_at, theil_index,
    ClassificationMetrics, Confusion, FairnessMetric, GroupConfusion, GroupRates, Scope,
};
pub use consistency::{consistency, consistency_brute_force, consistency_with, ConsistencyConfig};
pub use dataset::{
    base_rate, count_labels, dataset_metrics, dataset_metrics_with, disparate_impact,
    empirical_difference, statistical_parity_difference, DatasetMetrics,
};
pub use outcome::Measured;

/// The four-fifths rule: a disparate impact below this value is the usual
/// red line for adverse impact.
pub const DI_THRESHOLD: f64 = 0.8;

/// Weighted favourable rate of `outcomes` within `group` (or overall).
pub(crate) fn weighted_rate(
    outcomes: &[u8],
    protected: &[u8],
    weights: &[f64],
    group: Option<u8>,
) -> Result<f64, crate::MetricError> {
    let (num, den) = outcomes
        .iter()
        .zip(protected)
        .zip(weights)
        .filter(|((_, &s), _)| group.is_none_or(|g| g == s))
        .fold((0.0, 0.0), |(num, den), ((&y, _), &w)| {
            (num + w * f64::from(y), den + w)
        });
    if den > 0.0 {
        Ok(num / den)
    } else {
        Err(match group {
            Some(group) => crate::MetricError::EmptyGroup { group },
            None => crate::MetricError::EmptyInput,
        })
    }
}

/// `(rate_unprivileged / rate_privileged, rate_unprivileged - rate_privileged)`.
pub(crate) fn ratio_and_difference(
    unprivileged: Result<f64, crate::MetricError>,
    privileged: Result<f64, crate::MetricError>,
) -> (Measured, Measured) {
    match (unprivileged, privileged) {
        (Ok(u), Ok(p)) => {
            let di = if p > 0.0 {
                Ok(u / p)
            } else {
                Err(crate::MetricError::UndefinedRatio)
            };
            (di, Ok(u - p))
        }
        (Err(e), _) | (_, Err(e)) => (Err(e.clone()), Err(e)),
    }
}
