use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{classification_metrics, ClassificationMetrics, FairnessMetric};
use crate::error::MetricError;

/// Metrics at one threshold of a sweep; the threshold is carried inside.
pub type SweepRecord = ClassificationMetrics;

/// Strictly increasing thresholds in `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ThresholdGrid(Vec<f64>);

impl ThresholdGrid {
    pub const DEFAULT_STEPS: usize = 100;

    /// `i / 100` for `i = 1..=99`.
    pub fn standard() -> Self {
        let steps = Self::DEFAULT_STEPS;
        Self((1..steps).map(|i| i as f64 / steps as f64).collect())
    }

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(grid_error("threshold grid is empty".into()));
        }
        if let Some(&t) = values.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(grid_error(format!("threshold {t} outside (0, 1)")));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(grid_error("thresholds must be strictly increasing".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn grid_error(message: String) -> Error {
    Error::Param {
        name: "grid".into(),
        message,
    }
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        Self::standard()
    }
}

impl TryFrom<Vec<f64>> for ThresholdGrid {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<ThresholdGrid> for Vec<f64> {
    fn from(g: ThresholdGrid) -> Vec<f64> {
        g.0
    }
}

/// One record per grid point with `y_hat = [score >= t]`. Undefined metrics
/// stay in the record as undefined.
pub fn sweep_thresholds(
    y_true: &[u8],
    scores: &[f64],
    protected: &[u8],
    weights: &[f64],
    grid: &ThresholdGrid,
) -> std::result::Result<Vec<SweepRecord>, MetricError> {
    grid.values()
        .iter()
        .map(|&t| classification_metrics(y_true, scores, t, protected, weights))
        .collect()
}

/// `balanced_accuracy - deviation(metric)` at one record; `None` when either
/// part is undefined.
pub fn selection_score(record: &SweepRecord, metric: FairnessMetric) -> Option<f64> {
    let accuracy = record.balanced_accuracy.as_ref().ok()?;
    let deviation = metric.deviation(record).ok()?;
    let score = accuracy - deviation;
    score.is_finite().then_some(score)
}

/// Threshold maximising [`selection_score`]; ties go to the lower threshold.
pub fn select_optimal_threshold(
    records: &[SweepRecord],
    metric: FairnessMetric,
) -> std::result::Result<f64, MetricError> {
    records
        .iter()
        .filter_map(|r| selection_score(r, metric).map(|s| (r.threshold, s)))
        .reduce(|best, cand| {
            let better = cand.1 > best.1 || (cand.1 == best.1 && cand.0 < best.0);
            if better {
                cand
            } else {
                best
            }
        })
        .map(|(t, _)| t)
        .ok_or(MetricError::NoDefinedThreshold)
}
