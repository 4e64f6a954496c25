use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::outcome::{self, Measured};
use super::{ratio_and_difference, weighted_rate};
use crate::dataset::{PRIVILEGED, UNPRIVILEGED};
use crate::MetricError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Unprivileged,
    Privileged,
    Overall,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::Unprivileged => "unprivileged group",
            Scope::Privileged => "privileged group",
            Scope::Overall => "all records",
        })
    }
}

/// Weighted confusion counts of one scope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Confusion {
    pub scope: Scope,
    pub true_pos: f64,
    pub false_pos: f64,
    pub true_neg: f64,
    pub false_neg: f64,
}

impl Confusion {
    fn empty(scope: Scope) -> Self {
        Self {
            scope,
            true_pos: 0.0,
            false_pos: 0.0,
            true_neg: 0.0,
            false_neg: 0.0,
        }
    }

    fn add(&mut self, y: u8, y_hat: u8, w: f64) {
        match (y, y_hat) {
            (1, 1) => self.true_pos += w,
            (0, 1) => self.false_pos += w,
            (0, _) => self.true_neg += w,
            _ => self.false_neg += w,
        }
    }

    fn rate(&self, num: f64, den: f64, name: &str) -> Measured {
        if den > 0.0 {
            Ok(num / den)
        } else {
            Err(MetricError::UndefinedRate {
                scope: self.scope.to_string(),
                rate: name.into(),
            })
        }
    }

    pub fn tpr(&self) -> Measured {
        self.rate(self.true_pos, self.true_pos + self.false_neg, "TPR")
    }

    pub fn fpr(&self) -> Measured {
        self.rate(self.false_pos, self.false_pos + self.true_neg, "FPR")
    }

    pub fn tnr(&self) -> Measured {
        self.rate(self.true_neg, self.false_pos + self.true_neg, "TNR")
    }

    pub fn fnr(&self) -> Measured {
        self.rate(self.false_neg, self.true_pos + self.false_neg, "FNR")
    }

    pub fn rates(&self) -> GroupRates {
        GroupRates {
            tpr: self.tpr(),
            fpr: self.fpr(),
            tnr: self.tnr(),
            fnr: self.fnr(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupConfusion {
    pub unprivileged: Confusion,
    pub privileged: Confusion,
    pub overall: Confusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    #[serde(with = "outcome")]
    pub tpr: Measured,
    #[serde(with = "outcome")]
    pub fpr: Measured,
    #[serde(with = "outcome")]
    pub tnr: Measured,
    #[serde(with = "outcome")]
    pub fnr: Measured,
}

fn check_lengths(n: usize, others: &[usize]) -> Result<(), MetricError> {
    if others.iter().any(|&m| m != n) {
        Err(MetricError::LengthMismatch)
    } else {
        Ok(())
    }
}

/// Weighted confusion counts per group and pooled.
pub fn group_confusion(
    y_true: &[u8],
    y_pred: &[u8],
    protected: &[u8],
    weights: &[f64],
) -> Result<GroupConfusion, MetricError> {
    check_lengths(y_true.len(), &[y_pred.len(), protected.len(), weights.len()])?;
    let mut out = GroupConfusion {
        unprivileged: Confusion::empty(Scope::Unprivileged),
        privileged: Confusion::empty(Scope::Privileged),
        overall: Confusion::empty(Scope::Overall),
    };
    for i in 0..y_true.len() {
        let group = if protected[i] == PRIVILEGED {
            &mut out.privileged
        } else {
            &mut out.unprivileged
        };
        group.add(y_true[i], y_pred[i], weights[i]);
        out.overall.add(y_true[i], y_pred[i], weights[i]);
    }
    Ok(out)
}

/// `(TPR + TNR) / 2` on the pooled confusion.
pub fn balanced_accuracy(c: &GroupConfusion) -> Measured {
    Ok((c.overall.tpr()? + c.overall.tnr()?) / 2.0)
}

/// `TPR_unprivileged - TPR_privileged`.
pub fn equal_opportunity_difference(c: &GroupConfusion) -> Measured {
    Ok(c.unprivileged.tpr()? - c.privileged.tpr()?)
}

/// Mean of the FPR and TPR gaps, unprivileged minus privileged.
pub fn average_odds_difference(c: &GroupConfusion) -> Measured {
    let fpr_gap = c.unprivileged.fpr()? - c.privileged.fpr()?;
    let tpr_gap = c.unprivileged.tpr()? - c.privileged.tpr()?;
    Ok((fpr_gap + tpr_gap) / 2.0)
}

/// Generalised entropy index with alpha = 1 over benefits
/// `b = y_pred - y_true + 1`, unweighted, with `0 ln 0 = 0`.
///
/// When every benefit is zero (all records are false negatives) the mean
/// benefit vanishes; the index is then reported as 0.
pub fn theil_index(y_true: &[u8], y_pred: &[u8]) -> Measured {
    check_lengths(y_true.len(), &[y_pred.len()])?;
    if y_true.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let n = y_true.len() as f64;
    let benefit = |i: usize| f64::from(y_pred[i]) - f64::from(y_true[i]) + 1.0;
    let mu = (0..y_true.len()).map(benefit).sum::<f64>() / n;
    if mu == 0.0 {
        log::warn!("theil index: mean benefit is zero, reporting 0");
        return Ok(0.0);
    }
    let total: f64 = (0..y_true.len())
        .map(|i| {
            let r = benefit(i) / mu;
            if r > 0.0 {
                r * r.ln()
            } else {
                0.0
            }
        })
        .sum();
    Ok(total / n)
}

/// `[score >= threshold]`.
pub fn predictions_at(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&p| u8::from(p >= threshold)).collect()
}

/// Prediction-level metrics at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub threshold: f64,
    #[serde(with = "outcome")]
    pub balanced_accuracy: Measured,
    #[serde(with = "outcome")]
    pub statistical_parity_difference: Measured,
    #[serde(with = "outcome")]
    pub disparate_impact: Measured,
    #[serde(with = "outcome")]
    pub equal_opportunity_difference: Measured,
    #[serde(with = "outcome")]
    pub average_odds_difference: Measured,
    #[serde(with = "outcome")]
    pub theil_index: Measured,
    pub unprivileged: GroupRates,
    pub privileged: GroupRates,
    pub overall: GroupRates,
}

/// Thresholds `scores` at `threshold` and evaluates every prediction metric.
pub fn classification_metrics(
    y_true: &[u8],
    scores: &[f64],
    threshold: f64,
    protected: &[u8],
    weights: &[f64],
) -> Result<ClassificationMetrics, MetricError> {
    check_lengths(y_true.len(), &[scores.len()])?;
    let y_pred = predictions_at(scores, threshold);
    let c = group_confusion(y_true, &y_pred, protected, weights)?;
    let (disparate_impact, statistical_parity_difference) = ratio_and_difference(
        weighted_rate(&y_pred, protected, weights, Some(UNPRIVILEGED)),
        weighted_rate(&y_pred, protected, weights, Some(PRIVILEGED)),
    );
    Ok(ClassificationMetrics {
        threshold,
        balanced_accuracy: balanced_accuracy(&c),
        statistical_parity_difference,
        disparate_impact,
        equal_opportunity_difference: equal_opportunity_difference(&c),
        average_odds_difference: average_odds_difference(&c),
        theil_index: theil_index(y_true, &y_pred),
        unprivileged: c.unprivileged.rates(),
        privileged: c.privileged.rates(),
        overall: c.overall.rates(),
    })
}

/// Fairness metric used to pick a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FairnessMetric {
    StatisticalParityDifference,
    DisparateImpact,
    EqualOpportunityDifference,
    AverageOddsDifference,
    TheilIndex,
}

impl FairnessMetric {
    pub const ALL: [FairnessMetric; 5] = [
        FairnessMetric::StatisticalParityDifference,
        FairnessMetric::DisparateImpact,
        FairnessMetric::EqualOpportunityDifference,
        FairnessMetric::AverageOddsDifference,
        FairnessMetric::TheilIndex,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FairnessMetric::StatisticalParityDifference => "statistical_parity_difference",
            FairnessMetric::DisparateImpact => "disparate_impact",
            FairnessMetric::EqualOpportunityDifference => "equal_opportunity_difference",
            FairnessMetric::AverageOddsDifference => "average_odds_difference",
            FairnessMetric::TheilIndex => "theil_index",
        }
    }

    pub fn abbreviation(self) -> &'static str {
        match self {
            FairnessMetric::StatisticalParityDifference => "SPD",
            FairnessMetric::DisparateImpact => "DI",
            FairnessMetric::EqualOpportunityDifference => "EOD",
            FairnessMetric::AverageOddsDifference => "AOD",
            FairnessMetric::TheilIndex => "Theil",
        }
    }

    pub fn value(self, m: &ClassificationMetrics) -> &Measured {
        match self {
            FairnessMetric::StatisticalParityDifference => &m.statistical_parity_difference,
            FairnessMetric::DisparateImpact => &m.disparate_impact,
            FairnessMetric::EqualOpportunityDifference => &m.equal_opportunity_difference,
            FairnessMetric::AverageOddsDifference => &m.average_odds_difference,
            FairnessMetric::TheilIndex => &m.theil_index,
        }
    }

    /// Distance from the fair value: 0 for differences and Theil, 1 for DI.
    pub fn deviation(self, m: &ClassificationMetrics) -> Measured {
        let v = self.value(m).clone()?;
        Ok(match self {
            FairnessMetric::DisparateImpact => (1.0 - v).abs(),
            FairnessMetric::TheilIndex => v,
            _ => v.abs(),
        })
    }
}

impl fmt::Display for FairnessMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FairnessMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        FairnessMetric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s) || m.abbreviation().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                format!(
                    "unknown fairness metric `{s}`; expected one of {}",
                    FairnessMetric::ALL.map(|m| m.abbreviation()).join(", ")
                )
            })
    }
}

impl TryFrom<String> for FairnessMetric {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<FairnessMetric> for String {
    fn from(m: FairnessMetric) -> String {
        m.name().to_string()
    }
}
