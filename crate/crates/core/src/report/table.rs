use std::io::Write;

use crate::error::{Error, Result};
use crate::metrics::{DatasetMetrics, Measured};
use crate::pipeline::StageOneReport;

pub const UNDEFINED: &str = "undefined";

pub const STAGE1_HEADER: [&str; 9] = [
    "dataset",
    "method",
    "base_rate",
    "consistency",
    "disparate_impact",
    "statistical_parity_difference",
    "num_positives",
    "num_negatives",
    "empirical_difference",
];

/// Method label of rows that describe untransformed data.
pub const ORIGINAL_LABEL: &str = "original";

/// Three decimals; negative zero prints as zero.
pub fn format_value(v: &Measured) -> String {
    match v {
        Ok(x) => {
            let s = format!("{x:.3}");
            if s == "-0.000" {
                "0.000".into()
            } else {
                s
            }
        }
        Err(_) => UNDEFINED.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub dataset: String,
    pub method: String,
    pub metrics: DatasetMetrics,
}

impl MetricRow {
    pub fn cells(&self) -> [String; 9] {
        let m = &self.metrics;
        [
            self.dataset.clone(),
            self.method.clone(),
            format_value(&m.base_rate),
            format_value(&m.consistency),
            format_value(&m.disparate_impact),
            format_value(&m.statistical_parity_difference),
            m.num_positives.to_string(),
            m.num_negatives.to_string(),
            format_value(&m.empirical_difference),
        ]
    }
}

/// Data-level metrics, one row per (dataset, method).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricTable {
    rows: Vec<MetricRow>,
}

fn dataset_label(r: &StageOneReport) -> String {
    format!("{}:{}", r.dataset, r.attribute)
}

impl MetricTable {
    /// Rows of the transformed data, in report order.
    pub fn processed(reports: &[StageOneReport]) -> Self {
        Self {
            rows: reports
                .iter()
                .map(|r| MetricRow {
                    dataset: dataset_label(r),
                    method: r.method.method().abbreviation().into(),
                    metrics: r.processed.clone(),
                })
                .collect(),
        }
    }

    /// As [`MetricTable::processed`], preceded for every dataset by one row
    /// of original metrics.
    pub fn with_original(reports: &[StageOneReport]) -> Self {
        let mut rows = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for r in reports {
            if seen.insert((dataset_label(r), r.original_cache_id.clone())) {
                rows.push(MetricRow {
                    dataset: dataset_label(r),
                    method: ORIGINAL_LABEL.into(),
                    metrics: r.original.clone(),
                });
            }
        }
        rows.extend(Self::processed(reports).rows);
        Self { rows }
    }

    pub fn rows(&self) -> &[MetricRow] {
        &self.rows
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let wrap = |e: csv::Error| Error::Dataset(format!("writing CSV: {e}"));
        w.write_record(STAGE1_HEADER).map_err(wrap)?;
        for row in &self.rows {
            w.write_record(row.cells()).map_err(wrap)?;
        }
        w.flush().map_err(|e| Error::Dataset(format!("writing CSV: {e}")))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::MetricError;

    fn metrics(di: Measured) -> DatasetMetrics {
        DatasetMetrics {
            base_rate: Ok(0.7),
            base_rate_unprivileged: Ok(0.6),
            base_rate_privileged: Ok(0.72),
            consistency: Ok(0.6789),
            disparate_impact: di,
            statistical_parity_difference: Ok(-4e-17),
            num_positives: 700,
            num_negatives: 300,
            empirical_difference: Ok(0.23938),
        }
    }

    #[test]
    fn row_formatting() {
        let row = MetricRow {
            dataset: "german:sex".into(),
            method: "RW".into(),
            metrics: metrics(Ok(0.89657)),
        };
        assert_eq!(
            row.cells(),
            ["german:sex", "RW", "0.700", "0.679", "0.897", "0.000", "700", "300", "0.239"]
        );
        let undefined = MetricRow {
            metrics: metrics(Err(MetricError::UndefinedRatio)),
            ..row
        };
        assert_eq!(undefined.cells()[4], UNDEFINED);
    }

    #[test]
    fn csv_has_fixed_header() {
        let table = MetricTable {
            rows: vec![MetricRow {
                dataset: "d".into(),
                method: "DIR".into(),
                metrics: metrics(Ok(1.0)),
            }],
        };
        let text = table.to_csv_string();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], STAGE1_HEADER.join(","));
        assert_eq!(lines[1].split(',').count(), 9);
    }
}
