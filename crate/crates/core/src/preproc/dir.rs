//! Quantile repair of numeric features.
//!
//! For each numeric column, every group's values are mapped through the
//! group's own empirical CDF to a quantile, then back through a shared target
//! quantile function: the median of the per-group quantile functions on a
//! fixed grid. Within-group ranks are preserved; at full repair all groups
//! share one marginal distribution up to the grid resolution.

use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DirConfig {
    /// 0 leaves features untouched, 1 repairs fully.
    pub repair_level: f64,
    pub grid_size: usize,
}

impl Default for DirConfig {
    fn default() -> Self {
        Self {
            repair_level: 1.0,
            grid_size: 100,
        }
    }
}

impl DirConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.repair_level) {
            return Err(Error::Param {
                name: "repair_level".into(),
                message: format!("must lie in [0, 1], got {}", self.repair_level),
            });
        }
        if self.grid_size < 2 {
            return Err(Error::Param {
                name: "grid_size".into(),
                message: "need at least 2 grid points".into(),
            });
        }
        Ok(())
    }
}

/// Repair state of one numeric column.
#[derive(Debug, Clone, PartialEq)]
enum ColumnRepair {
    /// Constant within some group: left as is.
    PassThrough,
    Repair {
        /// Sorted training values per group.
        sorted: [Vec<f64>; 2],
        /// Target quantile function on the grid `j / (grid_size - 1)`.
        target: Vec<f64>,
    },
}

/// Per-column group CDFs and target quantile functions fitted on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DirRepairer {
    config: DirConfig,
    d: usize,
    columns: Vec<(usize, ColumnRepair)>,
}

/// Linear interpolation of `sorted` at position `num / den * (len - 1)`,
/// evaluated with integer arithmetic so that grid points land exactly.
fn quantile_at(sorted: &[f64], num: usize, den: usize) -> f64 {
    let scaled = num * (sorted.len() - 1);
    let (j, rem) = (scaled / den, scaled % den);
    if rem == 0 {
        return sorted[j];
    }
    lerp(sorted[j], sorted[j + 1], rem as f64 / den as f64)
}

/// `a + frac * (b - a)`, clamped into `[a, b]` so that successive segments
/// of a non-decreasing table stay non-decreasing under rounding.
fn lerp(a: f64, b: f64, frac: f64) -> f64 {
    (a + frac * (b - a)).clamp(a.min(b), a.max(b))
}

/// Target quantile function evaluated at `num / den`.
fn target_at(target: &[f64], num: usize, den: usize) -> f64 {
    quantile_at(target, num, den)
}

/// Target quantile function evaluated at a real quantile `q` in [0, 1].
fn target_at_real(target: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (target.len() - 1) as f64;
    let j = (pos.floor() as usize).min(target.len() - 1);
    if j + 1 >= target.len() {
        return target[target.len() - 1];
    }
    lerp(target[j], target[j + 1], pos - j as f64)
}

/// Empirical CDF of `sorted` at `x`, linearly interpolated between order
/// statistics and clamped to [0, 1].
fn cdf_at(sorted: &[f64], x: f64) -> f64 {
    let m = sorted.len();
    if x <= sorted[0] {
        return 0.0;
    }
    if x >= sorted[m - 1] {
        return 1.0;
    }
    // sorted[k] <= x < sorted[k + 1]
    let k = sorted.partition_point(|&v| v <= x) - 1;
    let frac = (x - sorted[k]) / (sorted[k + 1] - sorted[k]);
    (k as f64 + frac) / (m - 1) as f64
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        (values[m / 2 - 1] + values[m / 2]) / 2.0
    }
}

impl DirRepairer {
    pub fn config(&self) -> &DirConfig {
        &self.config
    }

    /// Indices of the columns that are repaired (not passed through).
    pub fn repaired_columns(&self) -> Vec<usize> {
        self.columns
            .iter()
            .filter(|(_, c)| matches!(c, ColumnRepair::Repair { .. }))
            .map(|(j, _)| *j)
            .collect()
    }

    /// Repairs records of another dataset through the fitted group CDFs.
    pub fn transform(&self, ds: &TabularDataset) -> Result<TabularDataset> {
        if ds.d() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: ds.d(),
            });
        }
        let lambda = self.config.repair_level;
        let mut x = ds.features().clone();
        for (j, repair) in &self.columns {
            let ColumnRepair::Repair { sorted, target } = repair else {
                continue;
            };
            for (i, &s) in ds.protected().iter().enumerate() {
                let v = x[[i, *j]];
                let t = target_at_real(target, cdf_at(&sorted[s as usize], v));
                x[[i, *j]] = (1.0 - lambda) * v + lambda * t;
            }
        }
        Ok(ds
            .clone()
            .with_features(x)?
            .with_lineage("disparate_impact_remover"))
    }
}

/// Fits the repair on `ds` and returns the repaired copy of `ds` itself.
///
/// Training records get quantile `rank / (m_s - 1)` from their within-group
/// rank, ties broken by record order, so ranks are preserved exactly.
pub fn dir_fit(ds: &TabularDataset, cfg: &DirConfig) -> Result<(TabularDataset, DirRepairer)> {
    cfg.validate()?;
    let groups: [Vec<usize>; 2] = [0u8, 1].map(|g| {
        (0..ds.n())
            .filter(|&i| ds.protected()[i] == g)
            .collect::<Vec<_>>()
    });
    for (g, members) in groups.iter().enumerate() {
        if members.is_empty() {
            return Err(Error::Dataset(format!(
                "group {g} is empty; cannot repair feature distributions"
            )));
        }
    }
    let lambda = cfg.repair_level;
    let last = cfg.grid_size - 1;
    let mut x = ds.features().clone();
    let mut columns = Vec::new();
    for j in ds.numeric_columns() {
        // (value, index) in within-group rank order
        let ranked: [Vec<(f64, usize)>; 2] = [0, 1].map(|g: usize| {
            let mut v: Vec<(f64, usize)> =
                groups[g].iter().map(|&i| (ds.features()[[i, j]], i)).collect();
            v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            v
        });
        let constant = ranked
            .iter()
            .any(|r| r.first().map(|f| f.0) == r.last().map(|l| l.0));
        if constant {
            log::warn!(
                "{}: column `{}` is constant within a group; left unrepaired",
                ds.provenance(),
                ds.feature_names()[j]
            );
            columns.push((j, ColumnRepair::PassThrough));
            continue;
        }
        let sorted = ranked
            .clone()
            .map(|r| r.into_iter().map(|(v, _)| v).collect::<Vec<_>>());
        let target: Vec<f64> = (0..=last)
            .map(|g| {
                let mut at: Vec<f64> = sorted.iter().map(|s| quantile_at(s, g, last)).collect();
                median(&mut at)
            })
            .collect();
        for r in &ranked {
            let m = r.len();
            for (rank, &(v, i)) in r.iter().enumerate() {
                // q = rank / (m - 1); position on the grid = q * last
                let t = target_at(&target, rank * last, (m - 1) * last);
                x[[i, j]] = (1.0 - lambda) * v + lambda * t;
            }
        }
        columns.push((j, ColumnRepair::Repair { sorted, target }));
    }
    let repairer = DirRepairer {
        config: *cfg,
        d: ds.d(),
        columns,
    };
    let out = ds
        .clone()
        .with_features(x)?
        .with_lineage("disparate_impact_remover");
    Ok((out, repairer))
}

/// [`dir_fit`] without the fitted state.
pub fn dir_repair(ds: &TabularDataset, cfg: &DirConfig) -> Result<TabularDataset> {
    dir_fit(ds, cfg).map(|(out, _)| out)
}
