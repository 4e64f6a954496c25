//! Optimised probabilistic transformation of features and labels.
//!
//! Selected features are discretised (numeric columns into equal-frequency
//! bins, one-hot blocks by active level). For every observed record type
//! `(x, y, s)` the map holds a distribution over observed outputs `(x', y')`.
//! The table minimises
//!
//! ```text
//! KL(p_out || p_in) + fairness_penalty   * sum_s (|P(y'=1 | s) / p_target - 1| - epsilon)_+
//!                   + distortion_penalty * (E[distortion] - distortion_budget)_+
//! ```
//!
//! where `p_target` is the overall favourable rate and the distortion of a
//! record is the fraction of selected features whose bin changes plus
//! `label_flip_cost` if the label flips. Minimisation is exponentiated
//! gradient (mirror descent on each row simplex) with a backtracking step
//! that only accepts strict decreases.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OppConfig {
    pub epsilon: f64,
    pub distortion_budget: f64,
    pub bins: usize,
    pub label_flip_cost: f64,
    pub fairness_penalty: f64,
    pub distortion_penalty: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Upper bound on `(feature cells) x (label values)`.
    pub max_domain: usize,
    /// Numeric column names or one-hot source names; `None` picks numeric
    /// columns in order while the domain stays within `max_domain`.
    pub features: Option<Vec<String>>,
}

impl Default for OppConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            distortion_budget: 0.2,
            bins: 4,
            label_flip_cost: 1.0,
            fairness_penalty: 10.0,
            distortion_penalty: 10.0,
            max_iter: 500,
            tol: 1e-10,
            max_domain: 10_000,
            features: None,
        }
    }
}

impl OppConfig {
    pub fn validate(&self) -> Result<()> {
        let param = |name: &str, message: String| Error::Param {
            name: name.into(),
            message,
        };
        for (name, v) in [
            ("epsilon", self.epsilon),
            ("label_flip_cost", self.label_flip_cost),
            ("fairness_penalty", self.fairness_penalty),
            ("distortion_penalty", self.distortion_penalty),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(param(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.distortion_budget.is_finite() && self.distortion_budget >= 0.0) {
            return Err(param(
                "distortion_budget",
                format!("must be non-negative, got {}", self.distortion_budget),
            ));
        }
        if self.bins < 1 {
            return Err(param("bins", "need at least one bin".into()));
        }
        if self.max_domain < 2 {
            return Err(param("max_domain", "must be at least 2".into()));
        }
        Ok(())
    }
}

/// How one selected feature is discretised.
#[derive(Debug, Clone, PartialEq)]
enum Coder {
    /// Bin `b` holds values in `[cuts[b-1], cuts[b])`; outputs are set to the
    /// training median of the bin.
    Numeric {
        column: usize,
        cuts: Vec<f64>,
        medians: Vec<f64>,
    },
    /// Level = position of the largest indicator in the block.
    OneHot { columns: Vec<usize> },
}

impl Coder {
    fn levels(&self) -> usize {
        match self {
            Coder::Numeric { cuts, .. } => cuts.len() + 1,
            Coder::OneHot { columns } => columns.len(),
        }
    }

    fn code(&self, row: ndarray::ArrayView1<'_, f64>) -> u16 {
        match self {
            Coder::Numeric { column, cuts, .. } => {
                cuts.partition_point(|&c| c <= row[*column]) as u16
            }
            Coder::OneHot { columns } => {
                let mut best = 0;
                for (k, &c) in columns.iter().enumerate() {
                    if row[c] > row[columns[best]] {
                        best = k;
                    }
                }
                best as u16
            }
        }
    }

    fn write(&self, mut row: ndarray::ArrayViewMut1<'_, f64>, level: u16) {
        match self {
            Coder::Numeric {
                column, medians, ..
            } => row[*column] = medians[level as usize],
            Coder::OneHot { columns } => {
                for (k, &c) in columns.iter().enumerate() {
                    row[c] = f64::from(u8::from(k == level as usize));
                }
            }
        }
    }
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let m = sorted.len();
    if m % 2 == 1 {
        sorted[m / 2]
    } else {
        (sorted[m / 2 - 1] + sorted[m / 2]) / 2.0
    }
}

fn numeric_coder(ds: &TabularDataset, column: usize, bins: usize) -> Coder {
    let mut sorted: Vec<f64> = ds.features().column(column).to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut cuts: Vec<f64> = (1..bins).map(|b| sorted[b * n / bins]).collect();
    cuts.dedup();
    // a cut at the minimum would leave bin 0 empty
    cuts.retain(|&c| c > sorted[0]);
    let mut medians = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0;
    for b in 0..=cuts.len() {
        let end = if b < cuts.len() {
            sorted.partition_point(|&v| v < cuts[b])
        } else {
            n
        };
        medians.push(median_sorted(&sorted[start..end]));
        start = end;
    }
    Coder::Numeric {
        column,
        cuts,
        medians,
    }
}

fn select_coders(ds: &TabularDataset, cfg: &OppConfig) -> Result<Vec<Coder>> {
    let blocks = ds.one_hot_blocks();
    let mut coders = Vec::new();
    let mut domain = 2usize;
    match &cfg.features {
        Some(names) => {
            for name in names {
                let coder = if let Some(j) = ds.feature_names().iter().position(|f| f == name) {
                    if !ds.feature_kinds()[j].is_numeric() {
                        return Err(Error::Param {
                            name: "features".into(),
                            message: format!("`{name}` is a one-hot column; name its source instead"),
                        });
                    }
                    numeric_coder(ds, j, cfg.bins)
                } else if let Some((_, cols)) = blocks.iter().find(|(src, _)| src == name) {
                    Coder::OneHot {
                        columns: cols.clone(),
                    }
                } else {
                    return Err(Error::MissingColumn {
                        column: name.clone(),
                        context: Some("OPP feature selection".into()),
                    });
                };
                domain = domain.saturating_mul(coder.levels());
                coders.push(coder);
            }
            if domain > cfg.max_domain {
                return Err(Error::Param {
                    name: "features".into(),
                    message: format!(
                        "discretised domain has {domain} cells, limit is {}",
                        cfg.max_domain
                    ),
                });
            }
        }
        None => {
            for j in ds.numeric_columns() {
                let coder = numeric_coder(ds, j, cfg.bins);
                if coder.levels() < 2 {
                    continue;
                }
                let next = domain.saturating_mul(coder.levels());
                if next > cfg.max_domain {
                    continue;
                }
                domain = next;
                coders.push(coder);
            }
        }
    }
    Ok(coders)
}

type Code = Vec<u16>;

/// Diagnostics of the fitted table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OppResiduals {
    /// `max_s (|P(y'=1|s) / p_target - 1| - epsilon)_+`.
    pub fairness: f64,
    /// `(E[distortion] - distortion_budget)_+`.
    pub distortion: f64,
    pub kl: f64,
    pub expected_distortion: f64,
    pub group_rates: [f64; 2],
    pub target_rate: f64,
}

/// Fitted conditional map `P(x', y' | x, y, s)` over the discretised domain.
#[derive(Debug, Clone, PartialEq)]
pub struct OppMap {
    config: OppConfig,
    d: usize,
    coders: Vec<Coder>,
    /// Output support: observed `(x, y)`.
    support: Vec<(Code, u8)>,
    /// Table rows: observed `(x, y, s)`.
    rows: Vec<(Code, u8, u8)>,
    row_index: BTreeMap<(Code, u8, u8), usize>,
    /// Row-major `rows x support`.
    table: Vec<f64>,
    /// Training label counts per `(x, s)`, for feature-only transforms.
    label_counts: BTreeMap<(Code, u8), [f64; 2]>,
    trace: Vec<f64>,
    residuals: OppResiduals,
}

/// Objective pieces of one table.
struct Problem {
    p_row: Vec<f64>,
    p_out: Vec<f64>,
    row_group: Vec<u8>,
    p_group: [f64; 2],
    target: f64,
    out_positive: Vec<bool>,
    distortion: Vec<f64>,
    m: usize,
    cfg: OppConfig,
}

struct Evaluation {
    objective: f64,
    p_hat: Vec<f64>,
    rates: [f64; 2],
    expected_distortion: f64,
    kl: f64,
}

impl Problem {
    fn evaluate(&self, table: &[f64]) -> Evaluation {
        let m = self.m;
        let mut p_hat = vec![0.0; m];
        let mut pos = [0.0; 2];
        let mut expected_distortion = 0.0;
        for (r, &pr) in self.p_row.iter().enumerate() {
            let row = &table[r * m..(r + 1) * m];
            let dist = &self.distortion[r * m..(r + 1) * m];
            let mut row_pos = 0.0;
            let mut row_dist = 0.0;
            for o in 0..m {
                p_hat[o] += pr * row[o];
                if self.out_positive[o] {
                    row_pos += row[o];
                }
                row_dist += row[o] * dist[o];
            }
            pos[self.row_group[r] as usize] += pr * row_pos;
            expected_distortion += pr * row_dist;
        }
        let kl: f64 = p_hat
            .iter()
            .zip(&self.p_out)
            .filter(|(&q, _)| q > 0.0)
            .map(|(&q, &p)| q * (q / p).ln())
            .sum();
        let rates = [pos[0] / self.p_group[0], pos[1] / self.p_group[1]];
        let c = &self.cfg;
        let fairness: f64 = rates
            .iter()
            .map(|&r| ((r / self.target - 1.0).abs() - c.epsilon).max(0.0))
            .sum();
        let distortion = (expected_distortion - c.distortion_budget).max(0.0);
        Evaluation {
            objective: kl + c.fairness_penalty * fairness + c.distortion_penalty * distortion,
            p_hat,
            rates,
            expected_distortion,
            kl,
        }
    }

    /// Gradient divided by the row probability, so every row simplex sees
    /// a step of the same scale.
    fn scaled_gradient(&self, e: &Evaluation) -> Vec<f64> {
        let m = self.m;
        let c = &self.cfg;
        let log_ratio: Vec<f64> = e
            .p_hat
            .iter()
            .zip(&self.p_out)
            .map(|(&q, &p)| (q.max(1e-300) / p).ln() + 1.0)
            .collect();
        let fair_slope = [0, 1].map(|s| {
            let dev = e.rates[s] / self.target - 1.0;
            if dev.abs() > c.epsilon {
                c.fairness_penalty * dev.signum() / (self.target * self.p_group[s])
            } else {
                0.0
            }
        });
        let dist_active = e.expected_distortion > c.distortion_budget;
        let mut g = vec![0.0; self.p_row.len() * m];
        for r in 0..self.p_row.len() {
            let fs = fair_slope[self.row_group[r] as usize];
            for o in 0..m {
                let mut v = log_ratio[o];
                if self.out_positive[o] {
                    v += fs;
                }
                if dist_active {
                    v += c.distortion_penalty * self.distortion[r * m + o];
                }
                g[r * m + o] = v;
            }
        }
        g
    }
}

/// One exponentiated-gradient step of size `eta` on every row.
fn mirror_step(table: &[f64], grad: &[f64], m: usize, eta: f64) -> Vec<f64> {
    let mut out = vec![0.0; table.len()];
    for ((src, g), dst) in table
        .chunks(m)
        .zip(grad.chunks(m))
        .zip(out.chunks_mut(m))
    {
        let lo = g.iter().copied().fold(f64::INFINITY, f64::min);
        let mut total = 0.0;
        for o in 0..m {
            dst[o] = src[o] * (-eta * (g[o] - lo)).exp();
            total += dst[o];
        }
        for v in dst.iter_mut() {
            *v /= total;
        }
    }
    out
}

fn hamming(a: &[u16], b: &[u16]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Fits the map on `ds`. Deterministic: randomness enters only through
/// [`OppMap::transform`].
pub fn opp_fit(ds: &TabularDataset, cfg: &OppConfig) -> Result<OppMap> {
    cfg.validate()?;
    let coders = select_coders(ds, cfg)?;
    if coders.is_empty() {
        log::warn!(
            "{}: no feature qualifies for OPP discretisation; only labels are transformed",
            ds.provenance()
        );
    }
    let codes: Vec<Code> = ds
        .features()
        .outer_iter()
        .map(|row| coders.iter().map(|c| c.code(row)).collect())
        .collect();

    let total_w: f64 = ds.weights().iter().sum();
    let mut row_mass: BTreeMap<(Code, u8, u8), f64> = BTreeMap::new();
    let mut label_counts: BTreeMap<(Code, u8), [f64; 2]> = BTreeMap::new();
    for i in 0..ds.n() {
        let (y, s, w) = (ds.labels()[i], ds.protected()[i], ds.weights()[i]);
        *row_mass.entry((codes[i].clone(), y, s)).or_default() += w / total_w;
        label_counts.entry((codes[i].clone(), s)).or_default()[y as usize] += w;
    }
    let mut out_mass: BTreeMap<(Code, u8), f64> = BTreeMap::new();
    for ((x, y, _), p) in &row_mass {
        *out_mass.entry((x.clone(), *y)).or_default() += p;
    }
    let support: Vec<(Code, u8)> = out_mass.keys().cloned().collect();
    let out_index: BTreeMap<(Code, u8), usize> =
        support.iter().cloned().enumerate().map(|(o, k)| (k, o)).collect();
    let rows: Vec<(Code, u8, u8)> = row_mass.keys().cloned().collect();
    let row_index: BTreeMap<(Code, u8, u8), usize> =
        rows.iter().cloned().enumerate().map(|(r, k)| (k, r)).collect();

    let m = support.len();
    let p_row: Vec<f64> = row_mass.values().copied().collect();
    let p_out: Vec<f64> = out_mass.values().copied().collect();
    let row_group: Vec<u8> = rows.iter().map(|r| r.2).collect();
    let mut p_group = [0.0; 2];
    for (r, &p) in p_row.iter().enumerate() {
        p_group[row_group[r] as usize] += p;
    }
    if p_group.contains(&0.0) {
        return Err(Error::Dataset("both groups must be present to fit OPP".into()));
    }
    let out_positive: Vec<bool> = support.iter().map(|(_, y)| *y == 1).collect();
    let target: f64 = p_out
        .iter()
        .zip(&out_positive)
        .filter(|(_, &pos)| pos)
        .map(|(p, _)| p)
        .sum();
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Dataset("OPP needs both label values".into()));
    }
    let n_features = coders.len().max(1) as f64;
    let mut distortion = vec![0.0; rows.len() * m];
    let mut table = vec![0.0; rows.len() * m];
    for (r, (x, y, _)) in rows.iter().enumerate() {
        let own = out_index[&(x.clone(), *y)];
        for (o, (xo, yo)) in support.iter().enumerate() {
            distortion[r * m + o] = hamming(x, xo) as f64 / n_features
                + if y == yo { 0.0 } else { cfg.label_flip_cost };
            table[r * m + o] = 0.1 / m as f64 + if o == own { 0.9 } else { 0.0 };
        }
    }
    let problem = Problem {
        p_row,
        p_out,
        row_group,
        p_group,
        target,
        out_positive,
        distortion,
        m,
        cfg: cfg.clone(),
    };

    let mut current = problem.evaluate(&table);
    let mut trace = vec![current.objective];
    let mut eta = 1.0;
    for _ in 0..cfg.max_iter {
        let grad = problem.scaled_gradient(&current);
        let mut accepted = None;
        for _ in 0..50 {
            let cand = mirror_step(&table, &grad, m, eta);
            let e = problem.evaluate(&cand);
            if e.objective < current.objective {
                accepted = Some((cand, e));
                break;
            }
            eta *= 0.5;
        }
        let Some((cand, e)) = accepted else {
            break;
        };
        let gain = current.objective - e.objective;
        table = cand;
        current = e;
        trace.push(current.objective);
        eta = (eta * 2.0).min(1e4);
        if gain < cfg.tol {
            break;
        }
    }

    let residuals = OppResiduals {
        fairness: current
            .rates
            .iter()
            .map(|&r| ((r / target - 1.0).abs() - cfg.epsilon).max(0.0))
            .fold(0.0, f64::max),
        distortion: (current.expected_distortion - cfg.distortion_budget).max(0.0),
        kl: current.kl,
        expected_distortion: current.expected_distortion,
        group_rates: current.rates,
        target_rate: target,
    };
    if residuals.fairness > 1e-3 || residuals.distortion > 1e-3 {
        log::warn!(
            "{}: OPP constraints not met (fairness residual {:.4}, distortion residual {:.4})",
            ds.provenance(),
            residuals.fairness,
            residuals.distortion
        );
    }
    Ok(OppMap {
        config: cfg.clone(),
        d: ds.d(),
        coders,
        support,
        rows,
        row_index,
        table,
        label_counts,
        trace,
        residuals,
    })
}

fn draw(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // rounding left u above the running sum: take the last non-zero entry
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

impl OppMap {
    pub fn config(&self) -> &OppConfig {
        &self.config
    }

    /// Objective after every accepted step, starting at the initial table.
    pub fn trace(&self) -> &[f64] {
        &self.trace
    }

    pub fn residuals(&self) -> &OppResiduals {
        &self.residuals
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.support.len()
    }

    /// Conditional distribution over outputs for table row `r`.
    pub fn row(&self, r: usize) -> &[f64] {
        let m = self.support.len();
        &self.table[r * m..(r + 1) * m]
    }

    /// Probability mass kept on the record's own `(x, y)`.
    pub fn diagonal_mass(&self, r: usize) -> f64 {
        let (x, y, _) = &self.rows[r];
        let o = self
            .support
            .iter()
            .position(|(xo, yo)| xo == x && yo == y)
            .expect("own cell is in the support");
        self.row(r)[o]
    }

    fn check_dim(&self, ds: &TabularDataset) -> Result<()> {
        if ds.d() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: ds.d(),
            });
        }
        Ok(())
    }

    fn code(&self, row: ndarray::ArrayView1<'_, f64>) -> Code {
        self.coders.iter().map(|c| c.code(row)).collect()
    }

    fn write(&self, row: ndarray::ArrayViewMut1<'_, f64>, code: &[u16]) {
        let mut row = row;
        for (c, &level) in self.coders.iter().zip(code) {
            c.write(row.view_mut(), level);
        }
    }

    /// Resamples each record's discretised features and label from the map.
    /// Selected numeric features take their bin's training median; records
    /// of a type unseen in training keep their own (binned) values.
    pub fn transform(&self, ds: &TabularDataset, seed: u64) -> Result<TabularDataset> {
        self.check_dim(ds)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = ds.features().clone();
        let mut labels = ds.labels().to_vec();
        let mut unseen = 0usize;
        for i in 0..ds.n() {
            let code = self.code(ds.row(i));
            let key = (code, labels[i], ds.protected()[i]);
            let (out_code, out_label) = match self.row_index.get(&key) {
                Some(&r) => self.support[draw(self.row(r), &mut rng)].clone(),
                None => {
                    unseen += 1;
                    (key.0, key.1)
                }
            };
            self.write(x.row_mut(i), &out_code);
            labels[i] = out_label;
        }
        if unseen > 0 {
            log::warn!("OPP: {unseen} records of unseen type kept unchanged");
        }
        Ok(ds
            .clone()
            .with_features(x)?
            .with_labels(labels)?
            .with_lineage("optimized_preprocessing"))
    }

    /// Resamples discretised features from `P(x' | x, s)`, mixing the map
    /// over the training label distribution of `(x, s)`. Labels are kept.
    pub fn transform_features(&self, ds: &TabularDataset, seed: u64) -> Result<TabularDataset> {
        self.check_dim(ds)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = ds.features().clone();
        for i in 0..ds.n() {
            let code = self.code(ds.row(i));
            let s = ds.protected()[i];
            let out_code = match self.label_counts.get(&(code.clone(), s)) {
                Some(counts) => {
                    let y = draw(&[counts[0], counts[1]].map(|c| c / (counts[0] + counts[1])), &mut rng) as u8;
                    let r = self.row_index[&(code, y, s)];
                    self.support[draw(self.row(r), &mut rng)].0.clone()
                }
                None => code,
            };
            self.write(x.row_mut(i), &out_code);
        }
        Ok(ds
            .clone()
            .with_features(x)?
            .with_lineage("optimized_preprocessing"))
    }

    /// Features with selected columns replaced by their bin representative.
    pub fn binned(&self, ds: &TabularDataset) -> Result<TabularDataset> {
        self.check_dim(ds)?;
        let mut x = ds.features().clone();
        for i in 0..ds.n() {
            let code = self.code(ds.row(i));
            self.write(x.row_mut(i), &code);
        }
        ds.clone().with_features(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    /// One feature with two bins; `group_rates` are favourable rates per group.
    fn toy(n_per_group: [usize; 2], group_rates: [f64; 2], x_bias: [f64; 2]) -> TabularDataset {
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut s = Vec::new();
        for g in 0..2 {
            let n = n_per_group[g];
            let pos = (group_rates[g] * n as f64).round() as usize;
            for i in 0..n {
                y.push(u8::from(i < pos));
                // interleave so that bin membership is independent of label
                let high = (i * 7919 % n) as f64 / n as f64 >= x_bias[g];
                x.push(if high { 2.0 } else { 1.0 });
                s.push(g as u8);
            }
        }
        let n = y.len();
        TabularDataset::from_parts(Array2::from_shape_vec((n, 1), x).unwrap(), y, s, "toy").unwrap()
    }

    fn rows_on_simplex(map: &OppMap) {
        for r in 0..map.n_rows() {
            let row = map.row(r);
            assert!(row.iter().all(|&p| p >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_budget_keeps_identity() {
        let ds = toy([50, 50], [0.3, 0.6], [0.5, 0.5]);
        let cfg = OppConfig {
            epsilon: 10.0,
            distortion_budget: 0.0,
            bins: 2,
            ..Default::default()
        };
        let map = opp_fit(&ds, &cfg).unwrap();
        rows_on_simplex(&map);
        for r in 0..map.n_rows() {
            assert!(1.0 - map.diagonal_mass(r) < 1e-3, "row {r}: {}", map.diagonal_mass(r));
        }
    }

    #[test]
    fn trace_never_increases() {
        let ds = toy([60, 40], [0.2, 0.8], [0.3, 0.7]);
        let cfg = OppConfig {
            bins: 2,
            distortion_budget: 1.0,
            ..Default::default()
        };
        let map = opp_fit(&ds, &cfg).unwrap();
        assert!(map.trace().windows(2).all(|w| w[1] <= w[0]));
        rows_on_simplex(&map);
    }

    #[test]
    fn identity_map_returns_binned_input() {
        let x = Array2::from_shape_fn((40, 1), |(i, _)| i as f64);
        let y: Vec<u8> = (0..40).map(|i| (i % 2) as u8).collect();
        let s: Vec<u8> = (0..40).map(|i| ((i / 2) % 2) as u8).collect();
        let ds = TabularDataset::from_parts(x, y, s, "t").unwrap();
        let cfg = OppConfig {
            epsilon: 10.0,
            distortion_budget: 0.0,
            ..Default::default()
        };
        let mut map = opp_fit(&ds, &cfg).unwrap();
        let m = map.n_outputs();
        for r in 0..map.n_rows() {
            let (code, label, _) = map.rows[r].clone();
            for o in 0..m {
                map.table[r * m + o] = f64::from(u8::from(map.support[o] == (code.clone(), label)));
            }
        }
        let out = map.transform(&ds, 3).unwrap();
        assert_eq!(out, map.binned(&ds).unwrap().with_lineage("optimized_preprocessing"));
        assert_eq!(out.labels(), ds.labels());
    }

    #[test]
    fn seeded_transform_is_deterministic() {
        let ds = toy([60, 40], [0.2, 0.8], [0.3, 0.7]);
        let map = opp_fit(&ds, &OppConfig { bins: 2, ..Default::default() }).unwrap();
        assert_eq!(map.transform(&ds, 5).unwrap(), map.transform(&ds, 5).unwrap());
        assert_eq!(
            map.transform_features(&ds, 5).unwrap(),
            map.transform_features(&ds, 5).unwrap()
        );
        let out = map.transform(&ds, 5).unwrap();
        assert_eq!(out.protected(), ds.protected());
        assert_eq!(out.weights(), ds.weights());
    }

    #[test]
    fn explicit_feature_selection_and_limit() {
        let ds = toy([20, 20], [0.5, 0.5], [0.5, 0.5]);
        let cfg = OppConfig {
            features: Some(vec!["x0".into()]),
            max_domain: 3,
            ..Default::default()
        };
        assert!(opp_fit(&ds, &cfg).is_err());
        let cfg = OppConfig {
            features: Some(vec!["nope".into()]),
            ..Default::default()
        };
        assert!(matches!(opp_fit(&ds, &cfg), Err(Error::MissingColumn { .. })));
    }

    #[test]
    fn equal_frequency_cuts() {
        let x = Array2::from_shape_fn((8, 1), |(i, _)| i as f64);
        let ds = TabularDataset::from_parts(x, vec![0, 1, 0, 1, 0, 1, 0, 1], vec![0, 0, 1, 1, 0, 0, 1, 1], "t")
            .unwrap();
        match numeric_coder(&ds, 0, 4) {
            Coder::Numeric { cuts, medians, .. } => {
                assert_eq!(cuts, vec![2.0, 4.0, 6.0]);
                assert_eq!(medians, vec![0.5, 2.5, 4.5, 6.5]);
            }
            other => panic!("{other:?}"),
        }
    }

    /// Objective of the two-parameter family that flips labels toward the
    /// overall rate: in each group, records carrying the label that group
    /// over-represents flip with probability `a` (group 0) or `b` (group 1).
    /// Features are untouched.
    fn family_objective(ds: &TabularDataset, cfg: &OppConfig, a: f64, b: f64) -> f64 {
        let n = ds.n() as f64;
        let overall = ds.labels().iter().map(|&y| f64::from(y)).sum::<f64>() / n;
        let over: [u8; 2] = [0u8, 1].map(|g| {
            let (p, c) = (0..ds.n())
                .filter(|&i| ds.protected()[i] == g)
                .fold((0.0, 0.0), |(p, c), i| (p + f64::from(ds.labels()[i]), c + 1.0));
            u8::from(p / c > overall)
        });
        let mut p_in: BTreeMap<(u16, u8), f64> = BTreeMap::new();
        let mut p_out: BTreeMap<(u16, u8), f64> = BTreeMap::new();
        let mut pos = [0.0; 2];
        let mut size = [0.0; 2];
        let mut dist = 0.0;
        for i in 0..ds.n() {
            let xb = u16::from(ds.features()[[i, 0]] > 1.5);
            let (y, s) = (ds.labels()[i], ds.protected()[i] as usize);
            *p_in.entry((xb, y)).or_default() += 1.0 / n;
            let flip = match s {
                _ if y != over[s] => 0.0,
                0 => a,
                _ => b,
            };
            *p_out.entry((xb, y)).or_default() += (1.0 - flip) / n;
            *p_out.entry((xb, 1 - y)).or_default() += flip / n;
            pos[s] += if y == 1 { 1.0 - flip } else { flip };
            size[s] += 1.0;
            dist += flip * cfg.label_flip_cost / n;
        }
        let target = p_in.iter().filter(|(k, _)| k.1 == 1).map(|(_, v)| v).sum::<f64>();
        let kl: f64 = p_out
            .iter()
            .filter(|(_, &q)| q > 0.0)
            .map(|(k, &q)| q * (q / p_in[k]).ln())
            .sum();
        let fair: f64 = (0..2)
            .map(|s| ((pos[s] / size[s] / target - 1.0).abs() - cfg.epsilon).max(0.0))
            .sum();
        kl + cfg.fairness_penalty * fair
            + cfg.distortion_penalty * (dist - cfg.distortion_budget).max(0.0)
    }

    #[test]
    fn toy_beats_exhaustive_flip_grid() {
        let ds = toy([50, 50], [0.8, 0.2], [0.3, 0.7]);
        let cfg = OppConfig {
            epsilon: 0.05,
            distortion_budget: 1.0,
            bins: 2,
            max_iter: 3000,
            ..Default::default()
        };
        let map = opp_fit(&ds, &cfg).unwrap();
        let res = map.residuals();
        let best_grid = (0..=100)
            .flat_map(|a| (0..=100).map(move |b| (a, b)))
            .map(|(a, b)| family_objective(&ds, &cfg, a as f64 / 100.0, b as f64 / 100.0))
            .fold(f64::INFINITY, f64::min);
        let fitted = *map.trace().last().unwrap();
        assert!(fitted <= best_grid + 2e-3, "fitted {fitted} grid {best_grid}");
        for r in res.group_rates {
            let ratio = r / res.target_rate;
            assert!((ratio - 1.0).abs() <= cfg.epsilon + 2e-3, "{:?}", res);
        }
    }
}
