//! Shared fixtures and brute-force oracles for integration tests.
//!
//! The oracles work on plain slices and share no code with the library:
//! every quantity is recomputed from its definition, with `None` standing
//! for an undefined value.

#![allow(dead_code)]

use std::path::PathBuf;

use fairbench::dataset::recipes::Recipe;
use fairbench::dataset::TabularDataset;
use fairbench::pipeline::{DatasetSource, LoadedDataset, DATA_DIR_ENV};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `$FAIRBENCH_DATA_DIR`, else the workspace `data/` directory.
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

/// `None` when neither the prepared CSV nor the raw files are present.
pub fn load_recipe(recipe: Recipe) -> Option<LoadedDataset> {
    let dir = data_dir();
    let prepared = dir.join(format!("{}.csv", recipe.name()));
    if !prepared.is_file() && !recipe.available(&dir.join("raw")) {
        return None;
    }
    let source = DatasetSource::Recipe {
        recipe,
        data_dir: dir,
    };
    Some(source.load(None).unwrap_or_else(|e| panic!("loading {recipe}: {e}")))
}

/// Plain copy of a dataset for oracle use.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
    pub s: Vec<u8>,
    pub w: Vec<f64>,
    pub scores: Vec<f64>,
}

impl Fixture {
    /// `n` in `6..=20`. Roughly half the fixtures use small integer features
    /// so that neighbour ties occur; a few have an empty group.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(6..=20);
        let d = rng.random_range(1..=4);
        let integer = rng.random_bool(0.5);
        let one_group = rng.random_bool(0.08);
        let x = (0..n)
            .map(|_| {
                (0..d)
                    .map(|_| {
                        if integer {
                            f64::from(rng.random_range(0..3u8))
                        } else {
                            rng.random_range(-2.0..2.0)
                        }
                    })
                    .collect()
            })
            .collect();
        let y = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
        let s = (0..n)
            .map(|_| if one_group { 1 } else { u8::from(rng.random_bool(0.5)) })
            .collect();
        let w = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
        let scores = (0..n).map(|_| rng.random::<f64>()).collect();
        Fixture { x, y, s, w, scores }
    }

    pub fn dataset(&self) -> TabularDataset {
        let (n, d) = (self.x.len(), self.x[0].len());
        let flat: Vec<f64> = self.x.iter().flatten().copied().collect();
        let features = Array2::from_shape_vec((n, d), flat).unwrap();
        TabularDataset::from_parts(features, self.y.clone(), self.s.clone(), "fixture")
            .unwrap()
            .with_weights(self.w.clone())
            .unwrap()
    }

    pub fn swapped(&self) -> Self {
        Fixture {
            s: self.s.iter().map(|&s| 1 - s).collect(),
            ..self.clone()
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Fixture {
            w: self.w.iter().map(|&w| w * c).collect(),
            ..self.clone()
        }
    }
}

pub fn rate(values: &[u8], s: &[u8], w: &[f64], group: Option<u8>) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..values.len() {
        if group.is_none_or(|g| s[i] == g) {
            den += w[i];
            if values[i] == 1 {
                num += w[i];
            }
        }
    }
    (den > 0.0).then(|| num / den)
}

pub fn disparate_impact(values: &[u8], s: &[u8], w: &[f64]) -> Option<f64> {
    let (u, p) = (rate(values, s, w, Some(0))?, rate(values, s, w, Some(1))?);
    (p > 0.0).then(|| u / p)
}

pub fn parity_difference(values: &[u8], s: &[u8], w: &[f64]) -> Option<f64> {
    Some(rate(values, s, w, Some(0))? - rate(values, s, w, Some(1))?)
}

pub fn empirical_difference(y: &[u8], s: &[u8]) -> Option<f64> {
    let count = |g: u8, l: Option<u8>| {
        y.iter()
            .zip(s)
            .filter(|(&yy, &ss)| ss == g && l.is_none_or(|l| yy == l))
            .count() as f64
    };
    if count(0, None) == 0.0 || count(1, None) == 0.0 {
        return None;
    }
    let p = |g: u8, l: u8| (count(g, Some(l)) + 0.5) / (count(g, None) + 1.0);
    let a = (p(0, 0) / p(1, 0)).ln().abs();
    let b = (p(0, 1) / p(1, 1)).ln().abs();
    Some(a.max(b))
}

/// Sorts all other records by `(squared distance, index)` and takes `k`.
pub fn consistency(x: &[Vec<f64>], y: &[u8], k: usize) -> Option<f64> {
    let n = x.len();
    if n <= k {
        return None;
    }
    let mut total = 0.0;
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d2: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, j)
            })
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mean = others[..k].iter().map(|&(_, j)| f64::from(y[j])).sum::<f64>() / k as f64;
        total += (f64::from(y[i]) - mean).abs();
    }
    Some(1.0 - total / n as f64)
}

/// Weighted true and false positive rates of one group or of everyone.
pub fn tpr_fpr(y: &[u8], pred: &[u8], s: &[u8], w: &[f64], group: Option<u8>) -> (Option<f64>, Option<f64>) {
    let (mut tp, mut pos, mut fp, mut neg) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..y.len() {
        if group.is_some_and(|g| s[i] != g) {
            continue;
        }
        if y[i] == 1 {
            pos += w[i];
            if pred[i] == 1 {
                tp += w[i];
            }
        } else {
            neg += w[i];
            if pred[i] == 1 {
                fp += w[i];
            }
        }
    }
    ((pos > 0.0).then(|| tp / pos), (neg > 0.0).then(|| fp / neg))
}

pub fn balanced_accuracy(y: &[u8], pred: &[u8], s: &[u8], w: &[f64]) -> Option<f64> {
    let (tpr, fpr) = tpr_fpr(y, pred, s, w, None);
    Some((tpr? + 1.0 - fpr?) / 2.0)
}

pub fn equal_opportunity(y: &[u8], pred: &[u8], s: &[u8], w: &[f64]) -> Option<f64> {
    Some(tpr_fpr(y, pred, s, w, Some(0)).0? - tpr_fpr(y, pred, s, w, Some(1)).0?)
}

pub fn average_odds(y: &[u8], pred: &[u8], s: &[u8], w: &[f64]) -> Option<f64> {
    let (tu, fu) = tpr_fpr(y, pred, s, w, Some(0));
    let (tp, fp) = tpr_fpr(y, pred, s, w, Some(1));
    Some(((fu? - fp?) + (tu? - tp?)) / 2.0)
}

/// Unweighted; an all-zero benefit vector counts as perfectly equal.
pub fn theil(y: &[u8], pred: &[u8]) -> Option<f64> {
    if y.is_empty() {
        return None;
    }
    let b: Vec<f64> = y.iter().zip(pred).map(|(&t, &p)| f64::from(p) + 1.0 - f64::from(t)).collect();
    let mu = b.iter().sum::<f64>() / b.len() as f64;
    if mu == 0.0 {
        return Some(0.0);
    }
    Some(
        b.iter()
            .map(|&v| if v == 0.0 { 0.0 } else { (v / mu) * (v / mu).ln() })
            .sum::<f64>()
            / b.len() as f64,
    )
}

/// Agreement of a library value with an oracle value: both undefined, or
/// both defined within `tol` scaled by `max(1, |oracle|)`.
pub fn agrees(got: &Result<f64, fairbench::MetricError>, want: Option<f64>, tol: f64) -> bool {
    match (got, want) {
        (Err(_), None) => true,
        (Ok(g), Some(w)) => (g - w).abs() <= tol * w.abs().max(1.0),
        _ => false,
    }
}

/// Two-sample Kolmogorov-Smirnov statistic: the largest gap between the
/// empirical CDFs, evaluated at every observed value.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let sorted = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let (a, b) = (sorted(a), sorted(b));
    let (mut i, mut j, mut gap) = (0, 0, 0.0f64);
    while i < a.len() || j < b.len() {
        let t = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while a.get(i).is_some_and(|&x| x <= t) {
            i += 1;
        }
        while b.get(j).is_some_and(|&y| y <= t) {
            j += 1;
        }
        gap = gap.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    gap
}

pub const ORACLE_TOL: f64 = 1e-12;
pub const ORACLE_THRESHOLDS: [f64; 3] = [0.25, 0.5, 0.75];

type Measured = Result<f64, fairbench::MetricError>;

fn negates(a: &Measured, b: &Measured) -> bool {
    match (a, b) {
        (Ok(x), Ok(y)) => (x + y).abs() <= ORACLE_TOL,
        (Err(_), Err(_)) => true,
        _ => false,
    }
}

fn inverts(a: &Measured, b: &Measured) -> bool {
    match (a, b) {
        (Ok(x), Ok(y)) => (x * y - 1.0).abs() <= ORACLE_TOL,
        (Ok(x), Err(_)) | (Err(_), Ok(x)) => *x == 0.0,
        (Err(_), Err(_)) => true,
    }
}

fn same(a: &Measured, b: &Measured) -> bool {
    agrees(a, b.as_ref().ok().copied(), ORACLE_TOL)
}

/// Library metrics at every data and prediction level, compared with the
/// oracles, under a group swap and under weight scaling. Returns one line
/// per disagreement.
pub fn check_fixture(f: &Fixture) -> Vec<String> {
    use fairbench::metrics as m;
    let mut bad = Vec::new();
    let mut expect = |ok: bool, what: String| {
        if !ok {
            bad.push(what);
        }
    };
    let ds = f.dataset();
    let (y, s, w) = (&f.y[..], &f.s[..], &f.w[..]);

    for (name, got, want) in [
        ("base rate", m::base_rate(&ds, None), rate(y, s, w, None)),
        ("base rate s=0", m::base_rate(&ds, Some(0)), rate(y, s, w, Some(0))),
        ("base rate s=1", m::base_rate(&ds, Some(1)), rate(y, s, w, Some(1))),
        ("DI", m::disparate_impact(&ds), disparate_impact(y, s, w)),
        ("SPD", m::statistical_parity_difference(&ds), parity_difference(y, s, w)),
        ("empirical difference", m::empirical_difference(&ds), empirical_difference(y, s)),
        ("consistency", m::consistency(&ds, 5), consistency(&f.x, y, 5)),
    ] {
        expect(agrees(&got, want, ORACLE_TOL), format!("{name}: {got:?} vs {want:?}"));
    }

    let classify = |fx: &Fixture, t: f64| {
        m::classification_metrics(&fx.y, &fx.scores, t, &fx.s, &fx.w).expect("lengths match")
    };
    let thresholds = ORACLE_THRESHOLDS.into_iter().chain([f.scores[0]]);
    for t in thresholds {
        let got = classify(f, t);
        let pred: Vec<u8> = f.scores.iter().map(|&p| u8::from(p >= t)).collect();
        for (name, value, want) in [
            ("BA", &got.balanced_accuracy, balanced_accuracy(y, &pred, s, w)),
            ("SPD", &got.statistical_parity_difference, parity_difference(&pred, s, w)),
            ("DI", &got.disparate_impact, disparate_impact(&pred, s, w)),
            ("EOD", &got.equal_opportunity_difference, equal_opportunity(y, &pred, s, w)),
            ("AOD", &got.average_odds_difference, average_odds(y, &pred, s, w)),
            ("Theil", &got.theil_index, theil(y, &pred)),
            ("TPR s=0", &got.unprivileged.tpr, tpr_fpr(y, &pred, s, w, Some(0)).0),
            ("FPR s=1", &got.privileged.fpr, tpr_fpr(y, &pred, s, w, Some(1)).1),
        ] {
            expect(agrees(value, want, ORACLE_TOL), format!("{name} at {t}: {value:?} vs {want:?}"));
        }

        let swapped = classify(&f.swapped(), t);
        expect(
            negates(&got.statistical_parity_difference, &swapped.statistical_parity_difference),
            format!("SPD at {t} does not negate under swap"),
        );
        expect(
            negates(&got.equal_opportunity_difference, &swapped.equal_opportunity_difference),
            format!("EOD at {t} does not negate under swap"),
        );
        expect(
            negates(&got.average_odds_difference, &swapped.average_odds_difference),
            format!("AOD at {t} does not negate under swap"),
        );
        expect(
            inverts(&got.disparate_impact, &swapped.disparate_impact),
            format!("DI at {t} does not invert under swap"),
        );

        for c in [0.01, 7.3] {
            let scaled = classify(&f.scaled(c), t);
            for (name, a, b) in [
                ("BA", &got.balanced_accuracy, &scaled.balanced_accuracy),
                ("SPD", &got.statistical_parity_difference, &scaled.statistical_parity_difference),
                ("DI", &got.disparate_impact, &scaled.disparate_impact),
                ("EOD", &got.equal_opportunity_difference, &scaled.equal_opportunity_difference),
                ("AOD", &got.average_odds_difference, &scaled.average_odds_difference),
                ("Theil", &got.theil_index, &scaled.theil_index),
            ] {
                expect(same(a, b), format!("{name} at {t} changes when weights scale by {c}"));
            }
        }
    }

    let swapped = f.swapped().dataset();
    expect(
        negates(
            &m::statistical_parity_difference(&ds),
            &m::statistical_parity_difference(&swapped),
        ),
        "data SPD does not negate under swap".into(),
    );
    expect(
        inverts(&m::disparate_impact(&ds), &m::disparate_impact(&swapped)),
        "data DI does not invert under swap".into(),
    );
    for c in [0.01, 7.3] {
        let scaled = f.scaled(c).dataset();
        expect(
            same(&m::disparate_impact(&ds), &m::disparate_impact(&scaled))
                && same(
                    &m::statistical_parity_difference(&ds),
                    &m::statistical_parity_difference(&scaled),
                )
                && same(&m::base_rate(&ds, None), &m::base_rate(&scaled, None)),
            format!("data metrics change when weights scale by {c}"),
        );
    }
    bad
}
