//! Stratified train/validation/test holdout split.
//!
//! Split sizes are `round(n * validation)`, `round(n * test)` and the
//! remainder for training. Within each stratum the number of rows sent to a
//! split is the floor or ceiling of its proportional share; the per-stratum
//! allocation is an integer rounding of the `strata x splits` quota matrix
//! that preserves both row sums (stratum sizes) and column sums (split
//! sizes), found with a small max-flow.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.7,
            validation: 0.15,
            test: 0.15,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("train", self.train),
            ("validation", self.validation),
            ("test", self.test),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config {
                    path: format!("split.{name}"),
                    message: format!("fraction {f} must lie in (0, 1)"),
                });
            }
        }
        let sum = self.train + self.validation + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config {
                path: "split".into(),
                message: format!("train + validation + test must sum to 1, got {sum}"),
            });
        }
        Ok(())
    }

    /// `(train, validation, test)` sizes for `n` rows.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let val = (n as f64 * self.validation).round() as usize;
        let test = (n as f64 * self.test).round() as usize;
        (n - val - test, val, test)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    /// False when some (label, group) cell was empty and only the label
    /// was used for stratification.
    pub stratified_by_group: bool,
}

impl SplitIndices {
    /// SHA-256 over the three index lists.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (tag, part) in [
            (b'T', &self.train),
            (b'V', &self.validation),
            (b'E', &self.test),
        ] {
            h.update([tag]);
            for &i in part {
                h.update((i as u64).to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Integer allocation `alloc[c][j]` with `alloc[c][j] in {floor, ceil}` of
/// `sizes[c] * totals[j] / n` and exact row/column sums.
fn round_quota_matrix(sizes: &[usize], totals: &[usize]) -> Vec<Vec<usize>> {
    let n: usize = sizes.iter().sum();
    debug_assert_eq!(n, totals.iter().sum::<usize>());
    let rows = sizes.len();
    let cols = totals.len();
    let mut alloc = vec![vec![0usize; cols]; rows];
    let mut can_bump = vec![vec![false; cols]; rows];
    for c in 0..rows {
        for j in 0..cols {
            alloc[c][j] = sizes[c] * totals[j] / n;
            can_bump[c][j] = !(sizes[c] * totals[j]).is_multiple_of(n);
        }
    }
    let mut row_need: Vec<usize> = (0..rows)
        .map(|c| sizes[c] - alloc[c].iter().sum::<usize>())
        .collect();
    let mut col_need: Vec<usize> = (0..cols)
        .map(|j| totals[j] - (0..rows).map(|c| alloc[c][j]).sum::<usize>())
        .collect();
    // bumped[c][j] marks a +1 already granted; augmenting paths may move it
    let mut bumped = vec![vec![false; cols]; rows];

    fn augment(
        c: usize,
        can_bump: &[Vec<bool>],
        bumped: &mut [Vec<bool>],
        col_need: &mut [usize],
        seen: &mut [bool],
    ) -> bool {
        for j in 0..col_need.len() {
            if !can_bump[c][j] || bumped[c][j] || seen[j] {
                continue;
            }
            seen[j] = true;
            if col_need[j] > 0 {
                col_need[j] -= 1;
                bumped[c][j] = true;
                return true;
            }
            // column j is full: try to re-route one of its bumps elsewhere
            for c2 in 0..bumped.len() {
                if bumped[c2][j] && augment(c2, can_bump, bumped, col_need, seen) {
                    bumped[c2][j] = false;
                    bumped[c][j] = true;
                    return true;
                }
            }
        }
        false
    }

    for c in 0..rows {
        while row_need[c] > 0 {
            let mut seen = vec![false; cols];
            let ok = augment(c, &can_bump, &mut bumped, &mut col_need, &mut seen);
            assert!(ok, "quota matrix rounding always exists");
            row_need[c] -= 1;
        }
    }
    for c in 0..rows {
        for j in 0..cols {
            alloc[c][j] += usize::from(bumped[c][j]);
        }
    }
    alloc
}

/// Deterministic stratified holdout split indices.
pub fn split_indices(ds: &TabularDataset, spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    let n = ds.n();
    if n < 10 {
        return Err(Error::Dataset(format!("need at least 10 rows to split, got {n}")));
    }
    let (y, s) = (ds.labels(), ds.protected());
    for v in [0u8, 1] {
        if !y.contains(&v) {
            return Err(Error::Dataset(format!("label {v} absent; cannot split")));
        }
        if !s.contains(&v) {
            return Err(Error::Dataset(format!("group {v} absent; cannot split")));
        }
    }
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); 4];
    for i in 0..n {
        cells[(2 * y[i] + s[i]) as usize].push(i);
    }
    let by_group = cells.iter().all(|c| !c.is_empty());
    if !by_group {
        log::warn!(
            "{}: a (label, group) cell is empty; stratifying on label only",
            ds.provenance()
        );
        cells = vec![Vec::new(); 2];
        for i in 0..n {
            cells[y[i] as usize].push(i);
        }
    }

    let (n_train, n_val, n_test) = spec.sizes(n);
    let sizes: Vec<usize> = cells.iter().map(Vec::len).collect();
    let alloc = round_quota_matrix(&sizes, &[n_val, n_test, n_train]);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = SplitIndices {
        train: Vec::with_capacity(n_train),
        validation: Vec::with_capacity(n_val),
        test: Vec::with_capacity(n_test),
        stratified_by_group: by_group,
    };
    for (cell, a) in cells.iter_mut().zip(&alloc) {
        cell.shuffle(&mut rng);
        let (val, rest) = cell.split_at(a[0]);
        let (test, train) = rest.split_at(a[1]);
        out.validation.extend_from_slice(val);
        out.test.extend_from_slice(test);
        out.train.extend_from_slice(train);
    }
    out.train.sort_unstable();
    out.validation.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

/// Splits a dataset into `(train, validation, test)`.
pub fn split(
    ds: &TabularDataset,
    spec: &SplitSpec,
) -> Result<(TabularDataset, TabularDataset, TabularDataset)> {
    let idx = split_indices(ds, spec)?;
    Ok((
        ds.subset(&idx.train)?,
        ds.subset(&idx.validation)?,
        ds.subset(&idx.test)?,
    ))
}
