use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};

/// Multiplicative weight per (group, label) cell, indexed `[group][label]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellWeights(pub [[f64; 2]; 2]);

impl CellWeights {
    pub fn get(&self, group: u8, label: u8) -> f64 {
        self.0[group as usize][label as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReweighResult {
    pub dataset: TabularDataset,
    pub weights: CellWeights,
}

/// Rescales instance weights so that group and label are independent under
/// the weighted empirical distribution.
///
/// Each cell gets `P(S=s) P(Y=y) / P(S=s, Y=y)`, with all probabilities
/// taken from the input weights. Features and labels are untouched.
pub fn reweigh(ds: &TabularDataset) -> Result<ReweighResult> {
    let mut cell = [[0.0f64; 2]; 2];
    for ((&y, &s), &w) in ds.labels().iter().zip(ds.protected()).zip(ds.weights()) {
        cell[s as usize][y as usize] += w;
    }
    let total: f64 = cell.iter().flatten().sum();
    let group = [cell[0][0] + cell[0][1], cell[1][0] + cell[1][1]];
    let label = [cell[0][0] + cell[1][0], cell[0][1] + cell[1][1]];
    let mut table = [[0.0; 2]; 2];
    for s in 0..2 {
        for y in 0..2 {
            if cell[s][y] <= 0.0 {
                return Err(Error::EmptyCell {
                    group: s as u8,
                    label: y as u8,
                });
            }
            table[s][y] = group[s] * label[y] / (total * cell[s][y]);
        }
    }
    let table = CellWeights(table);
    let weights = ds
        .labels()
        .iter()
        .zip(ds.protected())
        .zip(ds.weights())
        .map(|((&y, &s), &w)| w * table.get(s, y))
        .collect();
    Ok(ReweighResult {
        dataset: ds.clone().with_weights(weights)?.with_lineage("reweighing"),
        weights: table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{base_rate, count_labels, disparate_impact, statistical_parity_difference};
    use ndarray::Array2;
    use proptest::prelude::*;

    fn fixture(labels: Vec<u8>, protected: Vec<u8>) -> TabularDataset {
        let n = labels.len();
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        TabularDataset::from_parts(x, labels, protected, "fixture").unwrap()
    }

    #[test]
    fn eight_row_hand_example() {
        // group 0: 3 of 4 positive; group 1: 1 of 4 positive
        let ds = fixture(vec![1, 1, 1, 0, 1, 0, 0, 0], vec![0, 0, 0, 0, 1, 1, 1, 1]);
        let out = reweigh(&ds).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-15;
        assert!(close(out.weights.get(0, 1), 2.0 / 3.0));
        assert!(close(out.weights.get(0, 0), 2.0));
        assert!(close(out.weights.get(1, 1), 2.0));
        assert!(close(out.weights.get(1, 0), 2.0 / 3.0));
        for g in [0, 1] {
            assert!(close(base_rate(&out.dataset, Some(g)).unwrap(), 0.5));
        }
    }

    #[test]
    fn independent_data_keeps_unit_weights() {
        let ds = fixture(vec![1, 0, 1, 0, 1, 0, 1, 0], vec![0, 0, 0, 0, 1, 1, 1, 1]);
        let out = reweigh(&ds).unwrap();
        assert!(out.weights.0.iter().flatten().all(|&w| w == 1.0));
    }

    #[test]
    fn empty_cell_is_named() {
        let ds = fixture(vec![1, 1, 1, 0], vec![0, 0, 1, 1]);
        match reweigh(&ds) {
            Err(Error::EmptyCell { group: 0, label: 0 }) => {}
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn parity_after_reweighing(
            rows in proptest::collection::vec((0u8..2, 0u8..2, 0.1f64..5.0), 4..80),
        ) {
            let labels: Vec<u8> = rows.iter().map(|r| r.0).collect();
            let protected: Vec<u8> = rows.iter().map(|r| r.1).collect();
            let weights: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let ds = fixture(labels, protected).with_weights(weights).unwrap();
            match reweigh(&ds) {
                Err(Error::EmptyCell { .. }) => {}
                Err(e) => prop_assert!(false, "{e}"),
                Ok(out) => {
                    prop_assert!((disparate_impact(&out.dataset).unwrap() - 1.0).abs() < 1e-12);
                    prop_assert!(statistical_parity_difference(&out.dataset).unwrap().abs() < 1e-12);
                    prop_assert_eq!(count_labels(&out.dataset), count_labels(&ds));
                    prop_assert_eq!(out.dataset.features(), ds.features());
                    prop_assert!(out.weights.0.iter().flatten().all(|&w| w > 0.0));
                    let again = reweigh(&out.dataset).unwrap();
                    prop_assert!(again.weights.0.iter().flatten().all(|w| (w - 1.0).abs() < 1e-9));
                }
            }
        }
    }
}
