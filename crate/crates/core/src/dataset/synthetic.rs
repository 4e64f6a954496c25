use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{FeatureKind, TabularDataset};
use crate::error::{Error, Result};

/// Gaussian fixture with a controllable label disparity between groups.
///
/// Exactly half of the rows (rounded down) are privileged. Labels are drawn
/// with rate `0.5 + disparity / 2` in the privileged group and
/// `0.5 - disparity / 2` in the unprivileged group. `x1` is a noisy copy of
/// the label and `x2` a noisy copy of the group, so a model trained on the
/// raw data can pick up the group through `x2`.
pub fn make_synthetic(seed: u64, n: usize, disparity: f64) -> Result<TabularDataset> {
    if n < 8 {
        return Err(Error::Dataset(format!("synthetic data needs n >= 8, got {n}")));
    }
    if !(0.0..=1.0).contains(&disparity) {
        return Err(Error::Dataset(format!(
            "disparity must lie in [0, 1], got {disparity}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut protected: Vec<u8> = (0..n).map(|i| u8::from(i < n / 2)).collect();
    protected.shuffle(&mut rng);

    let mut labels = Vec::with_capacity(n);
    let mut features = Array2::<f64>::zeros((n, 2));
    for (i, &s) in protected.iter().enumerate() {
        let rate = if s == 1 {
            0.5 + disparity / 2.0
        } else {
            0.5 - disparity / 2.0
        };
        let y = u8::from(rng.random::<f64>() < rate);
        labels.push(y);
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        features[[i, 0]] = 2.0 * f64::from(y) - 1.0 + e1;
        features[[i, 1]] = 2.0 * f64::from(s) - 1.0 + e2;
    }
    TabularDataset::new(
        features,
        labels,
        protected,
        vec![1.0; n],
        vec!["x1".into(), "x2".into()],
        vec![FeatureKind::Numeric; 2],
        "synthetic",
    )
}
