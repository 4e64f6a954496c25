//! Prototype-based fair representations.
//!
//! Records are mapped to a soft assignment over `K` prototypes
//! (`M[i,k] = softmax_k(-|x_i - v_k|^2)`), reconstructed as `sum_k M[i,k] v_k`
//! and labelled as `sum_k M[i,k] w_k`. The objective trades off three terms:
//!
//! * parity: `sum_k |mean_{S=1} M[.,k] - mean_{S=0} M[.,k]|`;
//! * reconstruction: mean squared reconstruction error;
//! * prediction: cross-entropy of the clamped prototype label.
//!
//! Fitting is projected gradient descent (label weights kept in [0, 1]) with
//! backtracking, on z-scored features.

use ndarray::{Array1, Array2, Axis};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};

const CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LfrConfig {
    pub prototypes: usize,
    pub a_x: f64,
    pub a_y: f64,
    pub a_z: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LfrConfig {
    fn default() -> Self {
        Self {
            prototypes: 10,
            a_x: 0.01,
            a_y: 1.0,
            a_z: 50.0,
            max_iter: 5000,
            tol: 1e-6,
        }
    }
}

impl LfrConfig {
    pub fn validate(&self) -> Result<()> {
        let param = |name: &str, message: String| Error::Param {
            name: name.into(),
            message,
        };
        if self.prototypes < 2 {
            return Err(param("prototypes", "need at least 2 prototypes".into()));
        }
        for (name, v) in [("a_x", self.a_x), ("a_y", self.a_y), ("a_z", self.a_z)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(param(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.tol > 0.0) {
            return Err(param("tol", format!("must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Optimisation variables: prototypes `V` (K x d) and prototype labels `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct LfrParams {
    pub prototypes: Array2<f64>,
    pub label_weights: Array1<f64>,
}

impl LfrParams {
    fn axpy(&self, step: f64, dir: &LfrParams) -> LfrParams {
        LfrParams {
            prototypes: &self.prototypes + &(&dir.prototypes * step),
            label_weights: &self.label_weights + &(&dir.label_weights * step),
        }
    }

    fn project(mut self) -> Self {
        self.label_weights.mapv_inplace(|w| w.clamp(0.0, 1.0));
        self
    }

    fn dot(&self, other: &LfrParams) -> f64 {
        (&self.prototypes * &other.prototypes).sum()
            + self.label_weights.dot(&other.label_weights)
    }
}

/// Value of each objective term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LfrLoss {
    pub parity: f64,
    pub reconstruction: f64,
    pub prediction: f64,
    pub total: f64,
}

/// The fitting problem on already standardised features.
pub struct LfrProblem<'a> {
    n: usize,
    d: usize,
    labels: &'a [u8],
    protected: &'a [u8],
    n_group: [f64; 2],
    config: LfrConfig,
    data: &'a Array2<f64>,
}

/// Row-wise softmax of `-|x_i - v_k|^2`.
fn assignments(x: &Array2<f64>, prototypes: &Array2<f64>) -> Array2<f64> {
    let (n, k) = (x.nrows(), prototypes.nrows());
    let mut m = Array2::<f64>::zeros((n, k));
    for (i, xi) in x.outer_iter().enumerate() {
        let mut row = m.row_mut(i);
        for (kk, vk) in prototypes.outer_iter().enumerate() {
            row[kk] = -xi.iter().zip(vk).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        let top = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|a| (a - top).exp());
        let total = row.sum();
        row /= total;
    }
    m
}

impl<'a> LfrProblem<'a> {
    pub fn new(
        x: &'a Array2<f64>,
        labels: &'a [u8],
        protected: &'a [u8],
        config: LfrConfig,
    ) -> Result<Self> {
        let n = x.nrows();
        if labels.len() != n || protected.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: labels.len().min(protected.len()),
            });
        }
        let mut n_group = [0.0; 2];
        for &s in protected {
            n_group[s as usize] += 1.0;
        }
        if n_group.contains(&0.0) {
            return Err(Error::Dataset("both groups must be present to fit LFR".into()));
        }
        Ok(Self {
            n,
            d: x.ncols(),
            labels,
            protected,
            n_group,
            config,
            data: x,
        })
    }

    fn terms(&self, p: &LfrParams, m: &Array2<f64>) -> LfrLoss {
        let c = &self.config;
        let k = p.prototypes.nrows();
        let mut group_mean = [vec![0.0; k], vec![0.0; k]];
        for (i, row) in m.outer_iter().enumerate() {
            let s = self.protected[i] as usize;
            for kk in 0..k {
                group_mean[s][kk] += row[kk] / self.n_group[s];
            }
        }
        let parity: f64 = (0..k).map(|kk| (group_mean[1][kk] - group_mean[0][kk]).abs()).sum();
        let recon = m.dot(&p.prototypes);
        let reconstruction = (self.data - &recon).mapv(|r| r * r).sum() / self.n as f64;
        let y_hat = m.dot(&p.label_weights);
        let prediction = -self
            .labels
            .iter()
            .zip(&y_hat)
            .map(|(&y, &q)| {
                let q = q.clamp(CLAMP, 1.0 - CLAMP);
                if y == 1 {
                    q.ln()
                } else {
                    (1.0 - q).ln()
                }
            })
            .sum::<f64>()
            / self.n as f64;
        LfrLoss {
            parity,
            reconstruction,
            prediction,
            total: c.a_z * parity + c.a_x * reconstruction + c.a_y * prediction,
        }
    }

    pub fn loss(&self, p: &LfrParams) -> LfrLoss {
        self.terms(p, &assignments(self.data, &p.prototypes))
    }

    /// Objective and its gradient. The parity term uses `sign(0) = 0`; the
    /// prediction term has zero gradient where the clamp is active.
    pub fn loss_and_gradient(&self, p: &LfrParams) -> (LfrLoss, LfrParams) {
        let c = &self.config;
        let n = self.n as f64;
        let (k, d) = (p.prototypes.nrows(), self.d);
        let m = assignments(self.data, &p.prototypes);
        let loss = self.terms(p, &m);

        let mut group_mean = [vec![0.0; k], vec![0.0; k]];
        for (i, row) in m.outer_iter().enumerate() {
            let s = self.protected[i] as usize;
            for kk in 0..k {
                group_mean[s][kk] += row[kk] / self.n_group[s];
            }
        }
        let parity_sign: Vec<f64> = (0..k)
            .map(|kk| {
                let diff = group_mean[1][kk] - group_mean[0][kk];
                if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            })
            .collect();

        let recon = m.dot(&p.prototypes);
        let resid = self.data - &recon;
        let y_hat = m.dot(&p.label_weights);
        // dL_y / d y_hat_i (already divided by n), zero on the clamp
        let dy: Vec<f64> = self
            .labels
            .iter()
            .zip(&y_hat)
            .map(|(&y, &q)| {
                if !(CLAMP..=1.0 - CLAMP).contains(&q) {
                    0.0
                } else if y == 1 {
                    -1.0 / (q * n)
                } else {
                    1.0 / ((1.0 - q) * n)
                }
            })
            .collect();

        let mut grad_v = Array2::<f64>::zeros((k, d));
        let mut grad_w = Array1::<f64>::zeros(k);
        let mut g_m = vec![0.0; k];
        for i in 0..self.n {
            let s = self.protected[i];
            let xi = self.data.row(i);
            let ri = resid.row(i);
            let mi = m.row(i);
            let group_factor = if s == 1 {
                1.0 / self.n_group[1]
            } else {
                -1.0 / self.n_group[0]
            };
            for kk in 0..k {
                let vk = p.prototypes.row(kk);
                g_m[kk] = c.a_z * parity_sign[kk] * group_factor
                    + c.a_x * (-2.0 / n) * ri.dot(&vk)
                    + c.a_y * dy[i] * p.label_weights[kk];
                grad_w[kk] += c.a_y * dy[i] * mi[kk];
            }
            let mean_g: f64 = (0..k).map(|kk| mi[kk] * g_m[kk]).sum();
            for kk in 0..k {
                // dL/da_ik through the softmax, a_ik = -|x_i - v_k|^2
                let da = mi[kk] * (g_m[kk] - mean_g);
                let direct = c.a_x * (-2.0 / n) * mi[kk];
                let mut gv = grad_v.row_mut(kk);
                for j in 0..d {
                    gv[j] += da * 2.0 * (xi[j] - p.prototypes[[kk, j]]) + direct * ri[j];
                }
            }
        }
        (
            loss,
            LfrParams {
                prototypes: grad_v,
                label_weights: grad_w,
            },
        )
    }

    /// Projected gradient descent with Armijo backtracking; every accepted
    /// step strictly lowers the objective.
    fn minimise(&self, mut p: LfrParams) -> Result<(LfrParams, Vec<f64>, usize)> {
        let mut step = 1.0;
        let (mut loss, mut grad) = self.loss_and_gradient(&p);
        check_finite(loss.total)?;
        let mut trace = vec![loss.total];
        let mut iterations = 0;
        for _ in 0..self.config.max_iter {
            iterations += 1;
            let mut accepted = None;
            for _ in 0..60 {
                let cand = p.axpy(-step, &grad).project();
                let moved = cand.axpy(-1.0, &p);
                let decrease = -grad.dot(&moved);
                let cand_loss = self.loss(&cand);
                if cand_loss.total.is_finite()
                    && cand_loss.total < loss.total
                    && loss.total - cand_loss.total >= 1e-4 * decrease
                {
                    accepted = Some((cand, cand_loss));
                    break;
                }
                step *= 0.5;
            }
            let Some((cand, cand_loss)) = accepted else {
                break;
            };
            let rel = (loss.total - cand_loss.total) / loss.total.abs().max(1e-12);
            p = cand;
            (loss, grad) = self.loss_and_gradient(&p);
            trace.push(loss.total);
            step *= 2.0;
            if rel < self.config.tol {
                break;
            }
        }
        Ok((p, trace, iterations))
    }
}

fn check_finite(v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Optimization(format!("LFR objective is not finite ({v})")))
    }
}

/// A fitted representation. Prototypes live in standardised feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct LfrModel {
    pub params: LfrParams,
    pub config: LfrConfig,
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
    /// Objective after every accepted step, starting at the initial value.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub final_loss: LfrLoss,
    pub seed: u64,
}

/// Column means and standard deviations (unit scale for constant columns).
fn standardisation(x: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let scale = x
        .std_axis(Axis(0), 0.0)
        .mapv(|s| if s > 0.0 && s.is_finite() { s } else { 1.0 });
    (mean, scale)
}

fn standardise(x: &Array2<f64>, mean: &Array1<f64>, scale: &Array1<f64>) -> Array2<f64> {
    (x - mean) / scale
}

/// Random initial parameters: `K` distinct records as prototypes and
/// uniform label weights.
pub fn initial_params(x_std: &Array2<f64>, k: usize, seed: u64) -> LfrParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = sample(&mut rng, x_std.nrows(), k).into_vec();
    LfrParams {
        prototypes: x_std.select(Axis(0), &rows),
        label_weights: (0..k).map(|_| rng.random::<f64>()).collect(),
    }
}

pub fn lfr_fit(ds: &TabularDataset, cfg: &LfrConfig, seed: u64) -> Result<LfrModel> {
    cfg.validate()?;
    if cfg.prototypes >= ds.n() {
        return Err(Error::Param {
            name: "prototypes".into(),
            message: format!("need fewer prototypes than records ({} >= {})", cfg.prototypes, ds.n()),
        });
    }
    let (mean, scale) = standardisation(ds.features());
    let x = standardise(ds.features(), &mean, &scale);
    let problem = LfrProblem::new(&x, ds.labels(), ds.protected(), *cfg)?;
    let init = initial_params(&x, cfg.prototypes, seed);
    let (params, trace, iterations) = problem.minimise(init)?;
    let final_loss = problem.loss(&params);
    check_finite(final_loss.total)?;
    log::debug!(
        "lfr: {} iterations, objective {:.6} -> {:.6}",
        iterations,
        trace[0],
        final_loss.total
    );
    Ok(LfrModel {
        params,
        config: *cfg,
        mean,
        scale,
        trace,
        iterations,
        final_loss,
        seed,
    })
}

impl LfrModel {
    fn check_dim(&self, ds: &TabularDataset) -> Result<()> {
        if ds.d() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                actual: ds.d(),
            });
        }
        Ok(())
    }

    /// `(reconstructed features in original units, prototype label score)`.
    pub fn represent(&self, ds: &TabularDataset) -> Result<(Array2<f64>, Array1<f64>)> {
        self.check_dim(ds)?;
        let x = standardise(ds.features(), &self.mean, &self.scale);
        let m = assignments(&x, &self.params.prototypes);
        let recon = m.dot(&self.params.prototypes) * &self.scale + &self.mean;
        Ok((recon, m.dot(&self.params.label_weights)))
    }

    /// Replaces features by their reconstruction and labels by
    /// `[score >= 0.5]`.
    pub fn transform(&self, ds: &TabularDataset) -> Result<TabularDataset> {
        let (recon, score) = self.represent(ds)?;
        let labels = score.iter().map(|&q| u8::from(q >= 0.5)).collect();
        Ok(ds
            .clone()
            .with_features(recon)?
            .with_labels(labels)?
            .with_lineage("lfr"))
    }

    /// Replaces features only; labels stay as observed.
    pub fn transform_features(&self, ds: &TabularDataset) -> Result<TabularDataset> {
        let (recon, _) = self.represent(ds)?;
        Ok(ds.clone().with_features(recon)?.with_lineage("lfr"))
    }

    /// Plain-text dump for inspection.
    pub fn debug_dump(&self) -> String {
        let mut out = String::from("lfr-model 1\n");
        let c = &self.config;
        out += &format!(
            "prototypes {} a_x {} a_y {} a_z {} seed {} iterations {}\n",
            c.prototypes, c.a_x, c.a_y, c.a_z, self.seed, self.iterations
        );
        out += &format!(
            "objective {} parity {} reconstruction {} prediction {}\n",
            self.final_loss.total,
            self.final_loss.parity,
            self.final_loss.reconstruction,
            self.final_loss.prediction
        );
        for (k, v) in self.params.prototypes.outer_iter().enumerate() {
            let coords: Vec<String> = v.iter().map(|c| c.to_string()).collect();
            out += &format!(
                "v{k} w={} [{}]\n",
                self.params.label_weights[k],
                coords.join(" ")
            );
        }
        out
    }
}
