use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegConfig {
    pub l2: f64,
    pub max_iter: usize,
    /// Stop once the largest gradient component is at most this.
    pub tol: f64,
    pub standardize: bool,
    /// Unused by the deterministic solver; kept so that every adapter
    /// accepts the same seeding convention.
    pub seed: u64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            max_iter: 5000,
            tol: 1e-6,
            standardize: true,
            seed: 0,
        }
    }
}

impl LogRegConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(Error::Param {
                name: "l2".into(),
                message: format!("must be non-negative, got {}", self.l2),
            });
        }
        if !(self.tol > 0.0) {
            return Err(Error::Param {
                name: "tol".into(),
                message: format!("must be positive, got {}", self.tol),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingDiagnostics {
    pub iterations: usize,
    pub final_gradient_norm: f64,
    pub final_loss: f64,
    pub converged: bool,
}

/// Coefficients act on standardised features.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub coefficients: Array1<f64>,
    pub intercept: f64,
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
    pub l2: f64,
    pub diagnostics: TrainingDiagnostics,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Weighted regularised log-loss on standardised features.
pub struct LogisticObjective<'a> {
    z: ArrayView2<'a, f64>,
    y: &'a [u8],
    w: Array1<f64>,
    l2: f64,
}

impl<'a> LogisticObjective<'a> {
    /// Weights are normalised to sum to one.
    pub fn new(z: ArrayView2<'a, f64>, y: &'a [u8], weights: &[f64], l2: f64) -> Self {
        let total: f64 = weights.iter().sum();
        Self {
            z,
            y,
            w: weights.iter().map(|w| w / total).collect(),
            l2,
        }
    }

    fn margins(&self, beta: &Array1<f64>, b: f64) -> Array1<f64> {
        self.z.dot(beta) + b
    }

    pub fn loss(&self, beta: &Array1<f64>, b: f64) -> f64 {
        let eta = self.margins(beta, b);
        let data: f64 = eta
            .iter()
            .zip(self.y)
            .zip(&self.w)
            .map(|((&e, &y), &w)| w * (softplus(e) - f64::from(y) * e))
            .sum();
        data + 0.5 * self.l2 * beta.dot(beta)
    }

    /// `(loss, d loss / d beta, d loss / d intercept)`.
    pub fn loss_and_gradient(&self, beta: &Array1<f64>, b: f64) -> (f64, Array1<f64>, f64) {
        let eta = self.margins(beta, b);
        let mut loss = 0.0;
        let mut resid = Array1::<f64>::zeros(eta.len());
        for (i, &e) in eta.iter().enumerate() {
            let y = f64::from(self.y[i]);
            loss += self.w[i] * (softplus(e) - y * e);
            resid[i] = self.w[i] * (sigmoid(e) - y);
        }
        let grad = self.z.t().dot(&resid) + &(beta * self.l2);
        (loss + 0.5 * self.l2 * beta.dot(beta), grad, resid.sum())
    }
}

/// Weighted column means and standard deviations; constant columns get
/// unit scale.
fn weighted_standardisation(x: &Array2<f64>, weights: &[f64]) -> (Array1<f64>, Array1<f64>) {
    let total: f64 = weights.iter().sum();
    let w = Array1::from_iter(weights.iter().map(|w| w / total));
    let mean = x.t().dot(&w);
    let centred = x - &mean;
    let var = (&centred * &centred).t().dot(&w);
    let scale = var.mapv(|v| {
        let s = v.sqrt();
        if s > 1e-12 * (1.0 + s) && s.is_finite() {
            s
        } else {
            1.0
        }
    });
    (mean, scale)
}

fn max_abs(g: &Array1<f64>, gb: f64) -> f64 {
    g.iter().fold(gb.abs(), |m, v| m.max(v.abs()))
}

/// Full-batch gradient descent with Armijo backtracking. The first trial step
/// of each iteration is the Barzilai-Borwein estimate. Accepted steps lower
/// the objective, or, once changes are below rounding, the gradient norm.
pub fn train_logreg(train: &TabularDataset, cfg: &LogRegConfig) -> Result<TrainedModel> {
    train_logreg_from(train, cfg, None)
}

/// As [`train_logreg`], starting from `init = (coefficients, intercept)` in
/// standardised space instead of zero.
pub fn train_logreg_from(
    train: &TabularDataset,
    cfg: &LogRegConfig,
    init: Option<(Array1<f64>, f64)>,
) -> Result<TrainedModel> {
    cfg.validate()?;
    let y = train.labels();
    if !y.contains(&0) || !y.contains(&1) {
        return Err(Error::Dataset(
            "training labels contain a single class; cannot fit a classifier".into(),
        ));
    }
    let d = train.d();
    let (mean, scale) = if cfg.standardize {
        weighted_standardisation(train.features(), train.weights())
    } else {
        (Array1::zeros(d), Array1::ones(d))
    };
    let z = (train.features() - &mean) / &scale;
    let obj = LogisticObjective::new(z.view(), y, train.weights(), cfg.l2);

    let (mut beta, mut b) = init.unwrap_or_else(|| (Array1::zeros(d), 0.0));
    if beta.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: beta.len(),
        });
    }
    let (mut loss, mut grad, mut grad_b) = obj.loss_and_gradient(&beta, b);
    let mut step = 1.0;
    let mut iterations = 0;
    let mut converged = max_abs(&grad, grad_b) <= cfg.tol;
    while !converged && iterations < cfg.max_iter {
        iterations += 1;
        let g2 = grad.dot(&grad) + grad_b * grad_b;
        let grad_norm = max_abs(&grad, grad_b);
        let flat = 8.0 * f64::EPSILON * loss.abs().max(f64::MIN_POSITIVE);
        let mut accepted = None;
        for _ in 0..60 {
            let cand_beta = &beta - &(&grad * step);
            let cand_b = b - step * grad_b;
            let cand_loss = obj.loss(&cand_beta, cand_b);
            if cand_loss <= loss - 0.5 * step * g2 {
                let eval = obj.loss_and_gradient(&cand_beta, cand_b);
                accepted = Some((cand_beta, cand_b, eval));
                break;
            }
            // below rounding the loss cannot rank candidates; the gradient can
            if (cand_loss - loss).abs() <= flat {
                let eval = obj.loss_and_gradient(&cand_beta, cand_b);
                if max_abs(&eval.1, eval.2) < grad_norm {
                    accepted = Some((cand_beta, cand_b, eval));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((new_beta, new_b, (new_loss, new_grad, new_grad_b))) = accepted else {
            break;
        };
        if !new_loss.is_finite() {
            return Err(Error::Optimization(format!(
                "logistic loss became non-finite at iteration {iterations}"
            )));
        }
        let s2 = (&new_beta - &beta).mapv(|v| v * v).sum() + (new_b - b).powi(2);
        let sy = (&new_beta - &beta).dot(&(&new_grad - &grad)) + (new_b - b) * (new_grad_b - grad_b);
        step = if sy > 0.0 { s2 / sy } else { step * 2.0 };
        (beta, b, loss, grad, grad_b) = (new_beta, new_b, new_loss, new_grad, new_grad_b);
        converged = max_abs(&grad, grad_b) <= cfg.tol;
    }
    if !loss.is_finite() {
        return Err(Error::Optimization("logistic loss is not finite".into()));
    }
    Ok(TrainedModel {
        coefficients: beta,
        intercept: b,
        mean,
        scale,
        l2: cfg.l2,
        diagnostics: TrainingDiagnostics {
            iterations,
            final_gradient_norm: max_abs(&grad, grad_b),
            final_loss: loss,
            converged,
        },
    })
}

impl TrainedModel {
    /// `sigma(beta . standardised(x) + intercept)` per record.
    pub fn predict_scores(&self, ds: &TabularDataset) -> Result<Vec<f64>> {
        if ds.d() != self.coefficients.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coefficients.len(),
                actual: ds.d(),
            });
        }
        let z = (ds.features() - &self.mean) / &self.scale;
        Ok(z.dot(&self.coefficients)
            .iter()
            .map(|&e| sigmoid(e + self.intercept))
            .collect())
    }

    /// Training objective re-evaluated from scores: weighted mean log-loss
    /// plus the ridge term.
    pub fn loss_from_scores(&self, scores: &[f64], ds: &TabularDataset) -> f64 {
        let total: f64 = ds.weights().iter().sum();
        let data: f64 = scores
            .iter()
            .zip(ds.labels())
            .zip(ds.weights())
            .map(|((&p, &y), &w)| {
                let ll = if y == 1 { p.ln() } else { (1.0 - p).ln() };
                -w * ll
            })
            .sum::<f64>()
            / total;
        data + 0.5 * self.l2 * self.coefficients.dot(&self.coefficients)
    }

    pub fn standardised(&self, x: &Array2<f64>) -> Array2<f64> {
        (x - &self.mean) / &self.scale
    }
}

#[cfg(test)]
fn column_means(x: &Array2<f64>) -> Array1<f64> {
    x.mean_axis(ndarray::Axis(0)).unwrap()
}
