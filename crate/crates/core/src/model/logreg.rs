//! Multinomial logistic regression on mean-pooled sequence features.

use serde::{Deserialize, Serialize};

use super::data::{Dataset, SampleInput};
use super::{dot, log_softmax, Classifier};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegConfig {
    /// Penalty `l2 / 2 * |W|^2` on the weights (not the biases).
    pub l2: f64,
    pub max_iter: usize,
    /// Convergence when every gradient entry is below this in magnitude.
    pub tol: f64,
    /// Fit on z-scored features.
    pub standardize: bool,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            l2: 1e-3,
            max_iter: 5000,
            tol: 1e-6,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogReg {
    pub classes: usize,
    pub dim: usize,
    /// `classes × dim`, row-major, in (possibly standardized) feature space.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub loss: f64,
}

impl LogReg {
    fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let z = self.transform(x);
        (0..self.classes)
            .map(|c| self.bias[c] + dot(&self.weights[c * self.dim..(c + 1) * self.dim], &z))
            .collect()
    }

    pub fn proba(&self, x: &[f64]) -> Vec<f64> {
        log_softmax(&self.logits(x))
            .into_iter()
            .map(f64::exp)
            .collect()
    }
}

/// Penalized mean cross-entropy and its gradient, on already transformed rows.
fn objective(
    w: &[f64],
    b: &[f64],
    x: &[Vec<f64>],
    y: &[usize],
    classes: usize,
    l2: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let d = x.first().map_or(0, Vec::len);
    let n = x.len() as f64;
    let mut gw = vec![0.0; w.len()];
    let mut gb = vec![0.0; classes];
    let mut loss = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let logits: Vec<f64> = (0..classes)
            .map(|c| b[c] + dot(&w[c * d..(c + 1) * d], row))
            .collect();
        let lp = log_softmax(&logits);
        loss -= lp[label];
        for c in 0..classes {
            let g = (lp[c].exp() - if c == label { 1.0 } else { 0.0 }) / n;
            gb[c] += g;
            for (acc, v) in gw[c * d..(c + 1) * d].iter_mut().zip(row) {
                *acc += g * v;
            }
        }
    }
    let reg: f64 = w.iter().map(|v| v * v).sum::<f64>() * l2 / 2.0;
    gw.iter_mut().zip(w).for_each(|(g, v)| *g += l2 * v);
    (loss / n + reg, gw, gb)
}

/// Gradient descent with backtracking line search.
///
/// Returns the last iterate with a warning if `max_iter` is reached first.
pub fn fit_logreg(
    x: &[Vec<f64>],
    y: &[usize],
    classes: usize,
    cfg: &LogRegConfig,
) -> Result<LogReg> {
    if x.is_empty() {
        return Err(Error::EmptyCorpus("no samples to fit".into()));
    }
    if x.len() != y.len() {
        return Err(Error::Shape("features and labels differ in count".into()));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("ragged feature rows".into()));
    }
    if let Some(&bad) = y.iter().find(|&&l| l >= classes) {
        return Err(Error::Shape(format!(
            "label {bad} outside {classes} classes"
        )));
    }
    let n = x.len() as f64;
    let (mean, scale) = if cfg.standardize {
        let mean: Vec<f64> = (0..d)
            .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect();
        let scale: Vec<f64> = (0..d)
            .map(|j| {
                let var = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        (mean, scale)
    } else {
        (vec![0.0; d], vec![1.0; d])
    };
    let z: Vec<Vec<f64>> = x
        .iter()
        .map(|r| {
            r.iter()
                .zip(&mean)
                .zip(&scale)
                .map(|((v, m), s)| (v - m) / s)
                .collect()
        })
        .collect();

    let mut w = vec![0.0; classes * d];
    let mut b = vec![0.0; classes];
    let (mut loss, mut gw, mut gb) = objective(&w, &b, &z, y, classes, cfg.l2);
    let mut step = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        let gmax = gw.iter().chain(&gb).fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax < cfg.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let gnorm2: f64 = gw.iter().chain(&gb).map(|g| g * g).sum();
        loop {
            let w2: Vec<f64> = w.iter().zip(&gw).map(|(v, g)| v - step * g).collect();
            let b2: Vec<f64> = b.iter().zip(&gb).map(|(v, g)| v - step * g).collect();
            let (l2, gw2, gb2) = objective(&w2, &b2, &z, y, classes, cfg.l2);
            if l2 <= loss - 0.5 * step * gnorm2 || step < 1e-12 {
                w = w2;
                b = b2;
                loss = l2;
                gw = gw2;
                gb = gb2;
                step = (step * 2.0).min(1e3);
                break;
            }
            step /= 2.0;
        }
    }
    if !converged {
        log::warn!("logistic regression stopped after {iterations} iterations without converging");
    }
    Ok(LogReg {
        classes,
        dim: d,
        weights: w,
        bias: b,
        mean,
        scale,
        converged,
        iterations,
        loss,
    })
}

impl Classifier for LogReg {
    fn num_classes(&self) -> usize {
        self.classes
    }

    fn predict_proba(&self, data: &Dataset, index: usize) -> Vec<f64> {
        let len = data.true_len[index];
        let mut v = vec![0.0; self.dim];
        if let SampleInput::Dense { rows, dim } = data.sample(index) {
            for t in 0..len {
                v.iter_mut()
                    .zip(&rows[t * dim..(t + 1) * dim])
                    .for_each(|(a, x)| *a += x);
            }
            if len > 0 {
                v.iter_mut().for_each(|a| *a /= len as f64);
            }
        }
        self.proba(&v)
    }
}
