//! L2- (and L1-) penalized logistic regression by full-batch gradient
//! descent with Barzilai-Borwein steps and Armijo backtracking.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{log1p_exp, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticParams {
    /// Ridge strength; the penalty is `l2 / (2n) · ‖β‖²` (intercept free).
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self { l2: 1.0, max_iter: 2000, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub converged: bool,
    pub iterations: usize,
    /// ∞-norm of the objective gradient (or prox-gradient map) at exit.
    pub grad_norm: f64,
}

impl LogisticModel {
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.weights).map(|(x, w)| x * w).sum::<f64>()
    }

    pub fn score_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.decision(row))
    }
}

/// Smooth part of the objective: mean negative log-likelihood plus ridge.
struct Problem<'a> {
    x: &'a [f64],
    y: &'a [u8],
    n: usize,
    p: usize,
    ridge: f64,
}

impl Problem<'_> {
    /// Parameter vector layout: `[β_0 .. β_{p-1}, b]`.
    fn value(&self, theta: &[f64]) -> f64 {
        let (beta, b) = theta.split_at(self.p);
        let mut loss = 0.0;
        for i in 0..self.n {
            let row = &self.x[i * self.p..(i + 1) * self.p];
            let z = b[0] + row.iter().zip(beta).map(|(x, w)| x * w).sum::<f64>();
            // -log-likelihood = log(1+e^z) - y z
            loss += log1p_exp(z) - f64::from(self.y[i]) * z;
        }
        loss / self.n as f64 + 0.5 * self.ridge * beta.iter().map(|w| w * w).sum::<f64>()
    }

    fn value_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let (beta, b) = theta.split_at(self.p);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for i in 0..self.n {
            let row = &self.x[i * self.p..(i + 1) * self.p];
            let z = b[0] + row.iter().zip(beta).map(|(x, w)| x * w).sum::<f64>();
            let yi = f64::from(self.y[i]);
            loss += log1p_exp(z) - yi * z;
            let r = sigmoid(z) - yi;
            for (g, x) in grad[..self.p].iter_mut().zip(row) {
                *g += r * x;
            }
            grad[self.p] += r;
        }
        let inv_n = 1.0 / self.n as f64;
        grad.iter_mut().for_each(|g| *g *= inv_n);
        for j in 0..self.p {
            grad[j] += self.ridge * beta[j];
        }
        loss * inv_n + 0.5 * self.ridge * beta.iter().map(|w| w * w).sum::<f64>()
    }
}

fn base_log_odds(y: &[u8]) -> f64 {
    let pos = y.iter().filter(|&&v| v == 1).count() as f64;
    let n = y.len() as f64;
    // Clamp so single-class inputs keep a finite intercept.
    let p = (pos / n).clamp(1e-6, 1.0 - 1e-6);
    (p / (1.0 - p)).ln()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Fits an L2-penalized logistic regression. A model that hits `max_iter`
/// is returned with `converged == false`.
pub fn fit_logreg(ds: &Dataset, params: &LogisticParams) -> Result<LogisticModel> {
    fit_logreg_raw(ds.features(), ds.labels(), ds.n_cols(), params, None)
}

pub(crate) fn fit_logreg_raw(
    x: &[f64],
    y: &[u8],
    p: usize,
    params: &LogisticParams,
    warm: Option<&[f64]>,
) -> Result<LogisticModel> {
    let n = y.len();
    if n == 0 {
        return Err(Error::EmptyEvaluation);
    }
    if !(params.l2 >= 0.0) {
        return Err(Error::InvalidConfig("l2 must be non-negative".into()));
    }
    let prob = Problem { x, y, n, p, ridge: params.l2 / n as f64 };
    let mut theta = match warm {
        Some(w) => w.to_vec(),
        None => {
            let mut t = vec![0.0; p + 1];
            t[p] = base_log_odds(y);
            t
        }
    };
    let mut grad = vec![0.0; p + 1];
    let mut f = prob.value_grad(&theta, &mut grad);
    let mut step = 1.0;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut trial = vec![0.0; p + 1];
    let mut new_grad = vec![0.0; p + 1];
    for it in 0..params.max_iter {
        let gnorm = inf_norm(&grad);
        if gnorm < params.tol {
            return Ok(finish(theta, p, true, it, gnorm));
        }
        if let Some((pt, pg)) = &prev {
            let (mut ss, mut sy) = (0.0, 0.0);
            for k in 0..=p {
                let s = theta[k] - pt[k];
                ss += s * s;
                sy += s * (grad[k] - pg[k]);
            }
            if sy > 1e-300 {
                step = (ss / sy).clamp(1e-10, 1e10);
            } else {
                step = (step * 2.0).min(1e10);
            }
        }
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        let mut accepted = false;
        for _ in 0..60 {
            for k in 0..=p {
                trial[k] = theta[k] - step * grad[k];
            }
            let ft = prob.value(&trial);
            // Near the optimum loss differences drop below rounding; accept flat steps there.
            if ft <= f - 1e-4 * step * g2 || ft - f <= 1e-14 * f.abs().max(1.0) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No descent possible at machine precision; report as stalled.
            return Ok(finish(theta, p, false, it, gnorm));
        }
        let fnew = prob.value_grad(&trial, &mut new_grad);
        prev = Some((theta.clone(), grad.clone()));
        std::mem::swap(&mut theta, &mut trial);
        std::mem::swap(&mut grad, &mut new_grad);
        f = fnew;
        if !f.is_finite() {
            return Err(Error::BaseModelTrainingFailure("logistic loss diverged".into()));
        }
    }
    let gnorm = inf_norm(&grad);
    let converged = gnorm < params.tol;
    if !converged {
        log::debug!("logistic regression stopped at max_iter with gradient {gnorm:.3e}");
    }
    Ok(finish(theta, p, converged, params.max_iter, gnorm))
}

fn finish(theta: Vec<f64>, p: usize, converged: bool, iterations: usize, grad_norm: f64) -> LogisticModel {
    LogisticModel { weights: theta[..p].to_vec(), intercept: theta[p], converged, iterations, grad_norm }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Mean negative log-likelihood + `lambda · ‖β‖₁` by proximal gradient.
pub fn fit_logreg_l1(ds: &Dataset, lambda: f64, max_iter: usize, tol: f64) -> Result<LogisticModel> {
    fit_l1_raw(ds.features(), ds.labels(), ds.n_cols(), lambda, max_iter, tol, None)
}

fn fit_l1_raw(
    x: &[f64],
    y: &[u8],
    p: usize,
    lambda: f64,
    max_iter: usize,
    tol: f64,
    warm: Option<&[f64]>,
) -> Result<LogisticModel> {
    let n = y.len();
    let prob = Problem { x, y, n, p, ridge: 0.0 };
    let mut theta = match warm {
        Some(w) => w.to_vec(),
        None => {
            let mut t = vec![0.0; p + 1];
            t[p] = base_log_odds(y);
            t
        }
    };
    let mut grad = vec![0.0; p + 1];
    let mut f = prob.value_grad(&theta, &mut grad);
    let mut step = 1.0;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut trial = vec![0.0; p + 1];
    let mut new_grad = vec![0.0; p + 1];
    let prox = |theta: &[f64], grad: &[f64], step: f64, out: &mut [f64]| {
        for k in 0..p {
            out[k] = soft_threshold(theta[k] - step * grad[k], step * lambda);
        }
        out[p] = theta[p] - step * grad[p];
    };
    let mut map_norm = f64::INFINITY;
    for it in 0..max_iter {
        if let Some((pt, pg)) = &prev {
            let (mut ss, mut sy) = (0.0, 0.0);
            for k in 0..=p {
                let s = theta[k] - pt[k];
                ss += s * s;
                sy += s * (grad[k] - pg[k]);
            }
            step = if sy > 1e-300 { (ss / sy).clamp(1e-10, 1e10) } else { (step * 2.0).min(1e10) };
        }
        let mut accepted = false;
        for _ in 0..60 {
            prox(&theta, &grad, step, &mut trial);
            let mut lin = 0.0;
            let mut quad = 0.0;
            for k in 0..=p {
                let d = trial[k] - theta[k];
                lin += grad[k] * d;
                quad += d * d;
            }
            if prob.value(&trial) <= f + lin + quad / (2.0 * step) + 1e-15 {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        map_norm = trial.iter().zip(&theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / step;
        if !accepted {
            return Ok(finish(theta, p, false, it, map_norm));
        }
        let fnew = prob.value_grad(&trial, &mut new_grad);
        prev = Some((theta.clone(), grad.clone()));
        std::mem::swap(&mut theta, &mut trial);
        std::mem::swap(&mut grad, &mut new_grad);
        f = fnew;
        if map_norm < tol {
            return Ok(finish(theta, p, true, it + 1, map_norm));
        }
    }
    Ok(finish(theta, p, false, max_iter, map_norm))
}

/// Penalty below which every coefficient leaves zero.
pub fn l1_lambda_max(ds: &Dataset) -> f64 {
    let (n, p) = (ds.n_rows(), ds.n_cols());
    let ybar = ds.prevalence();
    let mut g = vec![0.0; p];
    for (i, row) in ds.rows().enumerate() {
        let r = f64::from(ds.labels()[i]) - ybar;
        for j in 0..p {
            g[j] += r * row[j];
        }
    }
    inf_norm(&g) / n as f64
}

/// Fixed log grid of `points` penalties from `λ_max` down to `λ_max · 1e-3`.
pub fn l1_grid(lambda_max: f64, points: usize) -> Vec<f64> {
    let points = points.max(2);
    (0..points).map(|i| lambda_max * 10f64.powf(-3.0 * i as f64 / (points - 1) as f64)).collect()
}

/// L1 path fit with the penalty chosen by `folds`-fold CV on held-out
/// log-loss; returns the refit model and the chosen penalty.
pub fn fit_logreg_l1_cv(ds: &Dataset, folds: usize, seed: u64) -> Result<(LogisticModel, f64)> {
    let lmax = l1_lambda_max(ds).max(1e-8);
    let grid = l1_grid(lmax, 10);
    let plan = crate::data::kfold_stratified(ds, folds, seed)?;
    let mut cv_loss = vec![0.0; grid.len()];
    for f in 0..folds {
        let (tr, te) = plan.fold(f);
        let train = ds.select_rows(&tr);
        let test = ds.select_rows(&te);
        let mut warm: Option<Vec<f64>> = None;
        for (g, &lambda) in grid.iter().enumerate() {
            let m = fit_l1_raw(train.features(), train.labels(), train.n_cols(), lambda, 500, 1e-6, warm.as_deref())?;
            let mut w = m.weights.clone();
            w.push(m.intercept);
            warm = Some(w);
            for (i, row) in test.rows().enumerate() {
                let z = m.decision(row);
                cv_loss[g] += log1p_exp(z) - f64::from(test.labels()[i]) * z;
            }
        }
    }
    let best = cv_loss
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .unwrap();
    let lambda = grid[best];
    let mut warm: Option<Vec<f64>> = None;
    let mut model = None;
    for &l in &grid[..=best] {
        let m = fit_l1_raw(ds.features(), ds.labels(), ds.n_cols(), l, 1000, 1e-7, warm.as_deref())?;
        let mut w = m.weights.clone();
        w.push(m.intercept);
        warm = Some(w);
        model = Some(m);
    }
    Ok((model.unwrap(), lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::roc_auc;
    use rand::Rng as _;

    fn noisy(n: usize, p: usize, seed: u64) -> Dataset {
        let mut r = crate::rng::rng(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let x: Vec<f64> = (0..p).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
            let z = 1.5 * x[0] - x[1] + 0.3;
            y.push(u8::from(r.random::<f64>() < sigmoid(z)));
            rows.push(x);
        }
        Dataset::from_rows(&rows, y).unwrap()
    }

    #[test]
    fn separable_direction() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 2) as f64]).collect();
        let y: Vec<u8> = (0..40).map(|i| (i % 2) as u8).collect();
        let ds = Dataset::from_rows(&rows, y.clone()).unwrap();
        let m = fit_logreg(&ds, &LogisticParams { l2: 1.0, ..Default::default() }).unwrap();
        assert!(m.converged && m.weights[0] > 0.0);
        let s: Vec<f64> = ds.rows().map(|r| m.score_row(r)).collect();
        assert_eq!(roc_auc(&y, &s).unwrap(), 1.0);
    }

    #[test]
    fn zero_features_give_base_rate() {
        let rows = vec![vec![0.0, 0.0]; 10];
        let y = vec![1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
        let ds = Dataset::from_rows(&rows, y).unwrap();
        let m = fit_logreg(&ds, &LogisticParams::default()).unwrap();
        assert_eq!(m.weights, vec![0.0, 0.0]);
        assert!((m.intercept - (0.3f64 / 0.7).ln()).abs() < 1e-9);
        assert!((m.score_row(&[0.0, 0.0]) - 0.3).abs() < 1e-9);
    }

    #[test]
    fn ridge_path_is_monotone() {
        let ds = noisy(300, 4, 3);
        let mut last = f64::INFINITY;
        let mut l2 = 0.01;
        for _ in 0..12 {
            let m = fit_logreg(&ds, &LogisticParams { l2, max_iter: 5000, tol: 1e-9 }).unwrap();
            assert!(m.converged, "l2 {l2}");
            let nrm = m.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
            assert!(nrm <= last + 1e-7, "l2 {l2}: {nrm} > {last}");
            last = nrm;
            l2 *= 2.0;
        }
    }

    #[test]
    fn gradient_small_at_optimum() {
        let ds = noisy(200, 3, 8);
        let params = LogisticParams { l2: 0.5, max_iter: 5000, tol: 1e-7 };
        let m = fit_logreg(&ds, &params).unwrap();
        assert!(m.converged);
        // recompute the gradient independently
        let n = ds.n_rows() as f64;
        let mut g = vec![0.0; 4];
        for (i, row) in ds.rows().enumerate() {
            let r = m.score_row(row) - f64::from(ds.labels()[i]);
            for j in 0..3 {
                g[j] += r * row[j] / n;
            }
            g[3] += r / n;
        }
        for j in 0..3 {
            g[j] += params.l2 / n * m.weights[j];
        }
        assert!(inf_norm(&g) < params.tol);
    }

    #[test]
    fn l1_sparsifies_noise() {
        let ds = noisy(600, 6, 5);
        let (m, lambda) = fit_logreg_l1_cv(&ds, 5, 1).unwrap();
        assert!(lambda > 0.0);
        assert!(m.weights[0].abs() > 0.3 && m.weights[1].abs() > 0.3);
        let big = fit_logreg_l1(&ds, l1_lambda_max(&ds) * 1.01, 1000, 1e-8).unwrap();
        assert!(big.weights.iter().all(|w| *w == 0.0));
    }
}
