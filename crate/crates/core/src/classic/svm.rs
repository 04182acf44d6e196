//! Primal SVM (averaged Pegasos) on raw features or on random Fourier
//! features approximating the RBF kernel, with Platt probability scaling.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{split_labels, Dataset};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    /// `gamma = None` uses `1 / n_features`.
    RbfRff { d: usize, gamma: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub kernel: Kernel,
    /// Inverse regularization: the objective is ½‖w‖² + C Σ hinge.
    pub c: f64,
    pub epochs: usize,
    /// Share of the training rows held out for the Platt fit.
    pub calibration_fraction: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { kernel: Kernel::RbfRff { d: 512, gamma: None }, c: 1.0, epochs: 15, calibration_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RffMap {
    pub d: usize,
    pub gamma: f64,
    /// Row-major `d × p` frequencies.
    pub omega: Vec<f64>,
    pub phase: Vec<f64>,
}

impl RffMap {
    pub fn new(p: usize, d: usize, gamma: f64, seed: u64) -> RffMap {
        let mut r = rng::sub_rng(seed, 0x00ff);
        let normal = Normal::new(0.0, (2.0 * gamma).sqrt()).expect("gamma > 0");
        let omega = (0..d * p).map(|_| normal.sample(&mut r)).collect();
        let phase = (0..d).map(|_| r.random::<f64>() * std::f64::consts::TAU).collect();
        RffMap { d, gamma, omega, phase }
    }

    pub fn map_into(&self, x: &[f64], out: &mut [f64]) {
        let p = x.len();
        let scale = (2.0 / self.d as f64).sqrt();
        for k in 0..self.d {
            let w = &self.omega[k * p..(k + 1) * p];
            let z: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.phase[k];
            out[k] = scale * z.cos();
        }
    }

    pub fn map(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.map_into(x, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rff: Option<RffMap>,
    pub weights: Vec<f64>,
    pub bias: f64,
    /// P(y=1 | m) = 1 / (1 + exp(a·m + b)).
    pub platt_a: f64,
    pub platt_b: f64,
}

impl SvmModel {
    pub fn margin(&self, row: &[f64]) -> f64 {
        let dot = |z: &[f64]| self.bias + z.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>();
        match &self.rff {
            Some(m) => dot(&m.map(row)),
            None => dot(row),
        }
    }

    pub fn score_row(&self, row: &[f64]) -> f64 {
        let v = self.platt_a * self.margin(row) + self.platt_b;
        1.0 / (1.0 + v.exp())
    }
}

/// Averaged Pegasos over rows of `z` (row-major, `d` wide): returns the
/// averaged `(w, b)`. The bias rides along as a constant feature.
fn pegasos(z: &[f64], y: &[u8], d: usize, lambda: f64, epochs: usize, seed: u64) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut w = vec![0.0; d + 1];
    let mut avg = vec![0.0; d + 1];
    let mut n_avg = 0.0;
    let total = (epochs * n).max(1);
    let mut r = rng::sub_rng(seed, 0x9e6a);
    let radius = 1.0 / lambda.sqrt();
    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0usize;
    for _ in 0..epochs {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut r);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let x = &z[i * d..(i + 1) * d];
            let yi = if y[i] == 1 { 1.0 } else { -1.0 };
            let m = w[d] + x.iter().zip(&w[..d]).map(|(a, b)| a * b).sum::<f64>();
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if yi * m < 1.0 {
                for (wk, xk) in w[..d].iter_mut().zip(x) {
                    *wk += eta * yi * xk;
                }
                w[d] += eta * yi;
            }
            let nrm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nrm > radius {
                w.iter_mut().for_each(|v| *v *= radius / nrm);
            }
            if 2 * t > total {
                n_avg += 1.0;
                for (a, v) in avg.iter_mut().zip(&w) {
                    *a += (v - *a) / n_avg;
                }
            }
        }
    }
    let b = avg[d];
    avg.truncate(d);
    (avg, b)
}

/// Platt sigmoid fit by Newton's method with backtracking (smoothed targets).
pub fn fit_platt(margins: &[f64], y: &[u8]) -> (f64, f64) {
    let n_pos = y.iter().filter(|&&v| v == 1).count() as f64;
    let n_neg = y.len() as f64 - n_pos;
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    let t: Vec<f64> = y.iter().map(|&v| if v == 1 { hi } else { lo }).collect();
    let mut a = 0.0;
    let mut b = ((n_neg + 1.0) / (n_pos + 1.0)).ln();
    // A (numerically) constant decision function carries no ranking; keep the base rate.
    let (lo_m, hi_m) = margins.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &m| (l.min(m), h.max(m)));
    if !(hi_m - lo_m > 1e-6) {
        return (a, b);
    }
    let objective = |a: f64, b: f64| -> f64 {
        margins
            .iter()
            .zip(&t)
            .map(|(&m, &ti)| {
                let f = a * m + b;
                if f >= 0.0 {
                    ti * f + (1.0 + (-f).exp()).ln()
                } else {
                    (ti - 1.0) * f + (1.0 + f.exp()).ln()
                }
            })
            .sum()
    };
    let mut fval = objective(a, b);
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (1e-12, 1e-12, 0.0, 0.0, 0.0);
        for (&m, &ti) in margins.iter().zip(&t) {
            let f = a * m + b;
            let (p, q) = if f >= 0.0 {
                let e = (-f).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = f.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += m * m * d2;
            h22 += d2;
            h21 += m * d2;
            let d1 = ti - p;
            g1 += m * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-9 && g2.abs() < 1e-9 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        let mut moved = false;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                moved = true;
                break;
            }
            step /= 2.0;
        }
        if !moved {
            break;
        }
    }
    (a, b)
}

pub fn fit_svm(ds: &Dataset, params: &SvmParams, seed: u64) -> Result<SvmModel> {
    let (n, p) = (ds.n_rows(), ds.n_cols());
    if !(params.c > 0.0) {
        return Err(Error::InvalidConfig("C must be positive".into()));
    }
    if n == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let rff = match params.kernel {
        Kernel::Linear => None,
        Kernel::RbfRff { d, gamma } => {
            let g = gamma.unwrap_or(1.0 / p.max(1) as f64);
            if !(g > 0.0) || d == 0 {
                return Err(Error::InvalidConfig("rbf_rff needs d ≥ 1 and gamma > 0".into()));
            }
            Some(RffMap::new(p, d, g, seed))
        }
    };
    let d = rff.as_ref().map_or(p, |m| m.d);
    let mut z = vec![0.0; n * d];
    for (i, row) in ds.rows().enumerate() {
        match &rff {
            Some(m) => m.map_into(row, &mut z[i * d..(i + 1) * d]),
            None => z[i * d..(i + 1) * d].copy_from_slice(row),
        }
    }

    let held_out = match split_labels(ds.labels(), 1.0 - params.calibration_fraction, rng::derive_seed(seed, 0xca1)) {
        Ok(plan) if plan.test_indices.len() >= 2 && plan.train_indices.len() >= 2 => Some(plan),
        _ => None,
    };
    let fit_idx: Vec<usize> = held_out.as_ref().map_or_else(|| (0..n).collect(), |s| s.train_indices.clone());
    let cal_idx: Vec<usize> = held_out.as_ref().map_or_else(|| (0..n).collect(), |s| s.test_indices.clone());
    let mut zf = Vec::with_capacity(fit_idx.len() * d);
    let mut yf = Vec::with_capacity(fit_idx.len());
    for &i in &fit_idx {
        zf.extend_from_slice(&z[i * d..(i + 1) * d]);
        yf.push(ds.labels()[i]);
    }
    let lambda = 1.0 / (params.c * fit_idx.len() as f64);
    let (weights, bias) = pegasos(&zf, &yf, d, lambda, params.epochs.max(1), seed);
    let mut model = SvmModel { rff, weights, bias, platt_a: -1.0, platt_b: 0.0 };
    let margins: Vec<f64> = cal_idx
        .iter()
        .map(|&i| model.bias + z[i * d..(i + 1) * d].iter().zip(&model.weights).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let ycal: Vec<u8> = cal_idx.iter().map(|&i| ds.labels()[i]).collect();
    let (a, b) = fit_platt(&margins, &ycal);
    model.platt_a = a;
    model.platt_b = b;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rff_approximates_rbf() {
        let p = 4;
        let gamma = 0.3;
        let m = RffMap::new(p, 512, gamma, 17);
        let mut r = rng::rng(5);
        let mut err = 0.0;
        for _ in 0..1000 {
            let x: Vec<f64> = (0..p).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
            let y: Vec<f64> = (0..p).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
            let k = (-gamma * x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).exp();
            let kh: f64 = m.map(&x).iter().zip(m.map(&y)).map(|(a, b)| a * b).sum();
            err += (k - kh).abs();
        }
        assert!(err / 1000.0 < 0.05, "mean error {}", err / 1000.0);
    }

    fn separable(seed: u64) -> Dataset {
        let mut r = rng::rng(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        while rows.len() < 200 {
            let x = [r.random::<f64>() * 4.0 - 2.0, r.random::<f64>() * 4.0 - 2.0];
            let s = x[0] + 2.0 * x[1] - 0.3;
            if s.abs() < 0.3 {
                continue;
            }
            rows.push(x.to_vec());
            y.push(u8::from(s > 0.0));
        }
        Dataset::from_rows(&rows, y).unwrap()
    }

    #[test]
    fn linear_separable() {
        let ds = separable(2);
        let params = SvmParams { kernel: Kernel::Linear, c: 100.0, epochs: 50, calibration_fraction: 0.2 };
        let m = fit_svm(&ds, &params, 1).unwrap();
        let acc = ds.rows().zip(ds.labels()).filter(|(r, &y)| u8::from(m.score_row(r) >= 0.5) == y).count();
        assert_eq!(acc, ds.n_rows());
        // direction agrees with the true separator (1, 2)
        assert!(m.weights[0] > 0.0 && m.weights[1] > 0.0);
        assert!(m.platt_a < 0.0);
    }

    #[test]
    fn tiny_c_gives_base_rate() {
        let ds = separable(3);
        let params = SvmParams { kernel: Kernel::Linear, c: 1e-9, epochs: 5, calibration_fraction: 0.2 };
        let m = fit_svm(&ds, &params, 1).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-5));
        let s = m.score_row(ds.row(0));
        assert!((s - ds.prevalence()).abs() < 0.06, "score {s} vs {}", ds.prevalence());
    }

    #[test]
    fn rbf_fits_nonlinear_boundary() {
        let mut r = rng::rng(8);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..400 {
            let x = [r.random::<f64>() * 4.0 - 2.0, r.random::<f64>() * 4.0 - 2.0];
            y.push(u8::from(x[0] * x[0] + x[1] * x[1] < 1.5));
            rows.push(x.to_vec());
        }
        let ds = Dataset::from_rows(&rows, y).unwrap();
        let m = fit_svm(&ds, &SvmParams { kernel: Kernel::RbfRff { d: 256, gamma: Some(1.0) }, c: 10.0, ..Default::default() }, 4).unwrap();
        let s: Vec<f64> = ds.rows().map(|row| m.score_row(row)).collect();
        assert!(crate::metrics::roc_auc(ds.labels(), &s).unwrap() > 0.95);
    }
}
