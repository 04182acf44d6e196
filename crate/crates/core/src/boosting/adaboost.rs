//! Discrete AdaBoost over decision stumps.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    /// `x < threshold` votes `left`, otherwise `-left`.
    pub threshold: f64,
    /// +1.0 or −1.0.
    pub left: f64,
    pub alpha: f64,
    /// Weighted training error at fit time.
    pub error: f64,
}

impl Stump {
    pub fn vote(&self, row: &[f64]) -> f64 {
        if row[self.feature] < self.threshold {
            self.left
        } else {
            -self.left
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostModel {
    pub n_features: usize,
    pub stumps: Vec<Stump>,
    /// Unweighted training error of the final vote.
    pub train_error: f64,
    /// `Π 2√(ε(1−ε))` over retained stumps.
    pub error_bound: f64,
}

impl AdaBoostModel {
    pub fn margin(&self, row: &[f64]) -> f64 {
        self.stumps.iter().map(|s| s.alpha * s.vote(row)).sum()
    }

    pub fn score_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.margin(row))
    }
}

const EPS_FLOOR: f64 = 1e-10;

pub fn stump_alpha(eps: f64) -> f64 {
    let e = eps.max(EPS_FLOOR);
    0.5 * ((1.0 - e) / e).ln()
}

/// Lowest weighted-error stump; ties go to lower feature, lower threshold,
/// then `left = −1`.
fn best_stump(order: &[Vec<usize>], x: &Dataset, y: &[f64], w: &[f64]) -> (usize, f64, f64, f64) {
    let total_pos: f64 = w.iter().zip(y).filter(|(_, &t)| t > 0.0).map(|(a, _)| a).sum();
    let total: f64 = w.iter().sum();
    // Constant stump: no finite value is below f64::MIN, so every row votes `-left`.
    let mut best = (0usize, f64::MIN, 1.0, total_pos.min(total - total_pos));
    if total - total_pos < total_pos {
        best.2 = -1.0;
    }
    for (j, ord) in order.iter().enumerate() {
        let (mut lp, mut ln) = (0.0, 0.0);
        for k in 0..ord.len().saturating_sub(1) {
            let i = ord[k];
            if y[i] > 0.0 {
                lp += w[i];
            } else {
                ln += w[i];
            }
            let (a, b) = (x.get(i, j), x.get(ord[k + 1], j));
            if a == b {
                continue;
            }
            let rp = total_pos - lp;
            let rn = total - total_pos - ln;
            // left = −1: errors are left positives and right negatives.
            for (left, err) in [(-1.0, lp + rn), (1.0, ln + rp)] {
                if err < best.3 - 1e-15 {
                    best = (j, 0.5 * (a + b), left, err);
                }
            }
        }
    }
    best
}

pub fn fit_adaboost(ds: &Dataset, n_rounds: usize, _seed: u64) -> Result<AdaBoostModel> {
    if n_rounds == 0 {
        return Err(Error::InvalidConfig("n_rounds must be at least 1".into()));
    }
    let (n, p) = (ds.n_rows(), ds.n_cols());
    if n == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let y: Vec<f64> = ds.labels().iter().map(|&t| if t == 1 { 1.0 } else { -1.0 }).collect();
    let order: Vec<Vec<usize>> = (0..p)
        .map(|j| {
            let mut o: Vec<usize> = (0..n).collect();
            o.sort_by(|&a, &b| ds.get(a, j).total_cmp(&ds.get(b, j)).then(a.cmp(&b)));
            o
        })
        .collect();
    let mut w = vec![1.0 / n as f64; n];
    let mut stumps = Vec::new();
    let mut bound = 1.0;
    for _ in 0..n_rounds {
        let (feature, threshold, left, raw_eps) = best_stump(&order, ds, &y, &w);
        let eps = raw_eps.max(0.0);
        if eps >= 0.5 {
            break;
        }
        let alpha = stump_alpha(eps);
        let stump = Stump { feature, threshold, left, alpha, error: eps };
        bound *= 2.0 * (eps * (1.0 - eps)).sqrt();
        stumps.push(stump);
        if eps <= 0.0 {
            break;
        }
        let mut z = 0.0;
        for i in 0..n {
            w[i] *= (-alpha * y[i] * stump.vote(ds.row(i))).exp();
            z += w[i];
        }
        w.iter_mut().for_each(|v| *v /= z);
    }
    let mut model = AdaBoostModel { n_features: p, stumps, train_error: 0.0, error_bound: bound };
    let wrong = ds.rows().zip(&y).filter(|(r, &t)| model.margin(r) * t <= 0.0).count();
    model.train_error = wrong as f64 / n as f64;
    if model.train_error > model.error_bound + 1e-9 {
        log::warn!("adaboost training error {} above bound {}", model.train_error, model.error_bound);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn alpha_formula() {
        assert!((stump_alpha(0.25) - 0.5 * 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn separable_halts_after_one_round() {
        let ds = Dataset::from_rows(&(0..10).map(|i| vec![f64::from(i)]).collect::<Vec<_>>(), (0..10).map(|i| u8::from(i >= 4)).collect()).unwrap();
        let m = fit_adaboost(&ds, 50, 0).unwrap();
        assert_eq!(m.stumps.len(), 1);
        assert_eq!(m.train_error, 0.0);
        assert_eq!(m.stumps[0].threshold, 3.5);
    }

    fn noisy(seed: u64) -> Dataset {
        let mut r = crate::rng::rng(seed);
        let rows: Vec<Vec<f64>> = (0..300).map(|_| (0..4).map(|_| r.random_range(0..5) as f64).collect()).collect();
        let y = rows.iter().map(|x| u8::from(x[0] + x[1] + r.random_range(-2.0..2.0) > 4.0)).collect();
        Dataset::from_rows(&rows, y).unwrap()
    }

    #[test]
    fn reweighted_stump_has_half_error() {
        let ds = noisy(3);
        let y: Vec<f64> = ds.labels().iter().map(|&t| if t == 1 { 1.0 } else { -1.0 }).collect();
        let m = fit_adaboost(&ds, 1, 0).unwrap();
        let s = m.stumps[0];
        let mut w: Vec<f64> = (0..ds.n_rows()).map(|i| (-s.alpha * y[i] * s.vote(ds.row(i))).exp()).collect();
        let z: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= z);
        let err: f64 = (0..ds.n_rows()).filter(|&i| s.vote(ds.row(i)) != y[i]).map(|i| w[i]).sum();
        assert!((err - 0.5).abs() < 1e-12);
    }

    #[test]
    fn error_bound_holds() {
        for seed in 0..5 {
            let m = fit_adaboost(&noisy(seed), 30, 0).unwrap();
            assert!(m.train_error <= m.error_bound + 1e-12);
            assert!(m.stumps.iter().all(|s| s.error < 0.5 && s.alpha > 0.0));
        }
    }
}
