//! All-relevant selection against permuted shadow features.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classic::{fit_forest, ForestParams};
use crate::data::{ColumnKind, Dataset};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BorutaStatus {
    Confirmed,
    Rejected,
    Tentative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BorutaDecision {
    pub features: Vec<String>,
    pub status: Vec<BorutaStatus>,
    pub hit_counts: Vec<usize>,
    pub iterations: usize,
    pub alpha: f64,
    /// Smallest hit count that confirms / largest that rejects.
    pub confirm_at: usize,
    pub reject_at: Option<usize>,
}

impl BorutaDecision {
    pub fn confirmed(&self) -> Vec<&str> {
        self.with_status(BorutaStatus::Confirmed)
    }

    pub fn rejected(&self) -> Vec<&str> {
        self.with_status(BorutaStatus::Rejected)
    }

    fn with_status(&self, s: BorutaStatus) -> Vec<&str> {
        self.features.iter().zip(&self.status).filter(|(_, &t)| t == s).map(|(f, _)| f.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BorutaParams {
    pub iterations: usize,
    pub alpha: f64,
    pub forest: ForestParams,
}

impl Default for BorutaParams {
    fn default() -> Self {
        Self { iterations: 100, alpha: 0.05, forest: ForestParams { n_trees: 100, ..ForestParams::random_forest() } }
    }
}

/// `ln C(n, k)` table for all k.
fn ln_choose(n: usize) -> Vec<f64> {
    let mut lf = vec![0.0; n + 1];
    for i in 1..=n {
        lf[i] = lf[i - 1] + (i as f64).ln();
    }
    (0..=n).map(|k| lf[n] - lf[k] - lf[n - k]).collect()
}

/// `P(X >= k)` for every k, X ~ Binomial(n, ½).
pub fn upper_tails(n: usize) -> Vec<f64> {
    let lc = ln_choose(n);
    let half = -(n as f64) * 2f64.ln();
    let mut tail = vec![0.0; n + 2];
    for k in (0..=n).rev() {
        tail[k] = tail[k + 1] + (lc[k] + half).exp();
    }
    tail.truncate(n + 1);
    tail
}

/// Hit-count cut-offs for a two-sided binomial test at level `alpha`,
/// Bonferroni-adjusted over the `2 · n_features` real and shadow columns.
pub fn decision_thresholds(iterations: usize, n_features: usize, alpha: f64) -> (usize, Option<usize>) {
    let tails = upper_tails(iterations);
    let level = alpha / (2 * n_features) as f64;
    let confirm = (0..=iterations).find(|&k| 2.0 * tails[k] <= level).unwrap_or(iterations + 1);
    // symmetric: P(X <= k) = P(X >= n - k)
    let reject = (0..=iterations).rev().find(|&k| 2.0 * tails[iterations - k] <= level);
    (confirm, reject)
}

/// Hit vector for one iteration: feature importance beats the best shadow.
fn iteration_hits(ds: &Dataset, forest: &ForestParams, seed: u64) -> Result<Vec<bool>> {
    let (n, p) = (ds.n_rows(), ds.n_cols());
    let mut r = rng::sub_rng(seed, 0x5ad0);
    let mut shadow = Vec::with_capacity(n * p);
    let mut cols: Vec<Vec<f64>> = (0..p).map(|j| ds.column(j)).collect();
    for c in &mut cols {
        c.shuffle(&mut r);
    }
    for i in 0..n {
        for c in &cols {
            shadow.push(c[i]);
        }
    }
    let names = (0..p).map(|j| format!("shadow_{j}")).collect();
    let full = ds.append_columns(&shadow, names, vec![ColumnKind::Zscore; p])?;
    let imp = fit_forest(&full, forest, rng::derive_seed(seed, 0xf0)).map_err(|e| Error::BaseModelTrainingFailure(e.to_string()))?.importances;
    let best_shadow = imp[p..].iter().copied().fold(0.0, f64::max);
    Ok(imp[..p].iter().map(|&v| v > best_shadow).collect())
}

pub fn boruta(ds: &Dataset, params: &BorutaParams, seed: u64) -> Result<BorutaDecision> {
    if params.iterations < 20 {
        return Err(Error::InvalidConfig("boruta needs at least 20 iterations".into()));
    }
    if !(params.alpha > 0.0 && params.alpha < 1.0) {
        return Err(Error::InvalidConfig("alpha must be in (0, 1)".into()));
    }
    let p = ds.n_cols();
    let hits: Vec<Vec<bool>> = (0..params.iterations)
        .into_par_iter()
        .map(|it| iteration_hits(ds, &params.forest, rng::derive_seed(seed, it as u64)))
        .collect::<Result<_>>()?;
    let mut hit_counts = vec![0usize; p];
    for h in &hits {
        for (c, &b) in hit_counts.iter_mut().zip(h) {
            *c += usize::from(b);
        }
    }
    let (confirm_at, reject_at) = decision_thresholds(params.iterations, p, params.alpha);
    let status = hit_counts
        .iter()
        .map(|&h| {
            if h >= confirm_at {
                BorutaStatus::Confirmed
            } else if reject_at.is_some_and(|r| h <= r) {
                BorutaStatus::Rejected
            } else {
                BorutaStatus::Tentative
            }
        })
        .collect();
    Ok(BorutaDecision {
        features: ds.feature_names().to_vec(),
        status,
        hit_counts,
        iterations: params.iterations,
        alpha: params.alpha,
        confirm_at,
        reject_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twenty_iterations_sixteen_features_needs_eighteen_hits() {
        let (c, r) = decision_thresholds(20, 16, 0.05);
        assert_eq!(c, 18);
        assert_eq!(r, Some(2));
    }

    #[test]
    fn tails_are_exact() {
        let t = upper_tails(20);
        assert!((t[0] - 1.0).abs() < 1e-12);
        assert!((t[18] - 211.0 / 1_048_576.0).abs() < 1e-15);
        assert!((t[20] - 1.0 / 1_048_576.0).abs() < 1e-18);
    }
}
