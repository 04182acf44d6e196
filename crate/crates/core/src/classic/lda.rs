//! Two-class linear discriminant analysis with pooled, ridge-jittered
//! covariance.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub means: [Vec<f64>; 2],
    pub priors: [f64; 2],
    /// Discriminant direction `Σ⁻¹(μ₁ − μ₀)`.
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub jitter: f64,
}

impl LdaModel {
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.weights).map(|(x, w)| x * w).sum::<f64>()
    }

    /// Posterior P(y = 1 | x) under the shared-covariance Gaussian model.
    pub fn score_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.decision(row))
    }
}

/// In-place Cholesky factor (lower triangle) of a symmetric matrix.
pub(crate) fn cholesky(a: &mut [f64], p: usize) -> Option<()> {
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= a[j * p + k] * a[j * p + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        a[j * p + j] = d;
        for i in j + 1..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = s / d;
        }
    }
    Some(())
}

pub(crate) fn cholesky_solve(l: &[f64], p: usize, b: &[f64]) -> Vec<f64> {
    let mut z = b.to_vec();
    for i in 0..p {
        for k in 0..i {
            z[i] -= l[i * p + k] * z[k];
        }
        z[i] /= l[i * p + i];
    }
    for i in (0..p).rev() {
        for k in i + 1..p {
            z[i] -= l[k * p + i] * z[k];
        }
        z[i] /= l[i * p + i];
    }
    z
}

pub fn fit_lda(ds: &Dataset) -> Result<LdaModel> {
    let (n, p) = (ds.n_rows(), ds.n_cols());
    let mut counts = [0usize; 2];
    let mut means = [vec![0.0; p], vec![0.0; p]];
    for (i, row) in ds.rows().enumerate() {
        let c = ds.labels()[i] as usize;
        counts[c] += 1;
        for j in 0..p {
            means[c][j] += row[j];
        }
    }
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::SingleClassDataset { positives: counts[1], negatives: counts[0] });
    }
    for c in 0..2 {
        means[c].iter_mut().for_each(|m| *m /= counts[c] as f64);
    }
    let mut cov = vec![0.0; p * p];
    for (i, row) in ds.rows().enumerate() {
        let mu = &means[ds.labels()[i] as usize];
        for a in 0..p {
            let da = row[a] - mu[a];
            for b in a..p {
                cov[a * p + b] += da * (row[b] - mu[b]);
            }
        }
    }
    let dof = (n.saturating_sub(2)).max(1) as f64;
    for a in 0..p {
        for b in a..p {
            cov[a * p + b] /= dof;
            cov[b * p + a] = cov[a * p + b];
        }
    }
    let mean_diag = (0..p).map(|j| cov[j * p + j]).sum::<f64>() / p.max(1) as f64;
    let jitter = 1e-6 * mean_diag;
    for j in 0..p {
        cov[j * p + j] += jitter;
    }
    cholesky(&mut cov, p).ok_or(Error::SingularCovariance)?;
    let diff: Vec<f64> = (0..p).map(|j| means[1][j] - means[0][j]).collect();
    let weights = cholesky_solve(&cov, p, &diff);
    let priors = [counts[0] as f64 / n as f64, counts[1] as f64 / n as f64];
    // log-odds = wᵀx − ½ wᵀ(μ₁ + μ₀) + log(π₁/π₀)
    let mid: f64 = (0..p).map(|j| weights[j] * (means[1][j] + means[0][j])).sum::<f64>() * 0.5;
    let intercept = -mid + (priors[1] / priors[0]).ln();
    Ok(LdaModel { means, priors, weights, intercept, jitter })
}
