use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

const TOL: f64 = 1e-9;
const MAX_ITER: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    pub k: usize,
    /// Row-major `n × k` scores.
    pub scores: Vec<f64>,
    /// Unit-norm principal axes, one per component.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

impl PcaProjection {
    pub fn score(&self, i: usize, c: usize) -> f64 {
        self.scores[i * self.k + c]
    }
}

fn matvec(m: &[f64], p: usize, v: &[f64]) -> Vec<f64> {
    (0..p).map(|i| (0..p).map(|j| m[i * p + j] * v[j]).sum()).collect()
}

fn matmul(a: &[f64], b: &[f64], p: usize) -> Vec<f64> {
    let mut out = vec![0.0; p * p];
    for i in 0..p {
        for k in 0..p {
            let aik = a[i * p + k];
            for j in 0..p {
                out[i * p + j] += aik * b[k * p + j];
            }
        }
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Top-`k` principal components by power iteration with deflation.
///
/// Each iteration applies the eighth power of the (trace-scaled) deflated
/// covariance, which shortens the run on near-degenerate spectra without
/// changing the fixed point.
pub fn pca_project(ds: &Dataset, k: usize) -> Result<PcaProjection> {
    let (n, p) = (ds.n_rows(), ds.n_cols());
    if k > p || k == 0 {
        return Err(Error::DimensionMismatch { expected: p, got: k });
    }
    let mut mean = vec![0.0; p];
    for row in ds.rows() {
        for j in 0..p {
            mean[j] += row[j] / n as f64;
        }
    }
    let mut cov = vec![0.0; p * p];
    for row in ds.rows() {
        for a in 0..p {
            let da = row[a] - mean[a];
            for b in a..p {
                cov[a * p + b] += da * (row[b] - mean[b]);
            }
        }
    }
    for a in 0..p {
        for b in a..p {
            cov[a * p + b] /= (n.max(2) - 1) as f64;
            cov[b * p + a] = cov[a * p + b];
        }
    }
    let trace: f64 = (0..p).map(|j| cov[j * p + j]).sum();

    let mut residual = cov.clone();
    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    for c in 0..k {
        let scale: f64 = (0..p).map(|j| residual[j * p + j].abs()).sum::<f64>().max(f64::MIN_POSITIVE);
        let mut b: Vec<f64> = residual.iter().map(|x| x / scale).collect();
        for _ in 0..3 {
            b = matmul(&b, &b, p);
            let s: f64 = (0..p).map(|j| b[j * p + j].abs()).sum::<f64>().max(f64::MIN_POSITIVE);
            b.iter_mut().for_each(|x| *x /= s);
        }
        let mut v: Vec<f64> = (0..p).map(|j| 1.0 + 0.1 * ((j + c) % 7) as f64).collect();
        orthogonalize(&mut v, &components);
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let degenerate = trace <= 0.0 || norm(&matvec(&residual, p, &v)) <= 1e-13 * trace.max(1e-300);
        let mut converged = degenerate;
        if !degenerate {
            for _ in 0..MAX_ITER {
                let mut w = matvec(&b, p, &v);
                orthogonalize(&mut w, &components);
                let nw = norm(&w);
                if nw <= 1e-300 {
                    converged = true;
                    break;
                }
                w.iter_mut().for_each(|x| *x /= nw);
                let diff = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                v = w;
                if diff < TOL {
                    converged = true;
                    break;
                }
            }
        }
        if !converged {
            return Err(Error::ConvergenceFailure(MAX_ITER));
        }
        let cv = matvec(&residual, p, &v);
        let lambda: f64 = v.iter().zip(&cv).map(|(a, b)| a * b).sum::<f64>().max(0.0);
        // Deterministic sign: largest-magnitude loading positive.
        let pivot = v.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        for a in 0..p {
            for bb in 0..p {
                residual[a * p + bb] -= lambda * v[a] * v[bb];
            }
        }
        eigenvalues.push(lambda);
        components.push(v);
    }
    let mut scores = vec![0.0; n * k];
    for (i, row) in ds.rows().enumerate() {
        for (c, comp) in components.iter().enumerate() {
            scores[i * k + c] = (0..p).map(|j| (row[j] - mean[j]) * comp[j]).sum();
        }
    }
    let explained_variance_ratio =
        eigenvalues.iter().map(|l| if trace > 0.0 { l / trace } else { 0.0 }).collect();
    Ok(PcaProjection { k, scores, components, eigenvalues, explained_variance_ratio })
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    /// Cyclic Jacobi eigen-decomposition of a symmetric matrix; returns
    /// eigenvalues descending with matching column eigenvectors.
    fn jacobi(mut a: Vec<f64>, p: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut v = vec![0.0; p * p];
        for i in 0..p {
            v[i * p + i] = 1.0;
        }
        for _ in 0..100 {
            let off: f64 = (0..p).flat_map(|i| (0..p).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[i * p + j].powi(2)).sum();
            if off < 1e-30 {
                break;
            }
            for q in 0..p {
                for r in q + 1..p {
                    let apq = a[q * p + r];
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[r * p + r] - a[q * p + q]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..p {
                        let akq = a[k * p + q];
                        let akr = a[k * p + r];
                        a[k * p + q] = c * akq - s * akr;
                        a[k * p + r] = s * akq + c * akr;
                    }
                    for k in 0..p {
                        let aqk = a[q * p + k];
                        let ark = a[r * p + k];
                        a[q * p + k] = c * aqk - s * ark;
                        a[r * p + k] = s * aqk + c * ark;
                    }
                    for k in 0..p {
                        let vkq = v[k * p + q];
                        let vkr = v[k * p + r];
                        v[k * p + q] = c * vkq - s * vkr;
                        v[k * p + r] = s * vkq + c * vkr;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&x, &y| a[y * p + y].partial_cmp(&a[x * p + x]).unwrap());
        let vals = order.iter().map(|&i| a[i * p + i]).collect();
        let vecs = order.iter().map(|&i| (0..p).map(|k| v[k * p + i]).collect()).collect();
        (vals, vecs)
    }

    #[test]
    fn collinear_data_is_rank_one() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64 + 1.0]).collect();
        let ds = Dataset::from_rows(&rows, vec![0; 10]).unwrap();
        let pr = pca_project(&ds, 2).unwrap();
        assert!((pr.explained_variance_ratio[0] - 1.0).abs() < 1e-9);
        assert!(pr.explained_variance_ratio[1].abs() < 1e-9);
    }

    #[test]
    fn matches_jacobi_oracle() {
        let mut r = crate::rng::rng(99);
        for trial in 0..20 {
            let rows: Vec<Vec<f64>> = (0..10).map(|_| (0..5).map(|_| r.random::<f64>() * 4.0 - 2.0).collect()).collect();
            let ds = Dataset::from_rows(&rows, vec![0; 10]).unwrap();
            let pr = pca_project(&ds, 3).unwrap();
            let mut cov = vec![0.0; 25];
            let mean: Vec<f64> = (0..5).map(|j| rows.iter().map(|x| x[j]).sum::<f64>() / 10.0).collect();
            for x in &rows {
                for a in 0..5 {
                    for b in 0..5 {
                        cov[a * 5 + b] += (x[a] - mean[a]) * (x[b] - mean[b]) / 9.0;
                    }
                }
            }
            let (vals, vecs) = jacobi(cov, 5);
            let total: f64 = vals.iter().sum();
            for c in 0..3 {
                assert!((pr.eigenvalues[c] - vals[c]).abs() < 1e-6, "trial {trial} comp {c}");
                assert!((pr.explained_variance_ratio[c] - vals[c] / total).abs() < 1e-6);
                let dot: f64 = pr.components[c].iter().zip(&vecs[c]).map(|(a, b)| a * b).sum();
                let sign = dot.signum();
                for i in 0..10 {
                    let oracle: f64 = (0..5).map(|j| (rows[i][j] - mean[j]) * vecs[c][j]).sum::<f64>() * sign;
                    assert!((pr.score(i, c) - oracle).abs() < 1e-6, "trial {trial} comp {c} row {i}");
                }
            }
            let ratios = &pr.explained_variance_ratio;
            assert!(ratios.windows(2).all(|w| w[0] >= w[1] - 1e-12));
            assert!(ratios.iter().sum::<f64>() <= 1.0 + 1e-12);
        }
    }
}
