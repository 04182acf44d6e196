//! Univariate filter statistics.

use std::collections::BTreeMap;

use super::{Method, MethodScore};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Columns with more distinct values than this are discretized for MI.
const MAX_LEVELS: usize = 32;
const MI_BINS: usize = 10;

fn check_labels(ds: &Dataset) -> Result<()> {
    let pos = ds.positives();
    if pos == 0 || pos == ds.n_rows() {
        return Err(Error::ConstantLabel);
    }
    Ok(())
}

/// Discrete codes of a column: raw values when few, else equal-frequency bins.
fn levels(col: &[f64]) -> Vec<u64> {
    let mut distinct: Vec<f64> = col.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() <= MAX_LEVELS {
        col.iter().map(|&x| distinct.partition_point(|&d| d < x) as u64).collect()
    } else {
        let edges = crate::boosting::bin_edges(col, MI_BINS);
        col.iter().map(|&x| u64::from(crate::boosting::bin_of(&edges, x))).collect()
    }
}

/// Counts per (level, label).
fn table(col: &[f64], y: &[u8]) -> BTreeMap<u64, [f64; 2]> {
    let mut t: BTreeMap<u64, [f64; 2]> = BTreeMap::new();
    for (l, &c) in levels(col).into_iter().zip(y) {
        t.entry(l).or_default()[c as usize] += 1.0;
    }
    t
}

/// Plug-in mutual information (nats).
pub fn mutual_info(col: &[f64], y: &[u8]) -> f64 {
    let n = y.len() as f64;
    let t = table(col, y);
    let py = [t.values().map(|r| r[0]).sum::<f64>() / n, t.values().map(|r| r[1]).sum::<f64>() / n];
    let mut mi = 0.0;
    for r in t.values() {
        let px = (r[0] + r[1]) / n;
        for c in 0..2 {
            let pxy = r[c] / n;
            if pxy > 0.0 {
                mi += pxy * (pxy / (px * py[c])).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Pearson χ² on the value × label contingency table.
pub fn chi_square(col: &[f64], y: &[u8]) -> f64 {
    let n = y.len() as f64;
    let t = table(col, y);
    let ny = [t.values().map(|r| r[0]).sum::<f64>(), t.values().map(|r| r[1]).sum::<f64>()];
    let mut chi = 0.0;
    for r in t.values() {
        let nx = r[0] + r[1];
        for c in 0..2 {
            let e = nx * ny[c] / n;
            if e > 0.0 {
                chi += (r[c] - e) * (r[c] - e) / e;
            }
        }
    }
    chi
}

/// One-way ANOVA F between the two label groups. A feature with no
/// within-group spread but separated means scores `f64::MAX`.
pub fn anova_f(col: &[f64], y: &[u8]) -> f64 {
    let mut s = [0.0; 2];
    let mut k = [0.0; 2];
    for (&x, &c) in col.iter().zip(y) {
        s[c as usize] += x;
        k[c as usize] += 1.0;
    }
    let n = k[0] + k[1];
    let grand = (s[0] + s[1]) / n;
    let m = [s[0] / k[0], s[1] / k[1]];
    let between: f64 = (0..2).map(|c| k[c] * (m[c] - grand).powi(2)).sum();
    let within: f64 = col.iter().zip(y).map(|(&x, &c)| (x - m[c as usize]).powi(2)).sum();
    if n <= 2.0 {
        return 0.0;
    }
    let within = within / (n - 2.0);
    if within <= 0.0 {
        return if between > 0.0 { f64::MAX } else { 0.0 };
    }
    between / within
}

/// |point-biserial correlation|; constant columns score 0.
pub fn pearson_abs(col: &[f64], y: &[u8]) -> f64 {
    let n = y.len() as f64;
    let mx = col.iter().sum::<f64>() / n;
    let my = y.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &v) in col.iter().zip(y) {
        let (dx, dy) = (x - mx, f64::from(v) - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        0.0
    } else {
        (sxy / (sxx * syy).sqrt()).abs().min(1.0)
    }
}

pub fn sample_variance(col: &[f64]) -> f64 {
    let n = col.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let m = col.iter().sum::<f64>() / n;
    col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
}

pub fn filter_scores(ds: &Dataset, method: Method) -> Result<MethodScore> {
    check_labels(ds)?;
    let y = ds.labels();
    let mut scores = Vec::with_capacity(ds.n_cols());
    for j in 0..ds.n_cols() {
        let col = ds.column(j);
        scores.push(match method {
            Method::MutualInfo => mutual_info(&col, y),
            Method::ChiSquare => {
                if col.iter().any(|&v| v < 0.0) {
                    return Err(Error::NegativeValueForChiSquare(ds.feature_names()[j].clone()));
                }
                chi_square(&col, y)
            }
            Method::AnovaF => anova_f(&col, y),
            Method::Pearson => pearson_abs(&col, y),
            Method::Variance => sample_variance(&col),
            other => return Err(Error::InvalidConfig(format!("{} is not a filter method", other.name()))),
        });
    }
    Ok(MethodScore::from_scores(method, ds.feature_names().to_vec(), scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let y = [0u8, 1, 0, 1, 1, 0];
        let col: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
        assert!((mutual_info(&col, &y) - 2f64.ln()).abs() < 1e-12);
        assert!((pearson_abs(&col, &y) - 1.0).abs() < 1e-12);
        let indep = [0.0, 0.0, 1.0, 1.0];
        assert_eq!(chi_square(&indep, &[0, 1, 0, 1]), 0.0);
        assert_eq!(anova_f(&col, &y), f64::MAX);
        assert!((sample_variance(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn chi_square_rejects_negatives_and_constant_label() {
        let ds = Dataset::from_rows(&[vec![-1.0], vec![1.0]], vec![0, 1]).unwrap();
        assert!(matches!(filter_scores(&ds, Method::ChiSquare), Err(Error::NegativeValueForChiSquare(_))));
        let ds = Dataset::from_rows(&[vec![0.0], vec![1.0]], vec![1, 1]).unwrap();
        assert!(matches!(filter_scores(&ds, Method::Variance), Err(Error::ConstantLabel)));
    }

    #[test]
    fn anova_matches_squared_t_statistic() {
        // For two groups F equals the pooled two-sample t statistic squared.
        let a = [1.0, 2.0, 4.0, 3.5];
        let b = [3.0, 5.0, 4.5, 6.0, 5.5];
        let col: Vec<f64> = a.iter().chain(&b).copied().collect();
        let y: Vec<u8> = (0..9).map(|i| u8::from(i >= 4)).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let ss = |v: &[f64]| v.iter().map(|x| (x - mean(v)).powi(2)).sum::<f64>();
        let sp2 = (ss(&a) + ss(&b)) / 7.0;
        let t = (mean(&a) - mean(&b)) / (sp2 * (1.0 / 4.0 + 1.0 / 5.0)).sqrt();
        assert!((anova_f(&col, &y) - t * t).abs() < 1e-12);
    }
}
