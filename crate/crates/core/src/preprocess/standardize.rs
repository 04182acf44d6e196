use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Per-column mean and population SD from a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn fit(ds: &Dataset) -> Standardizer {
        let (n, p) = (ds.n_rows(), ds.n_cols());
        let mut mean = vec![0.0; p];
        for row in ds.rows() {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
        let mut var = vec![0.0; p];
        for row in ds.rows() {
            for j in 0..p {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
        let sd = var.iter().map(|v| (v / n.max(1) as f64).sqrt()).collect();
        Standardizer { mean, sd }
    }

    /// Identity transform for `p` columns.
    pub fn identity(p: usize) -> Standardizer {
        Standardizer { mean: vec![0.0; p], sd: vec![1.0; p] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn is_passthrough(sd: f64) -> bool {
        sd <= 1e-12
    }

    pub fn transform_row_into(&self, row: &[f64], out: &mut [f64]) {
        for j in 0..row.len() {
            let sd = self.sd[j];
            out[j] = if Self::is_passthrough(sd) { row[j] } else { (row[j] - self.mean[j]) / sd };
        }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; row.len()];
        self.transform_row_into(row, &mut out);
        out
    }

    pub fn transform(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.n_cols() != self.dim() {
            return Err(Error::StatsDimensionMismatch { expected: self.dim(), got: ds.n_cols() });
        }
        let p = ds.n_cols();
        let mut out = vec![0.0; ds.features().len()];
        for (i, row) in ds.rows().enumerate() {
            self.transform_row_into(row, &mut out[i * p..(i + 1) * p]);
        }
        ds.with_features(out)
    }
}

/// Standardizes with supplied stats, or fits them when `stats` is `None`.
/// Zero-variance columns pass through unscaled.
pub fn standardize(ds: &Dataset, stats: Option<&Standardizer>) -> Result<(Dataset, Standardizer)> {
    let st = match stats {
        Some(s) => s.clone(),
        None => Standardizer::fit(ds),
    };
    Ok((st.transform(ds)?, st))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_sd_and_passthrough() {
        let ds = Dataset::from_rows(&[vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]], vec![0, 1, 0]).unwrap();
        let (z, st) = standardize(&ds, None).unwrap();
        assert_eq!(st.mean, vec![2.0, 5.0]);
        let expect = 1.0 / (2.0f64 / 3.0).sqrt();
        assert!((z.get(0, 0) + expect).abs() < 1e-12);
        assert!((z.get(0, 0) + 1.2247).abs() < 1e-4);
        assert_eq!(z.get(1, 0), 0.0);
        assert_eq!(z.column(1), vec![5.0; 3]);

        let test = Dataset::from_rows(&[vec![4.0, 7.0]], vec![1]).unwrap();
        let (zt, _) = standardize(&test, Some(&st)).unwrap();
        assert!((zt.get(0, 0) - 2.0 / st.sd[0]).abs() < 1e-12);
        assert_eq!(zt.get(0, 1), 7.0);

        let wrong = Dataset::from_rows(&[vec![1.0]], vec![1]).unwrap();
        assert!(matches!(standardize(&wrong, Some(&st)), Err(Error::StatsDimensionMismatch { .. })));
    }
}
