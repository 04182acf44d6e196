//! Brute-force k-nearest-neighbour voting.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Reference to a training dataset file, checked by SHA-256 on load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataRef {
    pub path: PathBuf,
    pub sha256: String,
}

/// Lazy model: the training matrix is either inline or referenced by file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub n_features: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<DataRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<u8>>,
}

pub fn fit_knn(ds: &Dataset, k: usize) -> Result<KnnModel> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if k > ds.n_rows() {
        return Err(Error::KLargerThanTrainingSet { k, n: ds.n_rows() });
    }
    Ok(KnnModel {
        k,
        n_features: ds.n_cols(),
        source: None,
        features: Some(ds.features().to_vec()),
        labels: Some(ds.labels().to_vec()),
    })
}

pub fn file_sha256(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl KnnModel {
    /// Copy that serializes a file reference instead of the inline matrix.
    pub fn by_reference(&self, path: &Path) -> Result<KnnModel> {
        self.by_reference_as(path, path)
    }

    /// Hashes `path` but records `stored` (e.g. a path relative to the model file).
    pub fn by_reference_as(&self, path: &Path, stored: &Path) -> Result<KnnModel> {
        Ok(KnnModel {
            k: self.k,
            n_features: self.n_features,
            source: Some(DataRef { path: stored.to_path_buf(), sha256: file_sha256(path)? }),
            features: None,
            labels: None,
        })
    }

    /// Loads a referenced training matrix (relative paths resolve against `base`).
    pub fn resolve(&mut self, base: &Path) -> Result<()> {
        self.resolve_with(base, Ok)
    }

    /// Like [`KnnModel::resolve`], passing the loaded dataset through
    /// `prepare` (e.g. the fit-time standardizer) first.
    pub fn resolve_with(&mut self, base: &Path, prepare: impl FnOnce(Dataset) -> Result<Dataset>) -> Result<()> {
        if self.features.is_some() {
            return Ok(());
        }
        let src = self.source.as_ref().ok_or_else(|| Error::InvalidConfig("knn model has no training data".into()))?;
        let path = if src.path.is_absolute() { src.path.clone() } else { base.join(&src.path) };
        let digest = file_sha256(&path)?;
        if digest != src.sha256 {
            return Err(Error::InvalidConfig(format!("training data hash mismatch for {}", path.display())));
        }
        let ds = prepare(Dataset::read_csv(&path)?)?;
        if ds.n_cols() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, got: ds.n_cols() });
        }
        self.features = Some(ds.features().to_vec());
        self.labels = Some(ds.labels().to_vec());
        Ok(())
    }

    /// Fraction of class 1 among the `k` nearest training rows (Euclidean);
    /// distance ties go to the lower row index.
    pub fn score_row(&self, row: &[f64]) -> f64 {
        let (Some(x), Some(y)) = (&self.features, &self.labels) else {
            panic!("knn model used before its training data was resolved");
        };
        let p = self.n_features;
        let mut d: Vec<(f64, usize)> = (0..y.len())
            .map(|i| {
                let r = &x[i * p..(i + 1) * p];
                (r.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
        }
        let pos = d[..self.k].iter().filter(|(_, i)| y[*i] == 1).count();
        pos as f64 / self.k as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let ds = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![5.0]], vec![0, 1, 1]).unwrap();
        let m = fit_knn(&ds, 1).unwrap();
        assert_eq!(m.score_row(&[1.0]), 1.0);
        assert_eq!(m.score_row(&[0.0]), 0.0);
        let all = fit_knn(&ds, 3).unwrap();
        assert!((all.score_row(&[100.0]) - 2.0 / 3.0).abs() < 1e-12);
        assert!(matches!(fit_knn(&ds, 4), Err(Error::KLargerThanTrainingSet { k: 4, n: 3 })));

        let ds = Dataset::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]], vec![1, 1, 0, 0]).unwrap();
        assert!((fit_knn(&ds, 3).unwrap().score_row(&[0.0]) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn distance_ties_prefer_lower_index() {
        let ds = Dataset::from_rows(&[vec![-1.0], vec![1.0]], vec![0, 1]).unwrap();
        assert_eq!(fit_knn(&ds, 1).unwrap().score_row(&[0.0]), 0.0);
    }

    #[test]
    fn reference_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.csv");
        let ds = Dataset::from_rows(&[vec![0.5, 1.0], vec![2.0, -1.0], vec![3.0, 0.0]], vec![0, 1, 1]).unwrap();
        ds.write_csv(&path).unwrap();
        let m = fit_knn(&ds, 2).unwrap();
        let r = m.by_reference(&path).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert!(!json.contains("\"features\""));
        let mut back: KnnModel = serde_json::from_str(&json).unwrap();
        back.resolve(dir.path()).unwrap();
        assert_eq!(back.score_row(&[2.0, -0.5]), m.score_row(&[2.0, -0.5]));
        std::fs::write(&path, "x0,x1,label\n0,0,1\n").unwrap();
        let mut stale: KnnModel = serde_json::from_str(&json).unwrap();
        assert!(stale.resolve(dir.path()).is_err());
    }

    proptest! {
        #[test]
        fn row_permutation_invariance(vals in proptest::collection::btree_set(-1000i32..1000, 5..20), k in 1usize..5, q in -1000i32..1000) {
            let vals: Vec<f64> = vals.into_iter().map(|v| v as f64 + 0.25).collect();
            let labels: Vec<u8> = (0..vals.len()).map(|i| (i * 7 % 3 == 0) as u8).collect();
            let rows: Vec<Vec<f64>> = vals.iter().map(|&v| vec![v]).collect();
            let ds = Dataset::from_rows(&rows, labels.clone()).unwrap();
            let perm: Vec<usize> = (0..vals.len()).rev().collect();
            let pds = ds.select_rows(&perm);
            let k = k.min(vals.len());
            let a = fit_knn(&ds, k).unwrap().score_row(&[q as f64]);
            let b = fit_knn(&pds, k).unwrap().score_row(&[q as f64]);
            // distances to q are unique because q is an integer and values are offset by 0.25
            prop_assert_eq!(a, b);
        }
    }
}
