//! Random forests (bootstrap + best splits over sampled features) and
//! extra trees (full sample + random thresholds).

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, Presorted, TreeModel, TreeParams};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// `None` uses ⌈√p⌉.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    pub random_splits: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self::random_forest()
    }
}

impl ForestParams {
    pub fn random_forest() -> Self {
        Self { n_trees: 100, max_depth: None, min_leaf: 1, mtry: None, bootstrap: true, random_splits: false }
    }

    pub fn extra_trees() -> Self {
        Self { bootstrap: false, random_splits: true, ..Self::random_forest() }
    }

    pub fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry.unwrap_or_else(|| ((p as f64).sqrt().ceil() as usize).clamp(1, p.max(1)))
    }

    fn tree_params(&self, p: usize) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_leaf: self.min_leaf,
            mtry: Some(self.resolved_mtry(p)),
            random_splits: self.random_splits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub n_features: usize,
    pub trees: Vec<TreeModel>,
    /// Mean of per-tree normalized importances, renormalized.
    pub importances: Vec<f64>,
    /// Out-of-bag misclassification rate (bootstrap forests only).
    pub oob_error: Option<f64>,
}

impl ForestModel {
    /// Arithmetic mean of the trees' leaf proportions.
    pub fn score_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.score_row(row)).sum::<f64>() / self.trees.len() as f64
    }
}

fn bootstrap_sample(n: usize, seed: u64) -> Vec<usize> {
    let mut r = rng::sub_rng(seed, 0xb007);
    (0..n).map(|_| r.random_range(0..n)).collect()
}

fn tree_seed(seed: u64, t: usize) -> u64 {
    rng::derive_seed(seed, t as u64)
}

pub fn fit_forest(ds: &Dataset, params: &ForestParams, seed: u64) -> Result<ForestModel> {
    fit_forest_inner(ds, params, seed, None)
}

fn fit_forest_inner(ds: &Dataset, params: &ForestParams, seed: u64, oob_path: Option<&mut Vec<f64>>) -> Result<ForestModel> {
    let (n, p) = (ds.n_rows(), ds.n_cols());
    if params.n_trees == 0 {
        return Err(Error::InvalidConfig("n_trees must be at least 1".into()));
    }
    if n == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let tp = params.tree_params(p);
    tp.validate(p)?;
    let pre = Presorted::new(ds);
    let grown: Vec<(TreeModel, Option<Vec<usize>>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let s = tree_seed(seed, t);
            if params.bootstrap {
                let idx = bootstrap_sample(n, s);
                let tree = grow_tree(&pre, idx.clone(), &tp, s);
                (tree, Some(idx))
            } else {
                (grow_tree(&pre, (0..n).collect(), &tp, s), None)
            }
        })
        .collect();

    let mut importances = vec![0.0; p];
    for (t, _) in &grown {
        for (a, b) in importances.iter_mut().zip(&t.importances) {
            *a += b;
        }
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        importances.iter_mut().for_each(|v| *v /= total);
    }

    let oob_error = if params.bootstrap {
        let mut sum = vec![0.0; n];
        let mut cnt = vec![0u32; n];
        let mut in_bag = vec![false; n];
        let mut path = Vec::new();
        for (tree, idx) in &grown {
            in_bag.iter_mut().for_each(|b| *b = false);
            for &i in idx.as_ref().unwrap() {
                in_bag[i] = true;
            }
            for i in 0..n {
                if !in_bag[i] {
                    sum[i] += tree.score_row(ds.row(i));
                    cnt[i] += 1;
                }
            }
            if oob_path.is_some() {
                path.push(oob_rate(&sum, &cnt, ds.labels()));
            }
        }
        if let Some(out) = oob_path {
            *out = path;
        }
        Some(oob_rate(&sum, &cnt, ds.labels()))
    } else {
        None
    };
    Ok(ForestModel { n_features: p, trees: grown.into_iter().map(|(t, _)| t).collect(), importances, oob_error })
}

fn oob_rate(sum: &[f64], cnt: &[u32], y: &[u8]) -> f64 {
    let (mut wrong, mut seen) = (0usize, 0usize);
    for i in 0..y.len() {
        if cnt[i] > 0 {
            seen += 1;
            if u8::from(sum[i] / cnt[i] as f64 >= 0.5) != y[i] {
                wrong += 1;
            }
        }
    }
    if seen == 0 {
        1.0
    } else {
        wrong as f64 / seen as f64
    }
}

/// OOB error after each tree of a bootstrap forest.
pub fn oob_error_path(ds: &Dataset, params: &ForestParams, seed: u64) -> Result<Vec<f64>> {
    let mut path = Vec::new();
    fit_forest_inner(ds, &ForestParams { bootstrap: true, ..*params }, seed, Some(&mut path))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classic::tree::fit_tree;
    use crate::models::sigmoid;

    fn planted(n: usize, seed: u64) -> Dataset {
        let mut r = rng::rng(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let x: Vec<f64> = (0..6).map(|_| r.random_range(0..4) as f64).collect();
            let z = 1.2 * (x[0] - 1.5) - 0.9 * (x[1] - 1.5) + 0.6 * (x[2] - 1.5);
            y.push(u8::from(r.random::<f64>() < sigmoid(z)));
            rows.push(x);
        }
        Dataset::from_rows(&rows, y).unwrap()
    }

    #[test]
    fn single_tree_reduction() {
        let ds = planted(200, 1);
        let fp = ForestParams { n_trees: 1, bootstrap: false, mtry: Some(6), random_splits: false, max_depth: Some(5), min_leaf: 2 };
        let f = fit_forest(&ds, &fp, 3).unwrap();
        let t = fit_tree(&ds, &TreeParams { max_depth: Some(5), min_leaf: 2, mtry: None, random_splits: false }, 3).unwrap();
        for row in ds.rows() {
            assert_eq!(f.score_row(row), t.score_row(row));
        }
    }

    #[test]
    fn score_is_mean_of_trees() {
        let ds = planted(150, 2);
        let f = fit_forest(&ds, &ForestParams { n_trees: 7, ..ForestParams::random_forest() }, 9).unwrap();
        for row in ds.rows().take(20) {
            let mean = f.trees.iter().map(|t| t.score_row(row)).sum::<f64>() / 7.0;
            assert_eq!(f.score_row(row), mean);
        }
        let s: f64 = f.importances.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_per_seed() {
        let ds = planted(120, 4);
        let a = fit_forest(&ds, &ForestParams::extra_trees(), 5).unwrap();
        let b = fit_forest(&ds, &ForestParams::extra_trees(), 5).unwrap();
        assert_eq!(a, b);
        assert!(a.oob_error.is_none());
    }

    #[test]
    fn oob_error_drops_with_more_trees() {
        let mut improved = 0;
        for seed in 0..10 {
            let ds = planted(400, 100 + seed);
            let path = oob_error_path(&ds, &ForestParams::random_forest(), seed).unwrap();
            if path[99] <= path[0] {
                improved += 1;
            }
        }
        assert!(improved >= 8, "{improved}/10");
    }
}
