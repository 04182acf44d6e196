//! Consensus feature importance over four independent scorers.

use serde::{Deserialize, Serialize};

use crate::boosting::{fit_gbdt, GbdtConfig};
use crate::classic::{fit_forest, fit_logreg_l1_cv, ForestParams};
use crate::data::Dataset;
use crate::error::Result;
use crate::preprocess::Standardizer;
use crate::rng::derive_seed;
use crate::select::filters::mutual_info;

pub const SOURCES: [&str; 4] = ["mutual_info", "gbdt_gain", "rf_importance", "l1_coef"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusImportance {
    pub features: Vec<String>,
    pub sources: Vec<String>,
    /// `normalized[s][j]`, each source min-max scaled to [0, 1].
    pub normalized: Vec<Vec<f64>>,
    pub consensus: Vec<f64>,
    /// Feature indices, best first.
    pub ranking: Vec<usize>,
}

impl ConsensusImportance {
    pub fn rank_of(&self, j: usize) -> usize {
        self.ranking.iter().position(|&k| k == j).map_or(0, |p| p + 1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("rank,feature,consensus,{}\n", self.sources.join(","));
        for (pos, &j) in self.ranking.iter().enumerate() {
            out.push_str(&format!("{},{},{}", pos + 1, self.features[j], super::fmt6(self.consensus[j])));
            for s in &self.normalized {
                out.push_str(&format!(",{}", super::fmt6(s[j])));
            }
            out.push('\n');
        }
        out
    }
}

/// Scales to [0, 1]; a constant vector maps to zeros.
pub fn min_max(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

pub fn consensus_importance(ds: &Dataset, seed: u64) -> Result<ConsensusImportance> {
    let p = ds.n_cols();
    let y = ds.labels();
    let mi: Vec<f64> = (0..p).map(|j| mutual_info(&ds.column(j), y)).collect();
    let gb = fit_gbdt(ds, &GbdtConfig::xgb(), derive_seed(seed, 1))?.importances;
    let rf = fit_forest(ds, &ForestParams::random_forest(), derive_seed(seed, 2))?.importances;
    let z = Standardizer::fit(ds).transform(ds)?;
    let (l1, _) = fit_logreg_l1_cv(&z, 5, derive_seed(seed, 3))?;
    let l1: Vec<f64> = l1.weights.iter().map(|w| w.abs()).collect();

    let normalized: Vec<Vec<f64>> = [mi, gb, rf, l1].iter().map(|s| min_max(s)).collect();
    let consensus: Vec<f64> = (0..p).map(|j| normalized.iter().map(|s| s[j]).sum::<f64>() / normalized.len() as f64).collect();
    let mut ranking: Vec<usize> = (0..p).collect();
    ranking.sort_by(|&a, &b| consensus[b].total_cmp(&consensus[a]).then(a.cmp(&b)));
    Ok(ConsensusImportance {
        features: ds.feature_names().to_vec(),
        sources: SOURCES.iter().map(|s| s.to_string()).collect(),
        normalized,
        consensus,
        ranking,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn label_copy_ranks_first() {
        let mut r = crate::rng::rng(4);
        let y: Vec<u8> = (0..300).map(|_| r.random_range(0..2)).collect();
        let rows: Vec<Vec<f64>> =
            y.iter().map(|&t| vec![r.random_range(0..3) as f64, f64::from(t), r.random_range(0..4) as f64]).collect();
        let ds = Dataset::from_rows(&rows, y).unwrap();
        let c = consensus_importance(&ds, 0).unwrap();
        assert_eq!(c.ranking[0], 1);
        for s in &c.normalized {
            assert!(s.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!((s.iter().copied().fold(0.0, f64::max) - 1.0).abs() < 1e-12);
        }
        assert_eq!(c.rank_of(1), 1);
    }

    #[test]
    fn min_max_constant_is_zero() {
        assert_eq!(min_max(&[2.0, 2.0]), vec![0.0, 0.0]);
        assert_eq!(min_max(&[1.0, 3.0, 2.0]), vec![0.0, 1.0, 0.5]);
    }
}
