//! Feature selection ensemble: filters, wrappers, embedded importances,
//! Boruta, and rank aggregation.

pub mod boruta;
pub mod embedded;
pub mod filters;
pub mod wrappers;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use boruta::{boruta, decision_thresholds, BorutaDecision, BorutaParams, BorutaStatus};
pub use embedded::{embedded_importance, embedded_scores, EmbeddedBase};
pub use filters::filter_scores;
pub use wrappers::{rfe, sequential_forward, RfeBase, SFS_TOLERANCE};

use crate::data::{kfold_stratified, Dataset};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MutualInfo,
    ChiSquare,
    AnovaF,
    Pearson,
    Variance,
    RfeLogreg,
    RfeGb,
    Sfs,
    EmbRf,
    EmbGb,
    EmbL1,
}

impl Method {
    pub const ALL: [Method; 11] = [
        Method::MutualInfo,
        Method::ChiSquare,
        Method::AnovaF,
        Method::Pearson,
        Method::Variance,
        Method::RfeLogreg,
        Method::RfeGb,
        Method::Sfs,
        Method::EmbRf,
        Method::EmbGb,
        Method::EmbL1,
    ];

    /// Default ensemble of ten.
    pub const DEFAULT: [Method; 10] = [
        Method::MutualInfo,
        Method::ChiSquare,
        Method::AnovaF,
        Method::Pearson,
        Method::Variance,
        Method::RfeLogreg,
        Method::RfeGb,
        Method::Sfs,
        Method::EmbRf,
        Method::EmbL1,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::MutualInfo => "mutual_info",
            Method::ChiSquare => "chi_square",
            Method::AnovaF => "anova_f",
            Method::Pearson => "pearson",
            Method::Variance => "variance",
            Method::RfeLogreg => "rfe_logreg",
            Method::RfeGb => "rfe_gb",
            Method::Sfs => "sfs",
            Method::EmbRf => "emb_rf",
            Method::EmbGb => "emb_gb",
            Method::EmbL1 => "emb_l1",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: Method,
    pub features: Vec<String>,
    /// Higher is better.
    pub scores: Vec<f64>,
    /// 1 = best; a permutation of 1..=n.
    pub ranks: Vec<usize>,
}

impl MethodScore {
    /// Ranks by descending score (NaN last), ties by feature index.
    pub fn from_scores(method: Method, features: Vec<String>, scores: Vec<f64>) -> MethodScore {
        let key = |v: f64| if v.is_nan() { f64::NEG_INFINITY } else { v };
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| key(scores[b]).total_cmp(&key(scores[a])).then(a.cmp(&b)));
        let mut ranks = vec![0; scores.len()];
        for (pos, &j) in order.iter().enumerate() {
            ranks[j] = pos + 1;
        }
        MethodScore { method, features, scores, ranks }
    }

    /// From a best-first ordering; the score is `n − rank + 1`.
    pub fn from_ranking(method: Method, features: Vec<String>, ranking: &[usize]) -> MethodScore {
        let n = ranking.len();
        let mut ranks = vec![0; n];
        for (pos, &j) in ranking.iter().enumerate() {
            ranks[j] = pos + 1;
        }
        let scores = ranks.iter().map(|&r| (n - r + 1) as f64).collect();
        MethodScore { method, features, scores, ranks }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusRanking {
    pub features: Vec<String>,
    pub avg_rank: Vec<f64>,
    /// 1 = best average rank (ties by feature index).
    pub position: Vec<usize>,
    pub boruta_status: Vec<BorutaStatus>,
    pub selected: Vec<bool>,
    pub rank_threshold: f64,
    pub overrides: Vec<String>,
}

impl ConsensusRanking {
    pub fn selected_features(&self) -> Vec<String> {
        self.features.iter().zip(&self.selected).filter(|(_, &s)| s).map(|(f, _)| f.clone()).collect()
    }
}

pub const DEFAULT_RANK_THRESHOLD: f64 = 14.3;
pub const DEFAULT_OVERRIDES: [&str; 2] = ["recent_diarrhoea", "sudoorpaschim"];

/// selected = Boruta-confirmed ∨ (average rank ≤ threshold ∧ in overrides).
pub fn aggregate(scores: &[MethodScore], boruta: &BorutaDecision, rank_threshold: f64, overrides: &[String]) -> Result<ConsensusRanking> {
    let features = boruta.features.clone();
    if scores.is_empty() || scores.iter().any(|s| s.features != features || s.ranks.len() != features.len()) {
        return Err(Error::FeatureListMismatch);
    }
    let p = features.len();
    let avg_rank: Vec<f64> =
        (0..p).map(|j| scores.iter().map(|s| s.ranks[j] as f64).sum::<f64>() / scores.len() as f64).collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| avg_rank[a].total_cmp(&avg_rank[b]).then(a.cmp(&b)));
    let mut position = vec![0; p];
    for (pos, &j) in order.iter().enumerate() {
        position[j] = pos + 1;
    }
    let selected = (0..p)
        .map(|j| boruta.status[j] == BorutaStatus::Confirmed || (avg_rank[j] <= rank_threshold && overrides.contains(&features[j])))
        .collect();
    Ok(ConsensusRanking {
        features,
        avg_rank,
        position,
        boruta_status: boruta.status.clone(),
        selected,
        rank_threshold,
        overrides: overrides.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectConfig {
    pub methods: Vec<Method>,
    pub boruta: BorutaParams,
    pub rank_threshold: f64,
    pub overrides: Vec<String>,
    pub sfs_folds: usize,
    pub rfe_keep: usize,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            methods: Method::DEFAULT.to_vec(),
            boruta: BorutaParams::default(),
            rank_threshold: DEFAULT_RANK_THRESHOLD,
            overrides: DEFAULT_OVERRIDES.iter().map(|s| s.to_string()).collect(),
            sfs_folds: 5,
            rfe_keep: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub methods: Vec<MethodScore>,
    pub boruta: BorutaDecision,
    pub consensus: ConsensusRanking,
    pub selected: Vec<String>,
}

/// Runs one method. Chi-square sees each column shifted by its minimum when
/// negative values are present.
pub fn run_method(ds: &Dataset, method: Method, cfg: &SelectConfig, seed: u64) -> Result<MethodScore> {
    let s = rng::derive_seed(seed, method as u64);
    match method {
        Method::ChiSquare => {
            let shifted: Vec<f64> = {
                let mins: Vec<f64> = (0..ds.n_cols()).map(|j| ds.column(j).into_iter().fold(0.0, f64::min)).collect();
                ds.features().iter().enumerate().map(|(i, v)| v - mins[i % ds.n_cols()]).collect()
            };
            filter_scores(&ds.with_features(shifted)?, method)
        }
        Method::MutualInfo | Method::AnovaF | Method::Pearson | Method::Variance => filter_scores(ds, method),
        Method::RfeLogreg => rfe(ds, RfeBase::Logreg, cfg.rfe_keep, s),
        Method::RfeGb => rfe(ds, RfeBase::Gbdt, cfg.rfe_keep, s),
        Method::Sfs => Ok(sequential_forward(ds, &kfold_stratified(ds, cfg.sfs_folds, s)?)?.0),
        Method::EmbRf => embedded_importance(ds, EmbeddedBase::Rf, s),
        Method::EmbGb => embedded_importance(ds, EmbeddedBase::Gbdt, s),
        Method::EmbL1 => embedded_importance(ds, EmbeddedBase::L1Logreg, s),
    }
}

pub fn run_selection(ds: &Dataset, cfg: &SelectConfig, seed: u64) -> Result<SelectionReport> {
    let methods: Vec<MethodScore> =
        cfg.methods.par_iter().map(|&m| run_method(ds, m, cfg, seed)).collect::<Result<_>>()?;
    let b = boruta(ds, &cfg.boruta, rng::derive_seed(seed, 0xb0))?;
    let consensus = aggregate(&methods, &b, cfg.rank_threshold, &cfg.overrides)?;
    let selected = consensus.selected_features();
    Ok(SelectionReport { methods, boruta: b, consensus, selected })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decision(status: Vec<BorutaStatus>) -> BorutaDecision {
        let n = status.len();
        BorutaDecision {
            features: (0..n).map(|j| format!("f{j}")).collect(),
            status,
            hit_counts: vec![0; n],
            iterations: 100,
            alpha: 0.05,
            confirm_at: 67,
            reject_at: Some(33),
        }
    }

    #[test]
    fn ranks_are_permutations_with_index_ties() {
        let m = MethodScore::from_scores(Method::Variance, vec!["a".into(), "b".into(), "c".into()], vec![1.0, f64::NAN, 1.0]);
        assert_eq!(m.ranks, vec![1, 3, 2]);
    }

    #[test]
    fn aggregation_rule() {
        use BorutaStatus::*;
        let names: Vec<String> = (0..3).map(|j| format!("f{j}")).collect();
        let s1 = MethodScore::from_ranking(Method::Sfs, names.clone(), &[0, 1, 2]);
        let s2 = MethodScore::from_ranking(Method::Variance, names.clone(), &[0, 2, 1]);
        let b = decision(vec![Rejected, Rejected, Confirmed]);
        let c = aggregate(&[s1.clone(), s2.clone()], &b, 2.0, &["f1".into()]).unwrap();
        assert_eq!(c.avg_rank, vec![1.0, 2.5, 2.5]);
        assert_eq!(c.selected, vec![false, false, true]);
        let c = aggregate(&[s1.clone(), s2.clone()], &b, 2.5, &["f1".into()]).unwrap();
        assert_eq!(c.selected, vec![false, true, true]);
        let c = aggregate(&[s1.clone(), s2], &b, 2.5, &[]).unwrap();
        assert_eq!(c.selected, vec![false, false, true]);
        let other = MethodScore::from_ranking(Method::Sfs, vec!["x".into(), "y".into(), "z".into()], &[0, 1, 2]);
        assert!(matches!(aggregate(&[s1, other], &b, 2.0, &[]), Err(Error::FeatureListMismatch)));
    }
}
