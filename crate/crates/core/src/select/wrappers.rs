//! Recursive feature elimination and sequential forward selection.

use serde::{Deserialize, Serialize};

use super::{Method, MethodScore};
use crate::boosting::{fit_gbdt, GbdtConfig, Growth};
use crate::classic::{fit_logreg, LogisticParams};
use crate::data::{Dataset, FoldPlan};
use crate::error::{Error, Result};
use crate::metrics::{confusion, predict_labels, threshold_metrics};
use crate::preprocess::Standardizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RfeBase {
    Logreg,
    Gbdt,
}

/// Booster used inside elimination loops: smaller than the benchmark preset.
pub fn rfe_gbdt_config() -> GbdtConfig {
    GbdtConfig { n_rounds: 60, growth: Growth::LevelWise { max_depth: 3 }, ..GbdtConfig::xgb() }
}

fn importances(ds: &Dataset, base: RfeBase, seed: u64) -> Result<Vec<f64>> {
    let fail = |e: Error| Error::BaseModelTrainingFailure(e.to_string());
    match base {
        RfeBase::Logreg => {
            let m = fit_logreg(ds, &LogisticParams::default()).map_err(fail)?;
            Ok(m.weights.iter().map(|w| w.abs()).collect())
        }
        RfeBase::Gbdt => Ok(fit_gbdt(ds, &rfe_gbdt_config(), seed).map_err(fail)?.importances),
    }
}

/// Eliminates the least important remaining feature until `n_keep` remain.
/// Ranks: survivors 1..n_keep by final importance, then eliminated features
/// in reverse elimination order (first eliminated = worst).
pub fn rfe(ds: &Dataset, base: RfeBase, n_keep: usize, seed: u64) -> Result<MethodScore> {
    let p = ds.n_cols();
    if n_keep == 0 || n_keep >= p {
        return Err(Error::InvalidConfig(format!("rfe needs 1 <= n_keep < {p}, got {n_keep}")));
    }
    let work = match base {
        RfeBase::Logreg => Standardizer::fit(ds).transform(ds)?,
        RfeBase::Gbdt => ds.clone(),
    };
    let mut alive: Vec<usize> = (0..p).collect();
    let mut eliminated: Vec<usize> = Vec::new();
    while alive.len() > n_keep {
        let imp = importances(&work.select_cols(&alive), base, seed)?;
        // lowest importance; ties drop the later column
        let mut worst = 0;
        for k in 1..alive.len() {
            if imp[k] <= imp[worst] {
                worst = k;
            }
        }
        eliminated.push(alive.remove(worst));
    }
    let final_imp = importances(&work.select_cols(&alive), base, seed)?;
    let mut order: Vec<usize> = (0..alive.len()).collect();
    order.sort_by(|&a, &b| final_imp[b].total_cmp(&final_imp[a]).then(alive[a].cmp(&alive[b])));
    let mut ranking: Vec<usize> = order.iter().map(|&k| alive[k]).collect();
    ranking.extend(eliminated.iter().rev());
    let method = match base {
        RfeBase::Logreg => Method::RfeLogreg,
        RfeBase::Gbdt => Method::RfeGb,
    };
    Ok(MethodScore::from_ranking(method, ds.feature_names().to_vec(), &ranking))
}

fn cv_f1(ds: &Dataset, cols: &[usize], folds: &FoldPlan) -> Result<f64> {
    let mut total = 0.0;
    for f in 0..folds.k {
        let (tr, te) = folds.fold(f);
        let train = ds.select_rows(&tr);
        let test = ds.select_rows(&te);
        let pred = if cols.is_empty() {
            vec![u8::from(train.prevalence() >= 0.5); te.len()]
        } else {
            let train = train.select_cols(cols);
            let st = Standardizer::fit(&train);
            let m = fit_logreg(&st.transform(&train)?, &LogisticParams::default())?;
            let z = st.transform(&test.select_cols(cols))?;
            predict_labels(&z.rows().map(|r| m.score_row(r)).collect::<Vec<_>>(), 0.5)
        };
        total += threshold_metrics(&confusion(test.labels(), &pred)?)?.f1;
    }
    Ok(total / folds.k as f64)
}

pub const SFS_TOLERANCE: f64 = 1e-4;

/// Greedy forward selection on cross-validated F1 of the default logistic
/// model. The first addition always happens; afterwards a feature must
/// raise F1 by more than [`SFS_TOLERANCE`]. Unselected features follow in
/// order of their F1 in the last candidate round.
pub fn sequential_forward(ds: &Dataset, folds: &FoldPlan) -> Result<(MethodScore, Vec<usize>, f64)> {
    if folds.fold_assignments.len() != ds.n_rows() {
        return Err(Error::DimensionMismatch { expected: ds.n_rows(), got: folds.fold_assignments.len() });
    }
    let p = ds.n_cols();
    let mut chosen: Vec<usize> = Vec::new();
    let mut current = cv_f1(ds, &[], folds)?;
    let mut last_round: Vec<(usize, f64)> = Vec::new();
    while chosen.len() < p {
        let mut round = Vec::new();
        for j in (0..p).filter(|j| !chosen.contains(j)) {
            let mut cols = chosen.clone();
            cols.push(j);
            round.push((j, cv_f1(ds, &cols, folds)?));
        }
        let &(best_j, best_f1) = round.iter().fold(&round[0], |b, c| if c.1 > b.1 { c } else { b });
        if !chosen.is_empty() && best_f1 <= current + SFS_TOLERANCE {
            last_round = round;
            break;
        }
        chosen.push(best_j);
        current = best_f1;
        last_round = round.into_iter().filter(|&(j, _)| j != best_j).collect();
    }
    last_round.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut ranking = chosen.clone();
    ranking.extend(last_round.iter().map(|&(j, _)| j));
    Ok((MethodScore::from_ranking(Method::Sfs, ds.feature_names().to_vec(), &ranking), chosen, current))
}
