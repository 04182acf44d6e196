//! Importances read off fitted models.

use serde::{Deserialize, Serialize};

use super::{Method, MethodScore};
use crate::boosting::{fit_gbdt, GbdtConfig};
use crate::classic::{fit_forest, fit_logreg_l1_cv, ForestParams};
use crate::data::Dataset;
use crate::error::Result;
use crate::preprocess::Standardizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddedBase {
    Rf,
    Gbdt,
    L1Logreg,
}

/// Folds used to pick the L1 strength.
pub const L1_CV_FOLDS: usize = 5;

pub fn embedded_scores(ds: &Dataset, base: EmbeddedBase, seed: u64) -> Result<Vec<f64>> {
    Ok(match base {
        EmbeddedBase::Rf => fit_forest(ds, &ForestParams::random_forest(), seed)?.importances,
        EmbeddedBase::Gbdt => fit_gbdt(ds, &GbdtConfig::xgb(), seed)?.importances,
        EmbeddedBase::L1Logreg => {
            let z = Standardizer::fit(ds).transform(ds)?;
            let (m, _) = fit_logreg_l1_cv(&z, L1_CV_FOLDS, seed)?;
            m.weights.iter().map(|w| w.abs()).collect()
        }
    })
}

pub fn embedded_importance(ds: &Dataset, base: EmbeddedBase, seed: u64) -> Result<MethodScore> {
    let method = match base {
        EmbeddedBase::Rf => Method::EmbRf,
        EmbeddedBase::Gbdt => Method::EmbGb,
        EmbeddedBase::L1Logreg => Method::EmbL1,
    };
    Ok(MethodScore::from_scores(method, ds.feature_names().to_vec(), embedded_scores(ds, base, seed)?))
}
