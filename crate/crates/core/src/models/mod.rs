//! Uniform classifier contract: a tagged hyperparameter spec, a tagged fitted
//! artifact, and the fit / score plumbing (standardization, thresholds).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boosting::{fit_adaboost, fit_gbdt, AdaBoostModel, BoostedModel, GbdtConfig};
use crate::classic::{
    fit_forest, fit_knn, fit_lda, fit_logreg, fit_svm, fit_tree, ForestModel, ForestParams, KnnModel, LdaModel,
    LogisticModel, LogisticParams, SvmModel, SvmParams, TreeModel, TreeParams,
};
use crate::data::{split_stratified, Dataset};
use crate::error::{Error, Result};
use crate::metrics::best_f1_threshold;
use crate::nn::{fit_nn, NnModel, NnParams};
use crate::preprocess::Standardizer;
use crate::rng;

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Hyperparameters of one model configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelSpec {
    Logistic(LogisticParams),
    Lda,
    Knn { k: usize },
    Tree(TreeParams),
    Forest(ForestParams),
    Svm(SvmParams),
    Adaboost { n_rounds: usize },
    Gbdt(GbdtConfig),
    Nn(NnParams),
}

impl ModelSpec {
    /// Distance-, margin- and gradient-based learners see z-scored inputs.
    pub fn needs_standardization(&self) -> bool {
        matches!(self, ModelSpec::Logistic(_) | ModelSpec::Knn { .. } | ModelSpec::Svm(_) | ModelSpec::Nn(_))
    }

    /// Fits on `ds` as given (no standardization, no threshold tuning).
    pub fn fit_raw(&self, ds: &Dataset, seed: u64) -> Result<TrainedModel> {
        Ok(match self {
            ModelSpec::Logistic(p) => TrainedModel::Logistic(fit_logreg(ds, p)?),
            ModelSpec::Lda => TrainedModel::Lda(fit_lda(ds)?),
            ModelSpec::Knn { k } => TrainedModel::Knn(fit_knn(ds, *k)?),
            ModelSpec::Tree(p) => TrainedModel::Tree(fit_tree(ds, p, seed)?),
            ModelSpec::Forest(p) => TrainedModel::Forest(fit_forest(ds, p, seed)?),
            ModelSpec::Svm(p) => TrainedModel::Svm(fit_svm(ds, p, seed)?),
            ModelSpec::Adaboost { n_rounds } => TrainedModel::Adaboost(fit_adaboost(ds, *n_rounds, seed)?),
            ModelSpec::Gbdt(c) => TrainedModel::Gbdt(fit_gbdt(ds, c, seed)?),
            ModelSpec::Nn(p) => TrainedModel::Nn(fit_nn(ds, p, seed)?),
        })
    }
}

/// A fitted classifier; the serialized form carries a `family` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TrainedModel {
    Logistic(LogisticModel),
    Lda(LdaModel),
    Knn(KnnModel),
    Tree(TreeModel),
    Forest(ForestModel),
    Svm(SvmModel),
    Adaboost(AdaBoostModel),
    Gbdt(BoostedModel),
    Nn(NnModel),
}

impl TrainedModel {
    pub fn n_features(&self) -> usize {
        match self {
            TrainedModel::Logistic(m) => m.weights.len(),
            TrainedModel::Lda(m) => m.weights.len(),
            TrainedModel::Knn(m) => m.n_features,
            TrainedModel::Tree(m) => m.n_features,
            TrainedModel::Forest(m) => m.n_features,
            TrainedModel::Svm(m) => m.rff.as_ref().map_or(m.weights.len(), |r| r.omega.len() / r.d.max(1)),
            TrainedModel::Adaboost(m) => m.n_features,
            TrainedModel::Gbdt(m) => m.n_features(),
            TrainedModel::Nn(m) => m.n_features,
        }
    }

    /// Probability of class 1 for one (already transformed) row.
    pub fn score_row(&self, row: &[f64]) -> f64 {
        let s = match self {
            TrainedModel::Logistic(m) => m.score_row(row),
            TrainedModel::Lda(m) => m.score_row(row),
            TrainedModel::Knn(m) => m.score_row(row),
            TrainedModel::Tree(m) => m.score_row(row),
            TrainedModel::Forest(m) => m.score_row(row),
            TrainedModel::Svm(m) => m.score_row(row),
            TrainedModel::Adaboost(m) => m.score_row(row),
            TrainedModel::Gbdt(m) => m.score_row(row),
            TrainedModel::Nn(m) => m.score_row(row),
        };
        s.clamp(0.0, 1.0)
    }

    /// Scores for a row-major matrix (batched for networks).
    pub fn score_matrix(&self, x: &[f64]) -> Vec<f64> {
        let p = self.n_features().max(1);
        match self {
            TrainedModel::Nn(m) => m.predict(x).into_iter().map(|s| s.clamp(0.0, 1.0)).collect(),
            _ => x.chunks(p).map(|r| self.score_row(r)).collect(),
        }
    }

    /// Per-feature importance when the learner defines one.
    pub fn importances(&self) -> Option<Vec<f64>> {
        match self {
            TrainedModel::Logistic(m) => Some(m.weights.iter().map(|w| w.abs()).collect()),
            TrainedModel::Tree(m) => Some(m.importances.clone()),
            TrainedModel::Forest(m) => Some(m.importances.clone()),
            TrainedModel::Gbdt(m) => Some(m.importances.clone()),
            _ => None,
        }
    }
}

/// How the decision threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum ThresholdPolicy {
    Fixed { threshold: f64 },
    /// F1-optimal threshold on a stratified inner hold-out of the training
    /// rows; with `refit` the final model is trained on all rows.
    TuneF1 { holdout: f64, refit: bool },
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::Fixed { threshold: 0.5 }
    }
}

/// A model bundled with its input transform and decision threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardizer: Option<Standardizer>,
    pub model: TrainedModel,
    pub threshold: f64,
}

fn fit_transformed(spec: &ModelSpec, ds: &Dataset, seed: u64) -> Result<(Option<Standardizer>, TrainedModel)> {
    if spec.needs_standardization() {
        let st = Standardizer::fit(ds);
        let z = st.transform(ds)?;
        Ok((Some(st), spec.fit_raw(&z, seed)?))
    } else {
        Ok((None, spec.fit_raw(ds, seed)?))
    }
}

pub fn fit_model(spec: &ModelSpec, ds: &Dataset, policy: ThresholdPolicy, seed: u64) -> Result<FittedModel> {
    match policy {
        ThresholdPolicy::Fixed { threshold } => {
            if !(0.0..=1.0).contains(&threshold) {
                return Err(Error::InvalidConfig("threshold must be in [0, 1]".into()));
            }
            let (standardizer, model) = fit_transformed(spec, ds, seed)?;
            Ok(FittedModel { spec: spec.clone(), standardizer, model, threshold })
        }
        ThresholdPolicy::TuneF1 { holdout, refit } => {
            if !(holdout > 0.0 && holdout < 1.0) {
                return Err(Error::InvalidConfig("threshold holdout must be in (0, 1)".into()));
            }
            let plan = split_stratified(ds, 1.0 - holdout, rng::derive_seed(seed, 0x7e5))?;
            let inner = ds.select_rows(&plan.train_indices);
            let val = ds.select_rows(&plan.test_indices);
            let (st, model) = fit_transformed(spec, &inner, seed)?;
            let tuned = FittedModel { spec: spec.clone(), standardizer: st, model, threshold: 0.5 };
            let threshold = best_f1_threshold(val.labels(), &tuned.score(&val)?);
            if refit {
                let (standardizer, model) = fit_transformed(spec, ds, seed)?;
                Ok(FittedModel { spec: spec.clone(), standardizer, model, threshold })
            } else {
                Ok(FittedModel { threshold, ..tuned })
            }
        }
    }
}

impl FittedModel {
    pub fn n_features(&self) -> usize {
        self.model.n_features()
    }

    pub fn score(&self, ds: &Dataset) -> Result<Vec<f64>> {
        if ds.n_cols() != self.n_features() {
            return Err(Error::DimensionMismatch { expected: self.n_features(), got: ds.n_cols() });
        }
        Ok(match &self.standardizer {
            Some(st) => self.model.score_matrix(st.transform(ds)?.features()),
            None => self.model.score_matrix(ds.features()),
        })
    }

    pub fn score_row(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features() {
            return Err(Error::DimensionMismatch { expected: self.n_features(), got: row.len() });
        }
        Ok(match &self.standardizer {
            Some(st) => self.model.score_row(&st.transform_row(row)),
            None => self.model.score_row(row),
        })
    }

    pub fn predict(&self, ds: &Dataset) -> Result<Vec<u8>> {
        Ok(crate::metrics::predict_labels(&self.score(ds)?, self.threshold))
    }

    /// Replaces an inline KNN training matrix by a reference to `train_csv`
    /// (the untransformed training data), recorded as `stored`.
    pub fn with_data_reference(mut self, train_csv: &Path, stored: &Path) -> Result<FittedModel> {
        if let TrainedModel::Knn(m) = &self.model {
            self.model = TrainedModel::Knn(m.by_reference_as(train_csv, stored)?);
        }
        Ok(self)
    }

    /// Loads referenced training data, if any (relative to `base`).
    pub fn resolve(&mut self, base: &Path) -> Result<()> {
        let st = self.standardizer.clone();
        if let TrainedModel::Knn(m) = &mut self.model {
            m.resolve_with(base, |d| match &st {
                Some(s) => s.transform(&d),
                None => Ok(d),
            })?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<FittedModel> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn data(n: usize, seed: u64) -> Dataset {
        let mut r = rng::rng(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| r.random_range(0..4) as f64).collect()).collect();
        let y = rows.iter().map(|x| u8::from(r.random::<f64>() < sigmoid(x[0] - x[1] + 0.2))).collect();
        Dataset::from_rows(&rows, y).unwrap()
    }

    fn all_specs() -> Vec<ModelSpec> {
        vec![
            ModelSpec::Logistic(LogisticParams::default()),
            ModelSpec::Lda,
            ModelSpec::Knn { k: 5 },
            ModelSpec::Tree(TreeParams { max_depth: Some(4), ..TreeParams::default() }),
            ModelSpec::Forest(ForestParams { n_trees: 10, ..ForestParams::random_forest() }),
            ModelSpec::Svm(SvmParams { kernel: crate::classic::Kernel::RbfRff { d: 64, gamma: None }, ..SvmParams::default() }),
            ModelSpec::Adaboost { n_rounds: 10 },
            ModelSpec::Gbdt(GbdtConfig { n_rounds: 10, ..GbdtConfig::lgbm() }),
            ModelSpec::Nn(NnParams { epochs: 2, ..NnParams::default() }),
        ]
    }

    #[test]
    fn stable_helpers() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) == 1.0);
        assert!((log1p_exp(800.0) - 800.0).abs() < 1e-12);
        assert!((log1p_exp(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn every_spec_scores_in_unit_interval_and_round_trips() {
        let ds = data(150, 1);
        for spec in all_specs() {
            let m = fit_model(&spec, &ds, ThresholdPolicy::default(), 3).unwrap();
            let s = m.score(&ds).unwrap();
            assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
            let back = FittedModel::from_json(&m.to_json().unwrap()).unwrap_or_else(|e| panic!("{spec:?}: {e}"));
            assert_eq!(back.score(&ds).unwrap(), s, "{spec:?}");
            assert_eq!(m.score_row(ds.row(4)).unwrap(), s[4]);
            assert!(matches!(m.score_row(&[1.0]), Err(Error::DimensionMismatch { .. })));
        }
    }

    #[test]
    fn tuned_threshold_in_range_and_deterministic() {
        let ds = data(300, 2);
        let spec = ModelSpec::Gbdt(GbdtConfig { n_rounds: 20, min_leaf: 5, ..GbdtConfig::xgb() });
        let pol = ThresholdPolicy::TuneF1 { holdout: 0.25, refit: true };
        let a = fit_model(&spec, &ds, pol, 7).unwrap();
        let b = fit_model(&spec, &ds, pol, 7).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a.threshold));
    }

    #[test]
    fn knn_reference_applies_standardizer() {
        let dir = tempfile::tempdir().unwrap();
        let ds = data(60, 3);
        let path = dir.path().join("train.csv");
        ds.write_csv(&path).unwrap();
        let m = fit_model(&ModelSpec::Knn { k: 3 }, &ds, ThresholdPolicy::default(), 0).unwrap();
        let r = m.clone().with_data_reference(&path, Path::new("train.csv")).unwrap();
        assert!(!r.to_json().unwrap().contains(dir.path().to_str().unwrap()));
        let mut back = FittedModel::from_json(&r.to_json().unwrap()).unwrap();
        back.resolve(dir.path()).unwrap();
        assert_eq!(back.score(&ds).unwrap(), m.score(&ds).unwrap());
    }
}
