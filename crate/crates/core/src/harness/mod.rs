//! Benchmark orchestration: the 16-model roster, split protocols, concurrent
//! training, result tables and the markdown report.

mod report;
mod tables;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use report::{
    emit_report, label_summary, province_csv, province_table, write_run, LabelSummary, ProvinceRow, RunProvenance, PROVINCES_FILE,
    REPORT_FILE,
};
pub use tables::{
    agreement_csv, agreement_table, family_summary, family_summary_csv, quantile, AgreementRow, FamilyStat, Leaderboard,
    LeaderboardRow, SUMMARY_METRICS,
};

use crate::boosting::GbdtConfig;
use crate::classic::{ForestParams, LogisticParams, SvmParams, TreeParams};
use crate::data::{kfold_stratified, split_stratified, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, evaluate_predictions, predict_labels, EvalReport};
use crate::models::{fit_model, FittedModel, ModelSpec, ThresholdPolicy};
use crate::nn::{Arch, NnParams};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    DeepLearning,
    GradientBoosting,
    Traditional,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::DeepLearning, Family::GradientBoosting, Family::Traditional];

    pub fn name(&self) -> &'static str {
        match self {
            Family::DeepLearning => "deep_learning",
            Family::GradientBoosting => "gradient_boosting",
            Family::Traditional => "traditional",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub name: String,
    pub family: Family,
    pub model: ModelSpec,
}

impl RosterEntry {
    pub fn new(name: &str, family: Family, model: ModelSpec) -> Self {
        Self { name: name.to_string(), family, model }
    }
}

/// The sixteen benchmark configurations. The four boosting libraries are
/// represented by presets of the one histogram GBDT engine.
pub fn default_roster() -> Vec<RosterEntry> {
    use Family::*;
    let nn = |a: Arch| ModelSpec::Nn(NnParams::with_arch(a));
    vec![
        RosterEntry::new("dnn", DeepLearning, nn(Arch::dnn())),
        RosterEntry::new("wide_deep", DeepLearning, nn(Arch::wide_deep())),
        RosterEntry::new("resnet", DeepLearning, nn(Arch::resnet())),
        RosterEntry::new("tabnet", DeepLearning, nn(Arch::tabnet())),
        RosterEntry::new("adaboost", GradientBoosting, ModelSpec::Adaboost { n_rounds: 200 }),
        RosterEntry::new("catboost", GradientBoosting, ModelSpec::Gbdt(GbdtConfig::cat())),
        RosterEntry::new("histgb", GradientBoosting, ModelSpec::Gbdt(GbdtConfig::histgb())),
        RosterEntry::new("lightgbm", GradientBoosting, ModelSpec::Gbdt(GbdtConfig::lgbm())),
        RosterEntry::new("xgboost", GradientBoosting, ModelSpec::Gbdt(GbdtConfig::xgb())),
        RosterEntry::new("svm", Traditional, ModelSpec::Svm(SvmParams::default())),
        RosterEntry::new("lda", Traditional, ModelSpec::Lda),
        RosterEntry::new("extra_trees", Traditional, ModelSpec::Forest(ForestParams::extra_trees())),
        RosterEntry::new("random_forest", Traditional, ModelSpec::Forest(ForestParams::random_forest())),
        RosterEntry::new(
            "decision_tree",
            Traditional,
            ModelSpec::Tree(TreeParams { max_depth: Some(8), min_leaf: 10, ..TreeParams::default() }),
        ),
        RosterEntry::new("knn", Traditional, ModelSpec::Knn { k: 25 }),
        RosterEntry::new("logistic_regression", Traditional, ModelSpec::Logistic(LogisticParams::default())),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Protocol {
    Holdout { train_ratio: f64 },
    /// Metrics on pooled out-of-fold predictions.
    KFold { k: usize },
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol::Holdout { train_ratio: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub roster: Vec<RosterEntry>,
    /// Replacement specs keyed by roster name.
    pub overrides: BTreeMap<String, ModelSpec>,
    /// Restrict the run to these roster names (in roster order).
    pub models: Option<Vec<String>>,
    pub protocol: Protocol,
    pub threshold: ThresholdPolicy,
    pub seed: u64,
    /// Concurrent model fits; 0 uses every core.
    pub workers: usize,
    pub calibration_bins: usize,
    /// Compute the consensus importance table for the report.
    pub importance: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            roster: default_roster(),
            overrides: BTreeMap::new(),
            models: None,
            protocol: Protocol::default(),
            threshold: ThresholdPolicy::TuneF1 { holdout: 0.25, refit: true },
            seed: 42,
            workers: 0,
            calibration_bins: 10,
            importance: true,
        }
    }
}

impl BenchmarkConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    /// Roster after overrides and the `models` filter.
    pub fn resolved_roster(&self) -> Result<Vec<RosterEntry>> {
        if self.roster.is_empty() {
            return Err(Error::InvalidConfig("roster is empty".into()));
        }
        let mut seen = HashSet::new();
        for e in &self.roster {
            if !seen.insert(e.name.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate model name `{}`", e.name)));
            }
        }
        for name in self.overrides.keys().chain(self.models.iter().flatten()) {
            if !seen.contains(name.as_str()) {
                return Err(Error::InvalidConfig(format!("unknown model `{name}`")));
            }
        }
        let mut out: Vec<RosterEntry> = self
            .roster
            .iter()
            .filter(|e| self.models.as_ref().is_none_or(|m| m.contains(&e.name)))
            .cloned()
            .collect();
        for e in &mut out {
            if let Some(spec) = self.overrides.get(&e.name) {
                e.model = spec.clone();
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidConfig("model filter selects nothing".into()));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.resolved_roster()?;
        match self.protocol {
            Protocol::Holdout { train_ratio } if !(train_ratio > 0.0 && train_ratio < 1.0) => {
                return Err(Error::RatioOutOfRange(train_ratio));
            }
            Protocol::KFold { k } if k < 2 => return Err(Error::InvalidFoldCount(k)),
            _ => {}
        }
        if self.calibration_bins == 0 {
            return Err(Error::InvalidConfig("calibration_bins must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

/// SHA-256 over feature names, values and labels.
pub fn dataset_hash(ds: &Dataset) -> String {
    let mut h = Sha256::new();
    for n in ds.feature_names() {
        h.update(n.as_bytes());
        h.update([0]);
    }
    for v in ds.features() {
        h.update(v.to_le_bytes());
    }
    h.update(ds.labels());
    hex::encode(h.finalize())
}

/// Stable per-model seed independent of roster position.
pub fn model_seed(seed: u64, name: &str) -> u64 {
    let fnv = name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3));
    derive_seed(seed, fnv)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutcome {
    pub name: String,
    pub family: Family,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
    pub train_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub config: BenchmarkConfig,
    pub outcomes: Vec<ModelOutcome>,
    pub leaderboard: Leaderboard,
    /// Fitted models (holdout protocol only), in roster order.
    pub models: Vec<Option<FittedModel>>,
    pub provenance: RunProvenance,
    pub importance: Option<crate::metrics::ConsensusImportance>,
}

impl BenchmarkRun {
    pub fn failures(&self) -> Vec<&ModelOutcome> {
        self.outcomes.iter().filter(|o| o.error.is_some()).collect()
    }
}

fn holdout_one(e: &RosterEntry, train: &Dataset, test: &Dataset, cfg: &BenchmarkConfig) -> Result<(EvalReport, FittedModel)> {
    let m = fit_model(&e.model, train, cfg.threshold, model_seed(cfg.seed, &e.name))?;
    let scores = m.score(test)?;
    let mut r = evaluate(&e.name, e.family.name(), test.labels(), &scores, m.threshold)?;
    if cfg.calibration_bins != r.calibration.n_bins {
        r.calibration = crate::metrics::calibration_curve(test.labels(), &scores, cfg.calibration_bins)?;
    }
    Ok((r, m))
}

fn kfold_one(e: &RosterEntry, ds: &Dataset, plan: &crate::data::FoldPlan, cfg: &BenchmarkConfig) -> Result<EvalReport> {
    let n = ds.n_rows();
    let mut scores = vec![0.0; n];
    let mut preds = vec![0u8; n];
    let mut thresholds = Vec::with_capacity(plan.k);
    for f in 0..plan.k {
        let (tr, te) = plan.fold(f);
        let m = fit_model(&e.model, &ds.select_rows(&tr), cfg.threshold, derive_seed(model_seed(cfg.seed, &e.name), f as u64))?;
        let s = m.score(&ds.select_rows(&te))?;
        let p = predict_labels(&s, m.threshold);
        for (k, &i) in te.iter().enumerate() {
            scores[i] = s[k];
            preds[i] = p[k];
        }
        thresholds.push(m.threshold);
    }
    let t = thresholds.iter().sum::<f64>() / thresholds.len() as f64;
    let mut r = evaluate_predictions(&e.name, e.family.name(), ds.labels(), &scores, &preds, t)?;
    r.calibration = crate::metrics::calibration_curve(ds.labels(), &scores, cfg.calibration_bins)?;
    Ok(r)
}

/// Trains and evaluates every roster model. Model failures become failed
/// rows; only configuration and split errors abort.
pub fn run_benchmark(cfg: &BenchmarkConfig, ds: &Dataset) -> Result<BenchmarkRun> {
    cfg.validate()?;
    let roster = cfg.resolved_roster()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;

    let (split, fold_plan) = match cfg.protocol {
        Protocol::Holdout { train_ratio } => (Some(split_stratified(ds, train_ratio, cfg.seed)?), None),
        Protocol::KFold { k } => (None, Some(kfold_stratified(ds, k, cfg.seed)?)),
    };
    let (train, test) = match &split {
        Some(s) => (ds.select_rows(&s.train_indices), ds.select_rows(&s.test_indices)),
        None => (ds.clone(), ds.clone()),
    };

    let results: Vec<(ModelOutcome, Option<FittedModel>)> = pool.install(|| {
        roster
            .par_iter()
            .map(|e| {
                let t = Instant::now();
                let res = match &fold_plan {
                    None => holdout_one(e, &train, &test, cfg).map(|(r, m)| (r, Some(m))),
                    Some(plan) => kfold_one(e, ds, plan, cfg).map(|r| (r, None)),
                };
                let train_seconds = t.elapsed().as_secs_f64();
                match res {
                    Ok((report, model)) => {
                        log::info!("{}: f1 {:.4} in {:.1}s", e.name, report.metrics.f1, train_seconds);
                        (ModelOutcome { name: e.name.clone(), family: e.family, report: Some(report), error: None, train_seconds }, model)
                    }
                    Err(err) => {
                        log::warn!("{} failed: {err}", e.name);
                        let o = ModelOutcome { name: e.name.clone(), family: e.family, report: None, error: Some(err.to_string()), train_seconds };
                        (o, None)
                    }
                }
            })
            .collect()
    });
    let (outcomes, models): (Vec<_>, Vec<_>) = results.into_iter().unzip();

    let importance = if cfg.importance {
        match crate::metrics::consensus_importance(&train, derive_seed(cfg.seed, 0x1a)) {
            Ok(c) => Some(c),
            Err(e) => {
                log::warn!("consensus importance skipped: {e}");
                None
            }
        }
    } else {
        None
    };
    let provenance = RunProvenance {
        seed: cfg.seed,
        config_hash: cfg.hash(),
        dataset_hash: dataset_hash(ds),
        n_rows: ds.n_rows(),
        n_features: ds.n_cols(),
        n_train: split.as_ref().map_or(ds.n_rows(), |s| s.train_indices.len()),
        n_test: split.as_ref().map_or(ds.n_rows(), |s| s.test_indices.len()),
        protocol: cfg.protocol,
        threshold: cfg.threshold,
        models: roster.iter().map(|e| e.name.clone()).collect(),
    };
    Ok(BenchmarkRun {
        config: cfg.clone(),
        leaderboard: Leaderboard::from_outcomes(&outcomes),
        outcomes,
        models,
        provenance,
        importance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roster_shape() {
        let r = default_roster();
        assert_eq!(r.len(), 16);
        let count = |f: Family| r.iter().filter(|e| e.family == f).count();
        assert_eq!((count(Family::DeepLearning), count(Family::GradientBoosting), count(Family::Traditional)), (4, 5, 7));
        let cfg = BenchmarkConfig::default();
        cfg.validate().unwrap();
        let back: BenchmarkConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn config_errors() {
        let mut cfg = BenchmarkConfig::default();
        cfg.roster.push(cfg.roster[0].clone());
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        let cfg = BenchmarkConfig { models: Some(vec!["nope".into()]), ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = BenchmarkConfig { protocol: Protocol::KFold { k: 1 }, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(Error::InvalidFoldCount(1))));
        assert!(serde_json::from_str::<BenchmarkConfig>(r#"{"sed": 1}"#).is_err());
    }

    #[test]
    fn model_seed_is_positional_independent() {
        assert_eq!(model_seed(1, "knn"), model_seed(1, "knn"));
        assert_ne!(model_seed(1, "knn"), model_seed(1, "lda"));
    }
}
