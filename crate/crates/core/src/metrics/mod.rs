//! Classification metrics, calibration bins, consensus importance and PCA.

pub mod importance;
mod pca;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use importance::{consensus_importance, ConsensusImportance};
pub use pca::{pca_project, PcaProjection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn n(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

fn check_binary(v: &[u8]) -> Result<()> {
    match v.iter().find(|&&x| x > 1) {
        Some(&x) => Err(Error::NonBinaryValue(x as f64)),
        None => Ok(()),
    }
}

pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch(y_true.len(), y_pred.len()));
    }
    check_binary(y_true)?;
    check_binary(y_pred)?;
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => cm.tp += 1,
            (0, 0) => cm.tn += 1,
            (0, 1) => cm.fp += 1,
            _ => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// Predicted class for a score; ties at the threshold go to class 1.
pub fn predict_label(score: f64, threshold: f64) -> u8 {
    u8::from(score >= threshold)
}

pub fn predict_labels(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| predict_label(s, threshold)).collect()
}

/// Metrics computable from the confusion matrix alone. Ratios with a zero
/// denominator are 0 and listed in `undefined`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f1: f64,
    pub balanced_accuracy: f64,
    pub cohens_kappa: f64,
    pub mcc: f64,
    pub undefined: Vec<String>,
}

pub fn threshold_metrics(cm: &ConfusionMatrix) -> Result<ThresholdMetrics> {
    let n = cm.n() as f64;
    if cm.n() == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let (tp, tn, fp, fn_) = (cm.tp as f64, cm.tn as f64, cm.fp as f64, cm.fn_ as f64);
    let mut undefined = Vec::new();
    let mut ratio = |num: f64, den: f64, name: &str| {
        if den == 0.0 {
            undefined.push(name.to_string());
            0.0
        } else {
            num / den
        }
    };
    let precision = ratio(tp, tp + fp, "precision");
    let recall = ratio(tp, tp + fn_, "recall");
    let specificity = ratio(tn, tn + fp, "specificity");
    let f1 = ratio(2.0 * tp, 2.0 * tp + fp + fn_, "f1");
    let accuracy = (tp + tn) / n;
    let p_e = ((tp + fp) * (tp + fn_) + (fn_ + tn) * (fp + tn)) / (n * n);
    let cohens_kappa = ratio(accuracy - p_e, 1.0 - p_e, "cohens_kappa");
    let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    let mcc = ratio(tp * tn - fp * fn_, den, "mcc");
    Ok(ThresholdMetrics {
        accuracy,
        precision,
        recall,
        specificity,
        f1,
        balanced_accuracy: (recall + specificity) / 2.0,
        cohens_kappa,
        mcc,
        undefined,
    })
}

fn check_scores(y: &[u8], s: &[f64]) -> Result<()> {
    if y.len() != s.len() {
        return Err(Error::LengthMismatch(y.len(), s.len()));
    }
    check_binary(y)
}

/// Average ranks (1-based) with ties sharing the mean rank.
fn average_ranks(s: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s[a].partial_cmp(&s[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; s.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && s[idx[j + 1]] == s[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Probability that a random positive outscores a random negative (ties ½).
pub fn roc_auc(y_true: &[u8], scores: &[f64]) -> Result<f64> {
    check_scores(y_true, scores)?;
    let n1 = y_true.iter().filter(|&&y| y == 1).count() as f64;
    let n0 = y_true.len() as f64 - n1;
    if n1 == 0.0 || n0 == 0.0 {
        return Err(Error::SingleClassEvaluation);
    }
    let ranks = average_ranks(scores);
    let r1: f64 = ranks.iter().zip(y_true).filter(|(_, &y)| y == 1).map(|(r, _)| r).sum();
    Ok((r1 - n1 * (n1 + 1.0) / 2.0) / (n1 * n0))
}

/// Σ (R_n − R_{n−1}) P_n over descending score thresholds; tied scores form
/// one threshold.
pub fn average_precision(y_true: &[u8], scores: &[f64]) -> Result<f64> {
    check_scores(y_true, scores)?;
    let total_pos = y_true.iter().filter(|&&y| y == 1).count() as f64;
    if total_pos == 0.0 {
        return Err(Error::NoPositives);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    let (mut tp, mut fp, mut prev_recall, mut ap) = (0.0, 0.0, 0.0, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if y_true[idx[j]] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            j += 1;
        }
        let recall = tp / total_pos;
        ap += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
        i = j;
    }
    Ok(ap)
}

pub fn brier(y_true: &[u8], probs: &[f64]) -> Result<f64> {
    check_scores(y_true, probs)?;
    if let Some(&p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    if probs.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    Ok(probs.iter().zip(y_true).map(|(p, &y)| (p - y as f64).powi(2)).sum::<f64>() / probs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub low: f64,
    pub high: f64,
    /// `None` for empty bins.
    pub mean_pred: Option<f64>,
    pub frac_pos: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub n_bins: usize,
    pub bins: Vec<CalibrationBin>,
}

impl CalibrationCurve {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_low,bin_high,mean_pred,frac_pos,count\n");
        let opt = |v: Option<f64>| v.map(fmt6).unwrap_or_default();
        for b in &self.bins {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt6(b.low),
                fmt6(b.high),
                opt(b.mean_pred),
                opt(b.frac_pos),
                b.count
            ));
        }
        out
    }
}

/// Fixed six-decimal formatting used by every emitted table.
pub fn fmt6(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

/// Equal-width bins over [0, 1]; the last bin is closed.
pub fn calibration_curve(y_true: &[u8], probs: &[f64], n_bins: usize) -> Result<CalibrationCurve> {
    check_scores(y_true, probs)?;
    if n_bins == 0 {
        return Err(Error::InvalidConfig("n_bins must be positive".into()));
    }
    if let Some(&p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    let mut sum_p = vec![0.0; n_bins];
    let mut sum_y = vec![0.0; n_bins];
    let mut count = vec![0usize; n_bins];
    for (&p, &y) in probs.iter().zip(y_true) {
        let b = ((p * n_bins as f64) as usize).min(n_bins - 1);
        sum_p[b] += p;
        sum_y[b] += y as f64;
        count[b] += 1;
    }
    let bins = (0..n_bins)
        .map(|b| {
            let c = count[b];
            CalibrationBin {
                low: b as f64 / n_bins as f64,
                high: (b + 1) as f64 / n_bins as f64,
                mean_pred: (c > 0).then(|| sum_p[b] / c as f64),
                frac_pos: (c > 0).then(|| sum_y[b] / c as f64),
                count: c,
            }
        })
        .collect();
    Ok(CalibrationCurve { n_bins, bins })
}

/// The ten reported metrics.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc_auc: f64,
    pub average_precision: f64,
    pub balanced_accuracy: f64,
    pub cohens_kappa: f64,
    pub mcc: f64,
    pub brier: f64,
}

impl MetricSet {
    pub const NAMES: [&'static str; 10] = [
        "accuracy",
        "precision",
        "recall",
        "f1",
        "roc_auc",
        "average_precision",
        "balanced_accuracy",
        "cohens_kappa",
        "mcc",
        "brier",
    ];

    pub fn values(&self) -> [f64; 10] {
        [
            self.accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.roc_auc,
            self.average_precision,
            self.balanced_accuracy,
            self.cohens_kappa,
            self.mcc,
            self.brier,
        ]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Self::NAMES.iter().position(|n| *n == name).map(|i| self.values()[i])
    }

    pub fn from_values(v: [f64; 10]) -> MetricSet {
        MetricSet {
            accuracy: v[0],
            precision: v[1],
            recall: v[2],
            f1: v[3],
            roc_auc: v[4],
            average_precision: v[5],
            balanced_accuracy: v[6],
            cohens_kappa: v[7],
            mcc: v[8],
            brier: v[9],
        }
    }
}

/// Evaluation of one model on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub family: String,
    pub threshold: f64,
    pub n: usize,
    pub positives: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricSet,
    pub undefined: Vec<String>,
    pub calibration: CalibrationCurve,
}

/// Computes every metric for scores thresholded at `threshold`.
pub fn evaluate(model: &str, family: &str, y_true: &[u8], scores: &[f64], threshold: f64) -> Result<EvalReport> {
    evaluate_predictions(model, family, y_true, scores, &predict_labels(scores, threshold), threshold)
}

/// As [`evaluate`], with hard labels supplied separately (e.g. pooled
/// out-of-fold predictions thresholded per fold). `threshold` is recorded only.
pub fn evaluate_predictions(
    model: &str,
    family: &str,
    y_true: &[u8],
    scores: &[f64],
    y_pred: &[u8],
    threshold: f64,
) -> Result<EvalReport> {
    check_scores(y_true, scores)?;
    if y_true.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let cm = confusion(y_true, y_pred)?;
    let tm = threshold_metrics(&cm)?;
    let mut undefined = tm.undefined.clone();
    undefined.retain(|u| u != "specificity");
    let roc = match roc_auc(y_true, scores) {
        Ok(v) => v,
        Err(Error::SingleClassEvaluation) => {
            undefined.push("roc_auc".into());
            0.0
        }
        Err(e) => return Err(e),
    };
    let ap = match average_precision(y_true, scores) {
        Ok(v) => v,
        Err(Error::NoPositives) => {
            undefined.push("average_precision".into());
            0.0
        }
        Err(e) => return Err(e),
    };
    let metrics = MetricSet {
        accuracy: tm.accuracy,
        precision: tm.precision,
        recall: tm.recall,
        f1: tm.f1,
        roc_auc: roc,
        average_precision: ap,
        balanced_accuracy: tm.balanced_accuracy,
        cohens_kappa: tm.cohens_kappa,
        mcc: tm.mcc,
        brier: brier(y_true, scores)?,
    };
    Ok(EvalReport {
        model: model.to_string(),
        family: family.to_string(),
        threshold,
        n: y_true.len(),
        positives: y_true.iter().filter(|&&y| y == 1).count(),
        confusion: cm,
        metrics,
        undefined,
        calibration: calibration_curve(y_true, scores, 10)?,
    })
}

/// Threshold maximizing F1 when predicting `score ≥ t` over the observed
/// scores; ties go to the lower threshold (higher recall).
pub fn best_f1_threshold(y_true: &[u8], scores: &[f64]) -> f64 {
    let total_pos = y_true.iter().filter(|&&y| y == 1).count() as f64;
    if total_pos == 0.0 || scores.is_empty() {
        return 0.5;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    let (mut tp, mut fp) = (0.0, 0.0);
    let (mut best_f1, mut best_t) = (-1.0, 0.5);
    let mut i = 0;
    while i < idx.len() {
        let t = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == t {
            if y_true[idx[i]] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let f1 = 2.0 * tp / (tp + fp + total_pos);
        if f1 >= best_f1 - 1e-15 {
            best_f1 = f1;
            best_t = t;
        }
    }
    best_t
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn confusion_examples() {
        let cm = confusion(&[1, 1, 0, 0], &[1, 0, 0, 0]).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 1, fn_: 1, fp: 0, tn: 2 });
        let y = [1, 0, 1, 1, 0];
        let cm = confusion(&y, &y).unwrap();
        assert_eq!((cm.fp, cm.fn_), (0, 0));
        let inv: Vec<u8> = y.iter().map(|v| 1 - v).collect();
        let cm = confusion(&y, &inv).unwrap();
        assert_eq!((cm.tp, cm.tn), (0, 0));
        assert!(matches!(confusion(&[1], &[1, 0]), Err(Error::LengthMismatch(..))));
        assert!(matches!(confusion(&[2], &[1]), Err(Error::NonBinaryValue(_))));
    }

    #[test]
    fn threshold_metric_examples() {
        let m = threshold_metrics(&ConfusionMatrix { tp: 1, fn_: 1, fp: 0, tn: 2 }).unwrap();
        assert!(close(m.precision, 1.0) && close(m.recall, 0.5) && close(m.f1, 2.0 / 3.0));
        assert!(close(m.accuracy, 0.75) && close(m.cohens_kappa, 0.5));
        assert!(close(m.mcc, 2.0 / 12f64.sqrt()));

        let m = threshold_metrics(&ConfusionMatrix { tp: 3, tn: 4, fp: 0, fn_: 0 }).unwrap();
        for v in [m.accuracy, m.precision, m.recall, m.f1, m.balanced_accuracy, m.cohens_kappa, m.mcc] {
            assert!(close(v, 1.0));
        }

        let m = threshold_metrics(&ConfusionMatrix { tp: 5, tn: 0, fp: 5, fn_: 0 }).unwrap();
        assert!(close(m.recall, 1.0) && close(m.precision, 0.5) && close(m.cohens_kappa, 0.0) && close(m.mcc, 0.0));
        assert!(m.undefined.contains(&"mcc".to_string()));

        let m = threshold_metrics(&ConfusionMatrix { tp: 0, tn: 5, fp: 0, fn_: 5 }).unwrap();
        assert_eq!(m.precision, 0.0);
        assert!(m.undefined.contains(&"precision".to_string()));
        assert!(matches!(threshold_metrics(&ConfusionMatrix::default()), Err(Error::EmptyEvaluation)));
    }

    #[test]
    fn ranking_examples() {
        assert!(close(roc_auc(&[1, 0], &[0.9, 0.1]).unwrap(), 1.0));
        assert!(close(roc_auc(&[1, 0, 1, 0], &[0.3; 4]).unwrap(), 0.5));
        assert!(close(roc_auc(&[1, 0, 1, 0], &[0.8, 0.7, 0.6, 0.5]).unwrap(), 0.75));
        assert!(matches!(roc_auc(&[1, 1], &[0.1, 0.2]), Err(Error::SingleClassEvaluation)));

        assert!((average_precision(&[1, 0, 1], &[0.9, 0.8, 0.7]).unwrap() - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
        assert!(close(average_precision(&[1, 1, 0], &[0.9, 0.8, 0.1]).unwrap(), 1.0));
        assert!(close(average_precision(&[1], &[0.3]).unwrap(), 1.0));
        assert!(matches!(average_precision(&[0, 0], &[0.3, 0.1]), Err(Error::NoPositives)));
        // tied group counts as one threshold: precision 1/2 at recall 1
        assert!(close(average_precision(&[1, 0], &[0.5, 0.5]).unwrap(), 0.5));
    }

    #[test]
    fn brier_examples() {
        assert!(close(brier(&[1, 0], &[1.0, 0.0]).unwrap(), 0.0));
        assert!(close(brier(&[1, 0, 1], &[0.5; 3]).unwrap(), 0.25));
        assert!((brier(&[1, 0, 1], &[0.8, 0.4, 0.6]).unwrap() - 0.12).abs() < 1e-12);
        assert!(matches!(brier(&[1], &[1.2]), Err(Error::ProbabilityOutOfRange(_))));
    }

    #[test]
    fn calibration_examples() {
        let y: Vec<u8> = (0..100).map(|i| u8::from(i < 55)).collect();
        let c = calibration_curve(&y, &[0.55; 100], 10).unwrap();
        let occupied: Vec<_> = c.bins.iter().filter(|b| b.count > 0).collect();
        assert_eq!(occupied.len(), 1);
        assert!(close(occupied[0].mean_pred.unwrap(), 0.55) && close(occupied[0].frac_pos.unwrap(), 0.55));

        let y = [0u8, 1, 1, 0];
        let p: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        let c = calibration_curve(&y, &p, 10).unwrap();
        assert_eq!(c.bins[0].frac_pos, Some(0.0));
        assert_eq!(c.bins[9].frac_pos, Some(1.0));
        assert_eq!(c.bins[5].mean_pred, None);
        assert!(c.to_csv().starts_with("bin_low,bin_high,mean_pred,frac_pos,count\n0.000000,0.100000,0.000000,0.000000,2\n"));
    }

    #[test]
    fn best_threshold_picks_max_f1() {
        let y = [1, 1, 0, 1, 0, 0];
        let s = [0.9, 0.8, 0.7, 0.6, 0.2, 0.1];
        let t = best_f1_threshold(&y, &s);
        let f1 = |t: f64| threshold_metrics(&confusion(&y, &predict_labels(&s, t)).unwrap()).unwrap().f1;
        for &c in &s {
            assert!(f1(t) >= f1(c) - 1e-12);
        }
        assert_eq!(t, 0.6);
    }

    fn sym_cm() -> impl Strategy<Value = ConfusionMatrix> {
        (0u64..50, 0u64..50).prop_map(|(a, b)| ConfusionMatrix { tp: a, tn: a, fp: b, fn_: b })
    }

    proptest! {
        #[test]
        fn kappa_equals_mcc_on_symmetric(cm in sym_cm()) {
            prop_assume!(cm.n() > 0);
            let m = threshold_metrics(&cm).unwrap();
            prop_assert!((m.cohens_kappa - m.mcc).abs() < 1e-12);
        }

        #[test]
        fn f1_forms_agree(tp in 0u64..40, tn in 0u64..40, fp in 0u64..40, fn_ in 0u64..40) {
            let cm = ConfusionMatrix { tp, tn, fp, fn_ };
            prop_assume!(cm.n() > 0);
            let m = threshold_metrics(&cm).unwrap();
            if m.precision + m.recall > 0.0 && !m.undefined.iter().any(|u| u == "precision" || u == "recall") {
                prop_assert!((m.f1 - 2.0 * m.precision * m.recall / (m.precision + m.recall)).abs() < 1e-12);
            }
            for v in [m.accuracy, m.precision, m.recall, m.f1, m.balanced_accuracy] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!((-1.0..=1.0).contains(&m.cohens_kappa) && (-1.0..=1.0).contains(&m.mcc));
        }

        #[test]
        fn auc_symmetry_and_monotone_invariance(
            pairs in proptest::collection::vec((0u8..2, 0u32..1_000_000), 2..60)
        ) {
            let y: Vec<u8> = pairs.iter().map(|p| p.0).collect();
            prop_assume!(y.contains(&0) && y.contains(&1));
            // distinct scores
            let s: Vec<f64> = pairs.iter().enumerate().map(|(i, p)| p.1 as f64 + i as f64 * 1e-7).collect();
            let neg: Vec<f64> = s.iter().map(|v| -v).collect();
            let a = roc_auc(&y, &s).unwrap();
            prop_assert!((a + roc_auc(&y, &neg).unwrap() - 1.0).abs() < 1e-12);
            let t: Vec<f64> = s.iter().map(|v| (v / 1e6).exp() * 3.0 + 1.0).collect();
            prop_assert!((a - roc_auc(&y, &t).unwrap()).abs() < 1e-12);
            prop_assert!((average_precision(&y, &s).unwrap() - average_precision(&y, &t).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn calibration_counts_sum(p in proptest::collection::vec(0.0f64..=1.0, 1..200)) {
            let y: Vec<u8> = p.iter().map(|v| u8::from(*v > 0.5)).collect();
            let c = calibration_curve(&y, &p, 10).unwrap();
            prop_assert_eq!(c.total(), p.len());
        }

        #[test]
        fn base_rate_brier(k in 1usize..50, n in 51usize..120) {
            let y: Vec<u8> = (0..n).map(|i| u8::from(i < k)).collect();
            let p = k as f64 / n as f64;
            prop_assert!((brier(&y, &vec![p; n]).unwrap() - p * (1.0 - p)).abs() < 1e-12);
        }
    }
}
