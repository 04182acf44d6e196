//! Leaderboard, per-family quartiles and agreement pairs.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{Family, ModelOutcome};
use crate::error::{Error, Result};
use crate::metrics::{fmt6, MetricSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub model: String,
    pub family: Family,
    /// `None` for failed models.
    pub metrics: Option<MetricSet>,
    pub threshold: Option<f64>,
    pub error: Option<String>,
}

impl LeaderboardRow {
    pub fn failed(&self) -> bool {
        self.metrics.is_none()
    }
}

/// Rows sorted by (f1 desc, recall desc, name asc); failed rows last by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub rows: Vec<LeaderboardRow>,
}

/// Values as they appear in emitted tables, so anything recomputed from a
/// CSV matches recomputation from memory digit for digit.
fn round6(x: f64) -> f64 {
    fmt6(x).parse().expect("formatted number parses")
}

fn cmp_rows(a: &LeaderboardRow, b: &LeaderboardRow) -> Ordering {
    match (&a.metrics, &b.metrics) {
        (Some(x), Some(y)) => y.f1.total_cmp(&x.f1).then(y.recall.total_cmp(&x.recall)).then(a.model.cmp(&b.model)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.model.cmp(&b.model),
    }
}

const FIXED_HEADER: [&str; 5] = ["rank", "model", "family", "status", "threshold"];

impl Leaderboard {
    pub fn from_rows(mut rows: Vec<LeaderboardRow>) -> Leaderboard {
        rows.sort_by(cmp_rows);
        Leaderboard { rows }
    }

    pub fn from_outcomes(outcomes: &[ModelOutcome]) -> Leaderboard {
        let rows = outcomes
            .iter()
            .map(|o| LeaderboardRow {
                model: o.name.clone(),
                family: o.family,
                metrics: o.report.as_ref().map(|r| MetricSet::from_values(r.metrics.values().map(round6))),
                threshold: o.report.as_ref().map(|r| round6(r.threshold)),
                error: o.error.clone(),
            })
            .collect();
        Self::from_rows(rows)
    }

    pub fn ok_rows(&self) -> impl Iterator<Item = &LeaderboardRow> {
        self.rows.iter().filter(|r| !r.failed())
    }

    /// Best non-failed row of a family.
    pub fn top_of(&self, family: Family) -> Option<&LeaderboardRow> {
        self.ok_rows().find(|r| r.family == family)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = FIXED_HEADER.iter().copied().chain(MetricSet::NAMES).chain(["error"]).collect();
        w.write_record(&header).expect("in-memory write");
        for (i, r) in self.rows.iter().enumerate() {
            let mut rec = vec![
                (i + 1).to_string(),
                r.model.clone(),
                r.family.name().to_string(),
                if r.failed() { "failed" } else { "ok" }.to_string(),
                r.threshold.map(fmt6).unwrap_or_default(),
            ];
            match &r.metrics {
                Some(m) => rec.extend(m.values().map(fmt6)),
                None => rec.extend(std::iter::repeat_n(String::new(), 10)),
            }
            rec.push(r.error.clone().unwrap_or_default());
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn from_csv(text: &str) -> Result<Leaderboard> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let bad = |m: String| Error::SchemaMismatch(format!("leaderboard: {m}"));
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 16 {
                return Err(bad(format!("expected 16 fields, got {}", rec.len())));
            }
            let family = Family::parse(&rec[2]).ok_or_else(|| bad(format!("unknown family `{}`", &rec[2])))?;
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number `{s}`")));
            let (metrics, threshold) = if &rec[3] == "ok" {
                let mut v = [0.0; 10];
                for (k, slot) in v.iter_mut().enumerate() {
                    *slot = num(&rec[5 + k])?;
                }
                (Some(MetricSet::from_values(v)), Some(num(&rec[4])?))
            } else {
                (None, None)
            };
            let error = (!rec[15].is_empty()).then(|| rec[15].to_string());
            rows.push(LeaderboardRow { model: rec[1].to_string(), family, metrics, threshold, error });
        }
        Ok(Leaderboard::from_rows(rows))
    }
}

/// Linear-interpolation quantile of sorted data (`q` in [0, 1]).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyStat {
    pub family: Family,
    pub metric: String,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub const SUMMARY_METRICS: [&str; 4] = ["accuracy", "precision", "recall", "f1"];

/// Box-plot statistics per (family, metric) over non-failed models.
pub fn family_summary(lb: &Leaderboard) -> Vec<FamilyStat> {
    let mut out = Vec::new();
    for family in Family::ALL {
        for metric in SUMMARY_METRICS {
            let mut v: Vec<f64> =
                lb.ok_rows().filter(|r| r.family == family).filter_map(|r| r.metrics.as_ref()?.get(metric)).collect();
            if v.is_empty() {
                continue;
            }
            v.sort_by(f64::total_cmp);
            out.push(FamilyStat {
                family,
                metric: metric.to_string(),
                n: v.len(),
                min: v[0],
                q1: quantile(&v, 0.25),
                median: quantile(&v, 0.5),
                q3: quantile(&v, 0.75),
                max: v[v.len() - 1],
            });
        }
    }
    out
}

pub fn family_summary_csv(stats: &[FamilyStat]) -> String {
    let mut out = String::from("family,metric,n,min,q1,median,q3,max\n");
    for s in stats {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.family.name(),
            s.metric,
            s.n,
            fmt6(s.min),
            fmt6(s.q1),
            fmt6(s.median),
            fmt6(s.q3),
            fmt6(s.max)
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub model: String,
    pub family: Family,
    pub cohens_kappa: f64,
    pub mcc: f64,
    /// Distance from the kappa = mcc diagonal.
    pub abs_diff: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Kappa/MCC and precision/recall pairs, one row per non-failed model in
/// leaderboard order.
pub fn agreement_table(lb: &Leaderboard) -> Vec<AgreementRow> {
    lb.ok_rows()
        .map(|r| {
            let m = r.metrics.as_ref().expect("ok row has metrics");
            AgreementRow {
                model: r.model.clone(),
                family: r.family,
                cohens_kappa: m.cohens_kappa,
                mcc: m.mcc,
                abs_diff: (m.cohens_kappa - m.mcc).abs(),
                precision: m.precision,
                recall: m.recall,
            }
        })
        .collect()
}

pub fn agreement_csv(rows: &[AgreementRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "family", "cohens_kappa", "mcc", "abs_kappa_minus_mcc", "precision", "recall"]).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.family.name().to_string(),
            fmt6(r.cohens_kappa),
            fmt6(r.mcc),
            fmt6(r.abs_diff),
            fmt6(r.precision),
            fmt6(r.recall),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn row(name: &str, family: Family, f1: f64, recall: f64) -> LeaderboardRow {
        let m = MetricSet { f1, recall, precision: 0.5, accuracy: 0.6, ..Default::default() };
        LeaderboardRow { model: name.into(), family, metrics: Some(m), threshold: Some(0.5), error: None }
    }

    #[test]
    fn sort_key_and_csv_round_trip() {
        let failed = LeaderboardRow { model: "aaa".into(), family: Family::Traditional, metrics: None, threshold: None, error: Some("boom, badly".into()) };
        let lb = Leaderboard::from_rows(vec![
            failed,
            row("b", Family::Traditional, 0.7, 0.6),
            row("a", Family::Traditional, 0.7, 0.6),
            row("c", Family::DeepLearning, 0.7, 0.9),
            row("d", Family::GradientBoosting, 0.8, 0.1),
        ]);
        let names: Vec<&str> = lb.rows.iter().map(|r| r.model.as_str()).collect();
        assert_eq!(names, ["d", "c", "a", "b", "aaa"]);
        let back = Leaderboard::from_csv(&lb.to_csv()).unwrap();
        assert_eq!(back, lb);
        assert_eq!(family_summary(&back), family_summary(&lb));
        assert_eq!(lb.top_of(Family::Traditional).unwrap().model, "a");
    }

    #[test]
    fn single_model_family_and_quartile_oracle() {
        let lb = Leaderboard::from_rows(vec![row("x", Family::DeepLearning, 0.4, 0.3)]);
        let s = family_summary(&lb);
        assert_eq!(s.len(), 4);
        let f1 = s.iter().find(|s| s.metric == "f1").unwrap();
        assert_eq!((f1.min, f1.median, f1.max), (0.4, 0.4, 0.4));

        let mut r = crate::rng::rng(9);
        for _ in 0..200 {
            let n = r.random_range(1..12);
            let mut v: Vec<f64> = (0..n).map(|_| r.random()).collect();
            v.sort_by(f64::total_cmp);
            for q in [0.25, 0.5, 0.75] {
                // oracle: weighted average of the two straddling order statistics
                let h = (n - 1) as f64 * q;
                let (i, frac) = (h as usize, h - h.floor());
                let expect = if i + 1 < n { v[i] * (1.0 - frac) + v[i + 1] * frac } else { v[i] };
                assert!((quantile(&v, q) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn agreement_rows() {
        let lb = Leaderboard::from_rows(vec![row("x", Family::DeepLearning, 0.4, 0.3), row("y", Family::Traditional, 0.5, 0.3)]);
        let a = agreement_table(&lb);
        assert_eq!(a.len(), 2);
        assert!(agreement_csv(&a).starts_with("model,family,cohens_kappa,mcc,abs_kappa_minus_mcc"));
    }
}
