//! Synthetic survey tables drawn from published marginal distributions,
//! with either a single-stratifier label model or a planted logistic signal.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::RawTable;
use crate::rng::{self, Rng};

/// One category of a marginal: raw spelling (`None` = skip-logic blank),
/// display label, survey count, malnourished count and its encoded code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub raw: Option<String>,
    pub label: String,
    pub total: f64,
    pub malnourished: f64,
    pub code: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMarginal {
    /// Raw column name.
    pub name: String,
    /// Encoded feature name (one-hot features use category labels instead).
    pub output: String,
    pub onehot: bool,
    pub categories: Vec<Category>,
}

impl FeatureMarginal {
    fn total(&self) -> f64 {
        self.categories.iter().map(|c| c.total).sum()
    }

    pub fn shares(&self) -> Vec<f64> {
        let t = self.total();
        self.categories.iter().map(|c| c.total / t).collect()
    }

    pub fn rates(&self) -> Vec<f64> {
        self.categories.iter().map(|c| c.malnourished / c.total).collect()
    }

    pub fn category(&self, label: &str) -> Option<&Category> {
        self.categories.iter().find(|c| c.label == label)
    }

    /// Encoded value of feature `encoded` for category `cat`, if this
    /// marginal produces that encoded feature.
    fn encoded_value(&self, cat: usize, encoded: &str) -> Option<f64> {
        if self.onehot {
            self.categories
                .iter()
                .any(|c| c.label == encoded)
                .then(|| f64::from(u8::from(self.categories[cat].label == encoded)))
        } else {
            (self.output == encoded).then(|| self.categories[cat].code)
        }
    }
}

/// Per-feature category shares and conditional malnutrition rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSpec {
    pub features: Vec<FeatureMarginal>,
    pub n_default: usize,
    /// Feature whose conditional rates drive labels in marginal mode.
    pub stratifier: String,
    /// Underweight, stunted and wasted prevalence in the full population.
    pub subtype_prevalence: [f64; 3],
    /// Share of blank cells injected in mode-imputed columns.
    pub missing_rate: f64,
    pub missing_columns: Vec<String>,
    /// Share of skip-logic blanks written as a don't-know response instead.
    pub dont_know_rate: f64,
}

impl MarginalSpec {
    pub fn feature(&self, name: &str) -> Option<&FeatureMarginal> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        for f in &self.features {
            let s: f64 = f.shares().iter().sum();
            if (s - 1.0).abs() > 1e-9 || f.categories.is_empty() {
                return Err(Error::InvalidConfig(format!("shares of `{}` sum to {s}", f.name)));
            }
            if f.rates().iter().any(|r| !(0.0..=1.0).contains(r)) {
                return Err(Error::InvalidConfig(format!("`{}` has a rate outside [0, 1]", f.name)));
            }
        }
        if self.feature(&self.stratifier).is_none() {
            return Err(Error::InvalidConfig(format!("unknown stratifier `{}`", self.stratifier)));
        }
        Ok(())
    }

    /// Prevalence implied by the stratifier's shares and rates.
    pub fn implied_prevalence(&self) -> f64 {
        let f = self.feature(&self.stratifier).expect("validated stratifier");
        f.shares().iter().zip(f.rates()).map(|(s, r)| s * r).sum()
    }
}

fn cat(raw: Option<&str>, label: &str, total: f64, malnourished: f64, code: f64) -> Category {
    Category { raw: raw.map(str::to_string), label: label.to_string(), total, malnourished, code }
}

fn yes_no_notasked(name: &str, yes: &str, no: &str, rows: [(f64, f64); 3]) -> FeatureMarginal {
    FeatureMarginal {
        name: name.into(),
        output: name.into(),
        onehot: false,
        categories: vec![
            cat(Some(no), "no", rows[0].0, rows[0].1, 0.0),
            cat(Some(yes), "yes", rows[1].0, rows[1].1, 1.0),
            cat(None, "not asked", rows[2].0, rows[2].1, -1.0),
        ],
    }
}

fn yes_no(name: &str, rows: [(f64, f64); 2]) -> FeatureMarginal {
    FeatureMarginal {
        name: name.into(),
        output: name.into(),
        onehot: false,
        categories: vec![
            cat(Some("no"), "no", rows[0].0, rows[0].1, 0.0),
            cat(Some("yes"), "yes", rows[1].0, rows[1].1, 1.0),
        ],
    }
}

fn counts(name: &str, rows: &[(f64, f64)], not_asked: Option<(f64, f64)>) -> FeatureMarginal {
    let mut categories: Vec<Category> = rows
        .iter()
        .enumerate()
        .map(|(i, &(t, m))| cat(Some(&i.to_string()), &i.to_string(), t, m, i as f64))
        .collect();
    if let Some((t, m)) = not_asked {
        categories.push(cat(None, "not asked", t, m, -1.0));
    }
    FeatureMarginal { name: name.into(), output: name.into(), onehot: false, categories }
}

/// Survey marginals (6,416 children; 2,745 malnourished).
///
/// Only four provinces are tabulated; the other 3,193 children (1,311
/// malnourished) are split evenly across madhesh, bagmati and lumbini at
/// their pooled rate.
pub fn builtin_marginals() -> MarginalSpec {
    let rest_total = 6416.0 - (947.0 + 711.0 + 743.0 + 822.0);
    let rest_mal = 2745.0 - (345.0 + 229.0 + 433.0 + 427.0);
    let rest_rate = rest_mal / rest_total;
    let rest = [1065.0, 1064.0, 1064.0];
    let province = FeatureMarginal {
        name: "province".into(),
        output: "province".into(),
        onehot: true,
        categories: vec![
            cat(Some("koshi"), "koshi", 947.0, 345.0, 0.0),
            cat(Some("madhesh"), "madhesh", rest[0], rest[0] * rest_rate, 1.0),
            cat(Some("bagmati"), "bagmati", rest[1], rest[1] * rest_rate, -1.0),
            cat(Some("gandaki"), "gandaki", 711.0, 229.0, 2.0),
            cat(Some("lumbini"), "lumbini", rest[2], rest[2] * rest_rate, 3.0),
            cat(Some("karnali"), "karnali", 743.0, 433.0, 4.0),
            cat(Some("sudoorpaschim"), "sudoorpaschim", 822.0, 427.0, 5.0),
        ],
    };
    let ordinal = |name: &str, levels: &[(&str, f64, f64, f64)]| FeatureMarginal {
        name: name.into(),
        output: name.into(),
        onehot: false,
        categories: levels.iter().map(|&(l, t, m, c)| cat(Some(l), l, t, m, c)).collect(),
    };
    let mut stool = yes_no_notasked("stool_disposal", "toilet", "open", [(926.0, 446.0), (2644.0, 1029.0), (2846.0, 1270.0)]);
    stool.output = "safe_stool_disposal".into();
    let features = vec![
        yes_no_notasked("away_privileges", "yes", "no", [(3292.0, 1438.0), (2071.0, 975.0), (1053.0, 332.0)]),
        counts(
            "left_alone",
            &[(5020.0, 2075.0), (155.0, 74.0), (253.0, 112.0), (136.0, 65.0), (116.0, 48.0), (111.0, 65.0), (57.0, 24.0), (526.0, 259.0)],
            Some((42.0, 23.0)),
        ),
        yes_no_notasked("vaccination_card", "card", "no card", [(1012.0, 488.0), (2557.0, 985.0), (2847.0, 1272.0)]),
        counts(
            "meal_frequency",
            &[(529.0, 170.0), (93.0, 40.0), (410.0, 154.0), (527.0, 235.0), (411.0, 171.0), (200.0, 89.0), (97.0, 31.0), (32.0, 9.0)],
            Some((4117.0, 1846.0)),
        ),
        yes_no("recent_diarrhoea", [(5761.0, 2426.0), (655.0, 319.0)]),
        yes_no("recent_cough", [(5028.0, 2165.0), (1388.0, 580.0)]),
        counts("child_age", &[(1044.0, 327.0), (1270.0, 577.0), (1259.0, 571.0), (1478.0, 687.0), (1365.0, 583.0)], None),
        ordinal(
            "mother_education",
            &[("none", 1571.0, 838.0, 0.0), ("primary", 2028.0, 927.0, 1.0), ("secondary", 2337.0, 845.0, 2.0), ("higher", 480.0, 135.0, 3.0)],
        ),
        ordinal(
            "wealth_index",
            &[
                ("poorest", 1832.0, 992.0, 1.0),
                ("poorer", 1317.0, 569.0, 2.0),
                ("middle", 1275.0, 526.0, 3.0),
                ("richer", 1170.0, 442.0, 4.0),
                ("richest", 822.0, 216.0, 5.0),
            ],
        ),
        yes_no("health_insurance", [(6126.0, 2661.0), (290.0, 84.0)]),
        ordinal("residence", &[("rural", 3561.0, 1393.0, 0.0), ("urban", 2855.0, 1352.0, 1.0)]),
        province,
        stool,
    ];
    MarginalSpec {
        features,
        n_default: 6416,
        stratifier: "wealth_index".into(),
        subtype_prevalence: [0.2337, 0.3237, 0.1189],
        missing_rate: 0.003,
        missing_columns: vec!["recent_diarrhoea".into(), "recent_cough".into(), "health_insurance".into()],
        dont_know_rate: 0.02,
    }
}

/// Logistic label model on encoded feature values; the intercept is
/// calibrated on the generated rows to hit `target_prevalence`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub coefficients: Vec<(String, f64)>,
    pub target_prevalence: f64,
}

impl SignalSpec {
    /// Five informative features; `strength` scales every coefficient.
    pub fn planted(strength: f64) -> SignalSpec {
        let base = [
            ("mother_education", -0.7),
            ("wealth_index", -0.5),
            ("child_age", 0.5),
            ("residence", 1.3),
            ("away_privileges", 0.7),
        ];
        SignalSpec {
            coefficients: base.iter().map(|&(n, c)| (n.to_string(), c * strength)).collect(),
            target_prevalence: 2745.0 / 6416.0,
        }
    }

    /// The strongly separable variant.
    pub fn strong() -> SignalSpec {
        Self::planted(6.0)
    }

    pub fn informative(&self) -> Vec<&str> {
        self.coefficients.iter().filter(|(_, c)| *c != 0.0).map(|(n, _)| n.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthMode {
    Marginal,
    Planted,
    Strong,
}

/// A generated table with the per-row probability the label was drawn from.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub table: RawTable,
    pub probabilities: Vec<f64>,
    pub labels: Vec<u8>,
}

pub fn generate(spec: &MarginalSpec, signal: Option<&SignalSpec>, n: usize, seed: u64) -> Result<RawTable> {
    Ok(generate_with_truth(spec, signal, n, seed)?.table)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn draw_category(r: &mut Rng, cdf: &[f64]) -> usize {
    let u: f64 = r.random();
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

/// Per-condition probabilities `q` such that, drawing the three conditions
/// independently and keeping only draws with at least one, each condition
/// occurs with probability `t_i` among the kept draws.
fn calibrate_subtypes(t: [f64; 3]) -> [f64; 3] {
    let mut a = 1.0f64;
    for _ in 0..10_000 {
        let next = 1.0 - t.iter().map(|ti| 1.0 - (ti * a).min(1.0)).product::<f64>();
        if (next - a).abs() < 1e-15 {
            break;
        }
        a = next;
    }
    [(t[0] * a).min(1.0), (t[1] * a).min(1.0), (t[2] * a).min(1.0)]
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn z_below(r: &mut Rng) -> f64 {
    let e: f64 = r.sample(StandardNormal);
    round2((-2.01 - 0.9 * e.abs()).max(-5.99))
}

fn z_normal(r: &mut Rng) -> f64 {
    let e: f64 = r.sample(StandardNormal);
    round2(-0.9 + e).clamp(-2.0, 2.5)
}

pub fn generate_with_truth(
    spec: &MarginalSpec,
    signal: Option<&SignalSpec>,
    n: usize,
    seed: u64,
) -> Result<Synthetic> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    let mut feat_rng = rng::sub_rng(seed, 0x5e7a);
    let cdfs: Vec<Vec<f64>> = spec
        .features
        .iter()
        .map(|f| {
            let mut acc = 0.0;
            let mut c: Vec<f64> = f.shares().iter().map(|s| { acc += s; acc }).collect();
            *c.last_mut().unwrap() = 1.0;
            c
        })
        .collect();
    let draws: Vec<Vec<usize>> =
        (0..n).map(|_| cdfs.iter().map(|c| draw_category(&mut feat_rng, c)).collect()).collect();

    let probabilities: Vec<f64> = match signal {
        None => {
            let j = spec.features.iter().position(|f| f.name == spec.stratifier).unwrap();
            let rates = spec.features[j].rates();
            draws.iter().map(|d| rates[d[j]]).collect()
        }
        Some(sig) => {
            let mut terms = Vec::with_capacity(sig.coefficients.len());
            for (name, coef) in &sig.coefficients {
                let src = spec
                    .features
                    .iter()
                    .enumerate()
                    .find(|(_, f)| f.encoded_value(0, name).is_some())
                    .map(|(j, _)| j)
                    .ok_or_else(|| Error::InvalidConfig(format!("signal feature `{name}` is not generated")))?;
                terms.push((src, name.as_str(), *coef));
            }
            let eta: Vec<f64> = draws
                .iter()
                .map(|d| terms.iter().map(|(j, name, c)| c * spec.features[*j].encoded_value(d[*j], name).unwrap()).sum())
                .collect();
            let mean_at = |b: f64| eta.iter().map(|e| sigmoid(b + e)).sum::<f64>() / n as f64;
            let (mut lo, mut hi) = (-100.0, 100.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mean_at(mid) < sig.target_prevalence {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let b = 0.5 * (lo + hi);
            let achieved = mean_at(b);
            if (achieved - sig.target_prevalence).abs() > 0.02 {
                return Err(Error::InvalidConfig(format!(
                    "signal cannot reach prevalence {} (best {achieved:.4})",
                    sig.target_prevalence
                )));
            }
            log::debug!("planted intercept {b:.4}, expected prevalence {achieved:.4}");
            eta.iter().map(|e| sigmoid(b + e)).collect()
        }
    };

    let mut label_rng = rng::sub_rng(seed, 0x1abe);
    let labels: Vec<u8> = probabilities.iter().map(|&p| u8::from(label_rng.random::<f64>() < p)).collect();

    let overall = 2745.0 / 6416.0;
    let targets = spec.subtype_prevalence.map(|p| (p / overall).min(1.0));
    let q = calibrate_subtypes(targets);
    let mut z_rng = rng::sub_rng(seed, 0x2a2a);
    let mut noise_rng = rng::sub_rng(seed, 0x0dd5);

    let mut headers = vec!["child_id".to_string(), "waz".into(), "haz".into(), "whz".into()];
    headers.extend(spec.features.iter().map(|f| f.name.clone()));
    let mut table = RawTable::new(headers);
    let missing_cols: Vec<bool> = spec.features.iter().map(|f| spec.missing_columns.contains(&f.name)).collect();
    for (i, d) in draws.iter().enumerate() {
        let conditions = if labels[i] == 1 {
            loop {
                let c = [z_rng.random::<f64>() < q[0], z_rng.random::<f64>() < q[1], z_rng.random::<f64>() < q[2]];
                if c.iter().any(|&x| x) {
                    break c;
                }
            }
        } else {
            [false; 3]
        };
        let mut row = Vec::with_capacity(table.headers.len());
        row.push(Some((i + 1).to_string()));
        for c in conditions {
            let z = if c { z_below(&mut z_rng) } else { z_normal(&mut z_rng) };
            row.push(Some(format!("{z:.2}")));
        }
        for (j, f) in spec.features.iter().enumerate() {
            let mut cell = f.categories[d[j]].raw.clone();
            if cell.is_none() && noise_rng.random::<f64>() < spec.dont_know_rate {
                cell = Some("don't know".into());
            }
            if missing_cols[j] && noise_rng.random::<f64>() < spec.missing_rate {
                cell = None;
            }
            row.push(cell);
        }
        table.push_row(row)?;
    }
    Ok(Synthetic { table, probabilities, labels })
}

/// Convenience: the mode's signal spec (`None` for marginal mode).
pub fn signal_for(mode: SynthMode) -> Option<SignalSpec> {
    match mode {
        SynthMode::Marginal => None,
        SynthMode::Planted => Some(SignalSpec::planted(1.0)),
        SynthMode::Strong => Some(SignalSpec::strong()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{derive_labels, encode, Schema};

    #[test]
    fn builtin_rates() {
        let m = builtin_marginals();
        m.validate().unwrap();
        let w = m.feature("wealth_index").unwrap();
        assert!((w.category("poorest").unwrap().malnourished / 1832.0 - 0.541).abs() < 5e-4);
        let e = m.feature("mother_education").unwrap();
        let r = e.category("higher").unwrap();
        assert!((r.malnourished / r.total - 0.281).abs() < 5e-4);
        let none = e.category("none").unwrap();
        assert!((none.malnourished / none.total - 0.533).abs() < 5e-4);
        let k = m.feature("province").unwrap().category("karnali").unwrap();
        assert!((k.malnourished / k.total - 0.583).abs() < 5e-4);
        assert!((m.implied_prevalence() - 2745.0 / 6416.0).abs() < 1e-12);
        for f in &m.features {
            assert!((f.total() - 6416.0).abs() < 1e-9, "{}", f.name);
            let mal: f64 = f.categories.iter().map(|c| c.malnourished).sum();
            assert!((mal - 2745.0).abs() < 1e-9, "{}", f.name);
        }
    }

    #[test]
    fn subtype_calibration_fixed_point() {
        let t = [0.5462, 0.7565, 0.2779];
        let q = calibrate_subtypes(t);
        let any = 1.0 - q.iter().map(|x| 1.0 - x).product::<f64>();
        for i in 0..3 {
            assert!((q[i] / any - t[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn marginal_prevalence_in_binomial_ci() {
        let s = generate_with_truth(&builtin_marginals(), None, 6416, 7).unwrap();
        let pos = s.labels.iter().map(|&y| y as f64).sum::<f64>();
        let p: f64 = 2745.0 / 6416.0;
        let sd = (6416.0 * p * (1.0 - p)).sqrt();
        assert!((pos - 6416.0 * p).abs() < 2.5758 * sd, "positives {pos}");

        let schema = Schema::bundled();
        let ds = encode(&s.table, &schema).unwrap();
        assert_eq!(ds.labels(), s.labels.as_slice());
        let lab = derive_labels(&s.table, &schema).unwrap();
        let n = 6416.0f64;
        for (k, &target) in [0.2337f64, 0.3237, 0.1189].iter().enumerate() {
            let c = lab.iter().filter(|l| [l.underweight, l.stunted, l.wasted][k]).count() as f64;
            let sd = (n * target * (1.0 - target)).sqrt();
            // Sub-type counts inherit the label's binomial noise too.
            assert!((c - n * target).abs() < 2.5758 * sd * 1.5, "subtype {k}: {c}");
        }
    }

    #[test]
    fn single_row_is_schema_conformant() {
        for seed in 0..20 {
            let t = generate(&builtin_marginals(), None, 1, seed).unwrap();
            let ds = encode(&t, &Schema::bundled()).unwrap();
            assert_eq!(ds.n_rows(), 1);
            assert_eq!(ds.n_cols(), 16);
        }
    }

    #[test]
    fn category_shares_converge() {
        let m = builtin_marginals();
        let n = 8000;
        let t = generate(&m, None, n, 11).unwrap();
        for f in &m.features {
            if m.missing_columns.contains(&f.name) {
                continue;
            }
            let col = t.column(&f.name).unwrap();
            for (c, share) in f.categories.iter().zip(f.shares()) {
                let hits = col
                    .iter()
                    .filter(|v| match (&c.raw, v) {
                        (None, None) => true,
                        (None, Some(s)) => s == "don't know",
                        (Some(r), Some(s)) => r == s,
                        _ => false,
                    })
                    .count() as f64;
                let dev = (hits / n as f64 - share).abs();
                assert!(dev < 3.0 * (share * (1.0 - share) / n as f64).sqrt(), "{} {}", f.name, c.label);
            }
        }
    }

    #[test]
    fn planted_odds_ratio() {
        let sig = SignalSpec { coefficients: vec![("residence".into(), 5.0)], target_prevalence: 0.4279 };
        let t = generate_with_truth(&builtin_marginals(), Some(&sig), 10_000, 3).unwrap();
        let ds = encode(&t.table, &Schema::bundled()).unwrap();
        let j = ds.feature_index("residence").unwrap();
        let mut tab = [[0.0f64; 2]; 2];
        for i in 0..ds.n_rows() {
            tab[ds.get(i, j) as usize][ds.labels()[i] as usize] += 1.0;
        }
        let or = (tab[1][1] * tab[0][0]) / (tab[1][0] * tab[0][1]);
        assert!(or > 20.0, "odds ratio {or}");
        let prev = t.labels.iter().map(|&y| y as f64).sum::<f64>() / 10_000.0;
        assert!((prev - 0.4279).abs() < 0.02);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&builtin_marginals(), Some(&SignalSpec::planted(1.0)), 300, 5).unwrap();
        let b = generate(&builtin_marginals(), Some(&SignalSpec::planted(1.0)), 300, 5).unwrap();
        assert_eq!(a, b);
        let c = generate(&builtin_marginals(), Some(&SignalSpec::planted(1.0)), 300, 6).unwrap();
        assert_ne!(a, c);
    }
}
