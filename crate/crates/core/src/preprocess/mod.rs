//! Raw survey rows to encoded [`Dataset`]: composite label derivation,
//! missing-value policies and the per-column encoding rules.

mod raw;
mod standardize;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset, MissingPolicy};
use crate::error::{Error, Result};

pub use raw::{RawTable, RawValue};
pub use standardize::{standardize, Standardizer};

/// Token produced by `not_asked_recode` and encoded as -1.
pub const NOT_ASKED: &str = "not asked";

/// Responses folded into [`NOT_ASKED`] (matched case-insensitively).
const NOT_ASKED_TOKENS: &[&str] = &[
    "not asked",
    "don't know",
    "dont know",
    "do not know",
    "dk",
    "no response",
    "missing/dk",
    "missing",
    "skip",
];

const WARN_ABS_Z: f64 = 6.0;
const REJECT_ABS_Z: f64 = 10.0;
const MALNUTRITION_CUTOFF: f64 = -2.0;

/// Weight-for-age, height-for-age and weight-for-height z-scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnthroRecord {
    pub waz: f64,
    pub haz: f64,
    pub whz: f64,
}

impl AnthroRecord {
    pub fn new(waz: f64, haz: f64, whz: f64) -> Self {
        Self { waz, haz, whz }
    }

    /// Rejects values outside [-10, 10]; returns `true` when any index is
    /// outside the WHO flagging window [-6, 6].
    pub fn validate(&self) -> Result<bool> {
        let mut flagged = false;
        for (index, value) in [("WAZ", self.waz), ("HAZ", self.haz), ("WHZ", self.whz)] {
            if !value.is_finite() || value.abs() > REJECT_ABS_Z {
                return Err(Error::ImplausibleZScore { index, value });
            }
            flagged |= value.abs() > WARN_ABS_Z;
        }
        Ok(flagged)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MalnutritionLabel {
    pub underweight: bool,
    pub stunted: bool,
    pub wasted: bool,
    pub malnourished: bool,
}

/// Composite label: malnourished when any z-score is strictly below -2.
pub fn derive_label(rec: &AnthroRecord) -> Result<MalnutritionLabel> {
    rec.validate()?;
    let underweight = rec.waz < MALNUTRITION_CUTOFF;
    let stunted = rec.haz < MALNUTRITION_CUTOFF;
    let wasted = rec.whz < MALNUTRITION_CUTOFF;
    Ok(MalnutritionLabel { underweight, stunted, wasted, malnourished: underweight || stunted || wasted })
}

/// How one raw column becomes numeric output column(s). Category lists
/// are matched case-insensitively; the first entry is the canonical label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingRule {
    /// Ordered levels with explicit codes, plus an optional not-asked code.
    OrdinalPassthrough {
        levels: Vec<(String, f64)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        not_asked: Option<f64>,
    },
    /// 1 / 0 / -1 for yes / no / not asked.
    TernaryYesNoNotasked { yes: Vec<String>, no: Vec<String> },
    Binary01 { one: Vec<String>, zero: Vec<String> },
    /// `categories.len()` indicator columns; the reference is all zeros.
    Onehot { categories: Vec<String>, reference: String },
    /// Many raw categories collapsed to 1 = safe, 0 = unsafe (-1 not asked).
    CollapseSafeUnsafe {
        safe: Vec<String>,
        #[serde(rename = "unsafe")]
        unsafe_: Vec<String>,
    },
    /// 1 = any documentation, 0 = none (-1 not asked).
    AnyDocumentation { documented: Vec<String>, undocumented: Vec<String> },
    /// Binary with mode imputation regardless of the column policy.
    ModeImputeThenBinary { one: Vec<String>, zero: Vec<String> },
    /// Numeric passthrough (anthropometric z-scores).
    Zscore,
    /// Row identifier; never emitted as a feature.
    Identifier,
}

fn matches_any(list: &[String], value: &str) -> bool {
    list.iter().any(|c| c.eq_ignore_ascii_case(value))
}

fn is_not_asked_token(value: &str) -> bool {
    NOT_ASKED_TOKENS.iter().any(|t| t.eq_ignore_ascii_case(value))
}

impl EncodingRule {
    pub fn supports_not_asked(&self) -> bool {
        match self {
            EncodingRule::OrdinalPassthrough { not_asked, .. } => not_asked.is_some(),
            EncodingRule::TernaryYesNoNotasked { .. }
            | EncodingRule::CollapseSafeUnsafe { .. }
            | EncodingRule::AnyDocumentation { .. } => true,
            _ => false,
        }
    }

    pub fn is_collapse(&self) -> bool {
        matches!(self, EncodingRule::CollapseSafeUnsafe { .. } | EncodingRule::AnyDocumentation { .. })
    }

    pub fn width(&self) -> usize {
        match self {
            EncodingRule::Onehot { categories, .. } => categories.len(),
            EncodingRule::Identifier => 0,
            _ => 1,
        }
    }

    /// Encoded position used to order categories (mode tie-breaks).
    fn order_key(&self, column: &str, value: &str) -> Result<f64> {
        match self {
            EncodingRule::Onehot { categories, reference } => {
                if reference.eq_ignore_ascii_case(value) {
                    Ok(-1.0)
                } else {
                    categories
                        .iter()
                        .position(|c| c.eq_ignore_ascii_case(value))
                        .map(|p| p as f64)
                        .ok_or_else(|| unknown(column, value))
                }
            }
            EncodingRule::Identifier => Ok(0.0),
            _ => Ok(self.encode_value(column, value)?[0]),
        }
    }

    /// Encodes one non-missing raw value.
    pub fn encode_value(&self, column: &str, value: &str) -> Result<Vec<f64>> {
        let not_asked = value.eq_ignore_ascii_case(NOT_ASKED);
        let v = match self {
            EncodingRule::OrdinalPassthrough { levels, not_asked: sentinel } => {
                if let Some((_, code)) = levels.iter().find(|(l, _)| l.eq_ignore_ascii_case(value)) {
                    *code
                } else if let Some((_, code)) =
                    value.parse::<f64>().ok().and_then(|x| levels.iter().find(|(_, c)| *c == x))
                {
                    *code
                } else if let (true, Some(s)) = (not_asked, sentinel) {
                    *s
                } else {
                    return Err(unknown(column, value));
                }
            }
            EncodingRule::TernaryYesNoNotasked { yes, no } => {
                if matches_any(yes, value) {
                    1.0
                } else if matches_any(no, value) {
                    0.0
                } else if not_asked {
                    -1.0
                } else {
                    return Err(unknown(column, value));
                }
            }
            EncodingRule::Binary01 { one, zero } | EncodingRule::ModeImputeThenBinary { one, zero } => {
                if matches_any(one, value) {
                    1.0
                } else if matches_any(zero, value) {
                    0.0
                } else {
                    return Err(unknown(column, value));
                }
            }
            EncodingRule::CollapseSafeUnsafe { safe: pos, unsafe_: neg }
            | EncodingRule::AnyDocumentation { documented: pos, undocumented: neg } => {
                if matches_any(pos, value) {
                    1.0
                } else if matches_any(neg, value) {
                    0.0
                } else if not_asked {
                    -1.0
                } else {
                    return Err(unknown(column, value));
                }
            }
            EncodingRule::Onehot { categories, reference } => {
                let mut out = vec![0.0; categories.len()];
                if !reference.eq_ignore_ascii_case(value) {
                    let p = categories
                        .iter()
                        .position(|c| c.eq_ignore_ascii_case(value))
                        .ok_or_else(|| unknown(column, value))?;
                    out[p] = 1.0;
                }
                return Ok(out);
            }
            EncodingRule::Zscore => value.parse::<f64>().map_err(|_| unknown(column, value))?,
            EncodingRule::Identifier => return Ok(Vec::new()),
        };
        Ok(vec![v])
    }

    /// Inverse of [`EncodingRule::encode_value`]; collapse rules return the
    /// first label of the matching set (lossy).
    pub fn decode_value(&self, encoded: &[f64]) -> Option<String> {
        let first = |list: &[String]| list.first().cloned();
        match self {
            EncodingRule::OrdinalPassthrough { levels, not_asked } => {
                let x = *encoded.first()?;
                if let Some((l, _)) = levels.iter().find(|(_, c)| *c == x) {
                    Some(l.clone())
                } else if *not_asked == Some(x) {
                    Some(NOT_ASKED.to_string())
                } else {
                    None
                }
            }
            EncodingRule::TernaryYesNoNotasked { yes: pos, no: neg }
            | EncodingRule::CollapseSafeUnsafe { safe: pos, unsafe_: neg }
            | EncodingRule::AnyDocumentation { documented: pos, undocumented: neg } => match *encoded.first()? {
                1.0 => first(pos),
                0.0 => first(neg),
                -1.0 => Some(NOT_ASKED.to_string()),
                _ => None,
            },
            EncodingRule::Binary01 { one, zero } | EncodingRule::ModeImputeThenBinary { one, zero } => {
                match *encoded.first()? {
                    1.0 => first(one),
                    0.0 => first(zero),
                    _ => None,
                }
            }
            EncodingRule::Onehot { categories, reference } => {
                let hot: Vec<usize> = encoded.iter().enumerate().filter(|(_, &v)| v == 1.0).map(|(i, _)| i).collect();
                match hot.as_slice() {
                    [] if encoded.iter().all(|&v| v == 0.0) => Some(reference.clone()),
                    [i] => categories.get(*i).cloned(),
                    _ => None,
                }
            }
            EncodingRule::Zscore => encoded.first().map(|x| x.to_string()),
            EncodingRule::Identifier => None,
        }
    }

    fn output_kinds(&self, name: &str) -> Vec<ColumnKind> {
        match self {
            EncodingRule::OrdinalPassthrough { levels, .. } => vec![ColumnKind::Ordinal { levels: levels.len() }],
            EncodingRule::TernaryYesNoNotasked { .. }
            | EncodingRule::CollapseSafeUnsafe { .. }
            | EncodingRule::AnyDocumentation { .. } => vec![ColumnKind::Ternary],
            EncodingRule::Binary01 { .. } | EncodingRule::ModeImputeThenBinary { .. } => vec![ColumnKind::Binary],
            EncodingRule::Onehot { categories, .. } => (0..categories.len())
                .map(|category_index| ColumnKind::OnehotGroup { group: name.to_string(), category_index })
                .collect(),
            EncodingRule::Zscore => vec![ColumnKind::Zscore],
            EncodingRule::Identifier => Vec::new(),
        }
    }
}

fn unknown(column: &str, value: &str) -> Error {
    Error::UnknownCategory { column: column.to_string(), value: value.to_string() }
}

/// Applies a missing-value policy to a raw column.
///
/// `mode_impute` fills missing cells (and don't-know style responses) with
/// the most frequent value, ties going to the smallest encoded value.
/// `not_asked_recode` maps missing cells and don't-know style responses to
/// [`NOT_ASKED`]. `reject` fails on the first missing cell.
pub fn recode_missing(
    column: &str,
    values: &[RawValue],
    policy: MissingPolicy,
    rule: &EncodingRule,
) -> Result<Vec<RawValue>> {
    let policy = if matches!(rule, EncodingRule::ModeImputeThenBinary { .. }) { MissingPolicy::ModeImpute } else { policy };
    match policy {
        MissingPolicy::Reject => {
            if let Some(row) = values.iter().position(Option::is_none) {
                return Err(Error::MissingValueRejected { column: column.to_string(), row });
            }
            Ok(values.to_vec())
        }
        MissingPolicy::NotAskedRecode => {
            if !rule.supports_not_asked() {
                return Err(Error::SchemaMismatch(format!(
                    "column `{column}`: not_asked_recode needs a rule with a not-asked code"
                )));
            }
            Ok(values
                .iter()
                .map(|v| match v {
                    None => Some(NOT_ASKED.to_string()),
                    Some(s) if is_not_asked_token(s) => Some(NOT_ASKED.to_string()),
                    Some(s) => Some(s.clone()),
                })
                .collect())
        }
        MissingPolicy::ModeImpute => {
            let is_missing = |v: &RawValue| v.as_deref().is_none_or(is_not_asked_token);
            // canonical lowercase value -> (count, order key, first spelling)
            let mut counts: BTreeMap<String, (usize, f64, String)> = BTreeMap::new();
            for v in values.iter().filter(|v| !is_missing(v)) {
                let s = v.as_deref().unwrap();
                let key = s.to_ascii_lowercase();
                if let Some(e) = counts.get_mut(&key) {
                    e.0 += 1;
                } else {
                    let order = rule.order_key(column, s)?;
                    counts.insert(key, (1, order, s.to_string()));
                }
            }
            let mode = counts
                .values()
                .max_by(|a, b| a.0.cmp(&b.0).then(b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal)))
                .map(|e| e.2.clone())
                .ok_or_else(|| Error::AllMissingColumn(column.to_string()))?;
            Ok(values.iter().map(|v| if is_missing(v) { Some(mode.clone()) } else { v.clone() }).collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    /// Encoding rule carrying the column's category map.
    pub kind: EncodingRule,
    pub missing_policy: MissingPolicy,
    /// Encoded feature name when it differs from the raw column name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl ColumnSpec {
    fn output_names(&self) -> Vec<String> {
        match &self.kind {
            EncodingRule::Onehot { categories, .. } => categories.iter().map(|c| c.to_ascii_lowercase()).collect(),
            EncodingRule::Identifier => Vec::new(),
            _ => vec![self.output.clone().unwrap_or_else(|| self.name.clone())],
        }
    }
}

/// Raw column names of the three anthropometric indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anthropometry {
    pub waz: String,
    pub haz: String,
    pub whz: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
    /// Label name: either a binary column of the schema or the name of the
    /// composite label derived from `anthropometry`.
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anthropometry: Option<Anthropometry>,
    /// Encoded features to keep, in encoded order; `None` keeps all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<String>>,
}

const DEFAULT_SCHEMA: &str = include_str!("../../assets/default_schema.json");

impl Schema {
    /// The bundled schema for the 16 selected survey features.
    pub fn bundled() -> Schema {
        serde_json::from_str(DEFAULT_SCHEMA).expect("bundled schema parses")
    }

    pub fn from_json_file(path: &Path) -> Result<Schema> {
        let schema: Schema = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::SchemaMismatch(format!("duplicate column `{}`", c.name)));
            }
            if let EncodingRule::OrdinalPassthrough { levels, .. } = &c.kind {
                if levels.len() < 2 {
                    return Err(Error::SchemaMismatch(format!("ordinal `{}` needs at least 2 levels", c.name)));
                }
            }
            if let EncodingRule::Onehot { categories, reference } = &c.kind {
                let mut cats = std::collections::HashSet::new();
                for cat in categories.iter().chain(std::iter::once(reference)) {
                    if !cats.insert(cat.to_ascii_lowercase()) {
                        return Err(Error::SchemaMismatch(format!("`{}` repeats category `{cat}`", c.name)));
                    }
                }
            }
        }
        match self.column(&self.target) {
            Some(c) if matches!(c.kind, EncodingRule::Binary01 { .. } | EncodingRule::ModeImputeThenBinary { .. }) => {}
            Some(_) => return Err(Error::SchemaMismatch(format!("target `{}` is not binary", self.target))),
            None => {
                let a = self.anthropometry.as_ref().ok_or_else(|| {
                    Error::SchemaMismatch(format!("target `{}` is neither a column nor derivable", self.target))
                })?;
                for name in [&a.waz, &a.haz, &a.whz] {
                    match self.column(name) {
                        Some(c) if c.kind == EncodingRule::Zscore => {}
                        _ => return Err(Error::SchemaMismatch(format!("`{name}` must be a zscore column"))),
                    }
                }
            }
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    fn is_label_source(&self, name: &str) -> bool {
        name == self.target || self.anthropometry.as_ref().is_some_and(|a| [&a.waz, &a.haz, &a.whz].contains(&&name.to_string()))
    }

    /// Encoded feature names before the keep filter.
    pub fn encoded_names(&self) -> Vec<String> {
        self.columns.iter().filter(|c| !self.is_label_source(&c.name)).flat_map(|c| c.output_names()).collect()
    }

    /// Copy without the keep filter.
    pub fn unfiltered(&self) -> Schema {
        Schema { features: None, ..self.clone() }
    }
}

/// Derives the composite labels for every row of a raw table.
pub fn derive_labels(raw: &RawTable, schema: &Schema) -> Result<Vec<MalnutritionLabel>> {
    let a = schema
        .anthropometry
        .as_ref()
        .ok_or_else(|| Error::SchemaMismatch("schema has no anthropometry columns".into()))?;
    let cols = [raw.column(&a.waz)?, raw.column(&a.haz)?, raw.column(&a.whz)?];
    let mut flagged = 0usize;
    let mut out = Vec::with_capacity(raw.n_rows());
    for i in 0..raw.n_rows() {
        let mut z = [0.0; 3];
        for (k, name) in [&a.waz, &a.haz, &a.whz].iter().enumerate() {
            let cell = cols[k][i].as_deref().ok_or_else(|| Error::MissingValueRejected { column: (*name).clone(), row: i })?;
            z[k] = cell.parse().map_err(|_| unknown(name, cell))?;
        }
        let rec = AnthroRecord::new(z[0], z[1], z[2]);
        flagged += usize::from(rec.validate()?);
        out.push(derive_label(&rec)?);
    }
    if flagged > 0 {
        log::warn!("{flagged} rows have a z-score outside [-6, 6]");
    }
    Ok(out)
}

/// Encodes a raw table into a dataset following `schema`.
///
/// Output columns follow schema order with one-hot groups expanded in
/// category order; anthropometric and identifier columns are not emitted.
pub fn encode(raw: &RawTable, schema: &Schema) -> Result<Dataset> {
    schema.validate()?;
    let n = raw.n_rows();
    let mut blocks: Vec<(Vec<String>, Vec<ColumnKind>, Vec<f64>)> = Vec::new();
    for spec in schema.columns.iter().filter(|c| !schema.is_label_source(&c.name)) {
        if spec.kind == EncodingRule::Identifier {
            continue;
        }
        let values = raw.column(&spec.name)?;
        let values = recode_missing(&spec.name, &values, spec.missing_policy, &spec.kind)?;
        let width = spec.kind.width();
        let mut block = Vec::with_capacity(n * width);
        for v in &values {
            // Reject was enforced above; remaining `None`s only occur for zscore passthrough.
            let s = v.as_deref().ok_or_else(|| Error::SchemaMismatch(format!("missing value in `{}`", spec.name)))?;
            block.extend(spec.kind.encode_value(&spec.name, s)?);
        }
        blocks.push((spec.output_names(), spec.kind.output_kinds(&spec.name), block));
    }

    let labels: Vec<u8> = match schema.column(&schema.target) {
        Some(spec) => {
            let values = raw.column(&spec.name)?;
            let values = recode_missing(&spec.name, &values, spec.missing_policy, &spec.kind)?;
            values
                .iter()
                .map(|v| Ok(spec.kind.encode_value(&spec.name, v.as_deref().unwrap_or(""))?[0] as u8))
                .collect::<Result<_>>()?
        }
        None => derive_labels(raw, schema)?.iter().map(|l| u8::from(l.malnourished)).collect(),
    };

    let mut names = Vec::new();
    let mut kinds = Vec::new();
    for (bn, bk, _) in &blocks {
        names.extend(bn.iter().cloned());
        kinds.extend(bk.iter().cloned());
    }
    let n_cols = names.len();
    let mut features = vec![0.0; n * n_cols];
    let mut offset = 0;
    for (bn, _, block) in &blocks {
        let w = bn.len();
        for i in 0..n {
            features[i * n_cols + offset..i * n_cols + offset + w].copy_from_slice(&block[i * w..(i + 1) * w]);
        }
        offset += w;
    }
    let ds = Dataset::new(features, labels, names.clone(), kinds, schema.target.clone())?;
    match &schema.features {
        None => Ok(ds),
        Some(keep) => {
            let idx = keep
                .iter()
                .map(|k| {
                    names
                        .iter()
                        .position(|n| n == k)
                        .ok_or_else(|| Error::SchemaMismatch(format!("selected feature `{k}` is not produced by the schema")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ds.select_cols(&idx))
        }
    }
}

/// Recovers raw categories from an unfiltered encoding (collapse rules are
/// lossy and decode to the first label of the matching set).
pub fn decode(ds: &Dataset, schema: &Schema) -> Result<RawTable> {
    let mut headers = Vec::new();
    let mut per_col: Vec<(usize, usize, &EncodingRule)> = Vec::new();
    for spec in schema.columns.iter().filter(|c| !schema.is_label_source(&c.name)) {
        if spec.kind == EncodingRule::Identifier {
            continue;
        }
        let names = spec.output_names();
        let absent = |n: &str| Error::SchemaMismatch(format!("feature `{n}` absent; decode needs the full encoding"));
        let start = ds.feature_index(&names[0]).ok_or_else(|| absent(&names[0]))?;
        if let Some(k) = (1..names.len()).find(|&k| ds.feature_names().get(start + k) != Some(&names[k])) {
            return Err(absent(&names[k]));
        }
        headers.push(spec.name.clone());
        per_col.push((start, names.len(), &spec.kind));
    }
    let mut table = RawTable::new(headers);
    for i in 0..ds.n_rows() {
        let row = ds.row(i);
        table.rows.push(per_col.iter().map(|(s, w, rule)| rule.decode_value(&row[*s..s + w])).collect());
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(v: &str) -> RawValue {
        Some(v.to_string())
    }

    #[test]
    fn label_examples() {
        let l = derive_label(&AnthroRecord::new(-2.5, -1.0, -1.0)).unwrap();
        assert!(l.underweight && l.malnourished && !l.stunted && !l.wasted);
        assert_eq!(derive_label(&AnthroRecord::new(0.0, 0.0, 0.0)).unwrap(), MalnutritionLabel::default());
        assert_eq!(derive_label(&AnthroRecord::new(-2.0, -2.0, -2.0)).unwrap(), MalnutritionLabel::default());
        assert!(matches!(
            derive_label(&AnthroRecord::new(0.0, -10.5, 0.0)),
            Err(Error::ImplausibleZScore { index: "HAZ", .. })
        ));
        assert!(AnthroRecord::new(6.5, 0.0, 0.0).validate().unwrap());
    }

    fn binary_rule() -> EncodingRule {
        EncodingRule::Binary01 { one: vec!["1".into()], zero: vec!["0".into()] }
    }

    #[test]
    fn mode_imputation() {
        let out = recode_missing("x", &[s("1"), s("1"), s("0"), None], MissingPolicy::ModeImpute, &binary_rule()).unwrap();
        assert_eq!(out, vec![s("1"), s("1"), s("0"), s("1")]);
        let tie = recode_missing("x", &[s("1"), s("0"), None], MissingPolicy::ModeImpute, &binary_rule()).unwrap();
        assert_eq!(tie[2], s("0"));
        assert!(matches!(
            recode_missing("x", &[None, None], MissingPolicy::ModeImpute, &binary_rule()),
            Err(Error::AllMissingColumn(_))
        ));
    }

    /// Exhaustive check of the tie rule over every multiset of three levels
    /// with up to three copies each plus one missing cell.
    #[test]
    fn mode_tie_rule_exhaustive() {
        let rule = EncodingRule::OrdinalPassthrough {
            levels: vec![("a".into(), 2.0), ("b".into(), 0.0), ("c".into(), 1.0)],
            not_asked: None,
        };
        for ca in 0..4 {
            for cb in 0..4 {
                for cc in 0..4 {
                    if ca + cb + cc == 0 {
                        continue;
                    }
                    let mut col: Vec<RawValue> = Vec::new();
                    col.extend(std::iter::repeat_n(s("a"), ca));
                    col.extend(std::iter::repeat_n(s("b"), cb));
                    col.extend(std::iter::repeat_n(s("c"), cc));
                    col.push(None);
                    let out = recode_missing("x", &col, MissingPolicy::ModeImpute, &rule).unwrap();
                    let max = ca.max(cb).max(cc);
                    // smallest code among the most frequent: b(0) < c(1) < a(2)
                    let expected = if cb == max { "b" } else if cc == max { "c" } else { "a" };
                    assert_eq!(out.last().unwrap().as_deref(), Some(expected), "counts {ca},{cb},{cc}");
                }
            }
        }
    }

    #[test]
    fn not_asked_recode() {
        let rule = EncodingRule::TernaryYesNoNotasked { yes: vec!["yes".into()], no: vec!["no".into()] };
        let out =
            recode_missing("x", &[s("yes"), s("no"), s("don't know"), None], MissingPolicy::NotAskedRecode, &rule).unwrap();
        assert_eq!(out, vec![s("yes"), s("no"), s(NOT_ASKED), s(NOT_ASKED)]);
        assert_eq!(rule.encode_value("x", NOT_ASKED).unwrap(), vec![-1.0]);
        assert!(recode_missing("x", &[None], MissingPolicy::NotAskedRecode, &binary_rule()).is_err());
        assert!(matches!(
            recode_missing("x", &[None], MissingPolicy::Reject, &binary_rule()),
            Err(Error::MissingValueRejected { .. })
        ));
    }

    fn bundled_row(province: &str, discipline: &str) -> RawTable {
        let schema = Schema::bundled();
        let headers: Vec<String> = schema.columns.iter().map(|c| c.name.clone()).collect();
        let mut t = RawTable::new(headers.clone());
        let row = headers
            .iter()
            .map(|h| match h.as_str() {
                "child_id" => s("1"),
                "waz" | "haz" | "whz" => s("0.1"),
                "mother_education" => s("primary"),
                "wealth_index" => s("middle"),
                "vaccination_card" => s("card"),
                "health_insurance" => s("no"),
                "residence" => s("urban"),
                "left_alone" => s("0"),
                "away_privileges" => s(discipline),
                "child_age" => s("2"),
                "recent_diarrhoea" => s("no"),
                "province" => s(province),
                "meal_frequency" => None,
                "stool_disposal" => s("buried"),
                "recent_cough" => s("yes"),
                other => panic!("unexpected column {other}"),
            })
            .collect();
        t.push_row(row).unwrap();
        t
    }

    #[test]
    fn province_onehot_with_bagmati_reference() {
        let schema = Schema::bundled().unfiltered();
        let ds = encode(&bundled_row("gandaki", "yes"), &schema).unwrap();
        let provinces = ["koshi", "madhesh", "gandaki", "lumbini", "karnali", "sudoorpaschim"];
        for p in provinces {
            let j = ds.feature_index(p).unwrap();
            assert_eq!(ds.get(0, j), f64::from(u8::from(p == "gandaki")), "{p}");
        }
        let ds = encode(&bundled_row("Bagmati", "yes"), &schema).unwrap();
        for p in provinces {
            assert_eq!(ds.get(0, ds.feature_index(p).unwrap()), 0.0);
        }
    }

    #[test]
    fn ternary_not_asked_and_sentinels() {
        let ds = encode(&bundled_row("koshi", "not asked"), &Schema::bundled()).unwrap();
        assert_eq!(ds.get(0, ds.feature_index("away_privileges").unwrap()), -1.0);
        assert_eq!(ds.get(0, ds.feature_index("meal_frequency").unwrap()), -1.0);
        assert_eq!(ds.get(0, ds.feature_index("safe_stool_disposal").unwrap()), 1.0);
        assert_eq!(ds.get(0, ds.feature_index("vaccination_card").unwrap()), 1.0);
        assert_eq!(ds.get(0, ds.feature_index("wealth_index").unwrap()), 3.0);
        assert_eq!(ds.n_cols(), 16);
        assert_eq!(ds.labels(), &[0]);
    }

    #[test]
    fn unknown_category_and_schema_mismatch() {
        let err = encode(&bundled_row("atlantis", "yes"), &Schema::bundled()).unwrap_err();
        assert!(matches!(err, Error::UnknownCategory { .. }));
        let mut t = bundled_row("koshi", "yes");
        t.headers[3] = "renamed".into();
        assert!(matches!(encode(&t, &Schema::bundled()), Err(Error::SchemaMismatch(_))));
    }

    fn rule_strategy() -> impl Strategy<Value = (usize, usize)> {
        (0usize..5, 0usize..8)
    }

    proptest! {
        #[test]
        fn decode_inverts_encode_for_non_collapsed((wealth, province) in rule_strategy(), edu in 0usize..4, meal in 0usize..9) {
            let schema = Schema::bundled().unfiltered();
            let wealths = ["poorest", "poorer", "middle", "richer", "richest"];
            let provinces = ["koshi", "madhesh", "bagmati", "gandaki", "lumbini", "karnali", "sudoorpaschim", "koshi"];
            let edus = ["none", "primary", "secondary", "higher"];
            let mut t = bundled_row(provinces[province], "no");
            let col = |t: &RawTable, n: &str| t.column_index(n).unwrap();
            let (wj, ej, mj) = (col(&t, "wealth_index"), col(&t, "mother_education"), col(&t, "meal_frequency"));
            t.rows[0][wj] = s(wealths[wealth]);
            t.rows[0][ej] = s(edus[edu]);
            t.rows[0][mj] = if meal == 8 { None } else { s(&meal.to_string()) };
            let ds = encode(&t, &schema).unwrap();
            let back = decode(&ds, &schema).unwrap();
            for name in ["wealth_index", "mother_education", "province", "away_privileges", "residence", "recent_cough"] {
                let orig = t.rows[0][col(&t, name)].clone().unwrap();
                let dec = back.rows[0][back.column_index(name).unwrap()].clone().unwrap();
                prop_assert!(orig.eq_ignore_ascii_case(&dec), "{name}: {orig} vs {dec}");
            }
            let meal_dec = back.rows[0][back.column_index("meal_frequency").unwrap()].clone().unwrap();
            prop_assert_eq!(meal_dec, if meal == 8 { NOT_ASKED.to_string() } else { meal.to_string() });
        }
    }
}
