//! Shared data representations: the encoded [`Dataset`], column kinds, and
//! deterministic stratified splitting / folding.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Kind of an encoded feature column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Ordinal { levels: usize },
    Binary,
    Ternary,
    OnehotGroup { group: String, category_index: usize },
    Zscore,
    Identifier,
}

/// What to do with a missing raw value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    ModeImpute,
    NotAskedRecode,
    Reject,
}

/// Dense encoded feature matrix (row-major) with a binary label vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<u8>,
    feature_names: Vec<String>,
    kinds: Vec<ColumnKind>,
    label_name: String,
    n_rows: usize,
    n_cols: usize,
}

impl Dataset {
    /// Builds a dataset, validating shapes, label values and finiteness.
    pub fn new(
        features: Vec<f64>,
        labels: Vec<u8>,
        feature_names: Vec<String>,
        kinds: Vec<ColumnKind>,
        label_name: impl Into<String>,
    ) -> Result<Self> {
        let n_rows = labels.len();
        let n_cols = feature_names.len();
        if features.len() != n_rows * n_cols {
            return Err(Error::LengthMismatch(features.len(), n_rows * n_cols));
        }
        if kinds.len() != n_cols {
            return Err(Error::LengthMismatch(kinds.len(), n_cols));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::NonBinaryValue(bad as f64));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::SchemaMismatch(format!(
                "non-finite value at row {}, column `{}`",
                pos / n_cols.max(1),
                feature_names[pos % n_cols.max(1)]
            )));
        }
        Ok(Self { features, labels, feature_names, kinds, label_name: label_name.into(), n_rows, n_cols })
    }

    /// Convenience constructor for numeric matrices without column metadata.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<u8>) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.len());
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch(rows.len(), labels.len()));
        }
        let mut features = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            if r.len() != n_cols {
                return Err(Error::LengthMismatch(r.len(), n_cols));
            }
            features.extend_from_slice(r);
        }
        let names = (0..n_cols).map(|j| format!("x{j}")).collect();
        Self::new(features, labels, names, vec![ColumnKind::Zscore; n_cols], "label")
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn label_name(&self) -> &str {
        &self.label_name
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.features[i * self.n_cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks(self.n_cols.max(1)).take(self.n_rows)
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    pub fn prevalence(&self) -> f64 {
        if self.n_rows == 0 {
            0.0
        } else {
            self.positives() as f64 / self.n_rows as f64
        }
    }

    pub fn labels_f64(&self) -> Vec<f64> {
        self.labels.iter().map(|&y| y as f64).collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// Rows in the given order (duplicates allowed).
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(idx.len() * self.n_cols);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset { features, labels, n_rows: idx.len(), ..self.clone_meta() }
    }

    /// Columns in the given order.
    pub fn select_cols(&self, cols: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(self.n_rows * cols.len());
        for i in 0..self.n_rows {
            let r = self.row(i);
            features.extend(cols.iter().map(|&j| r[j]));
        }
        Dataset {
            features,
            labels: self.labels.clone(),
            feature_names: cols.iter().map(|&j| self.feature_names[j].clone()).collect(),
            kinds: cols.iter().map(|&j| self.kinds[j].clone()).collect(),
            label_name: self.label_name.clone(),
            n_rows: self.n_rows,
            n_cols: cols.len(),
        }
    }

    /// Same metadata and labels with a replacement feature matrix of equal shape.
    pub fn with_features(&self, features: Vec<f64>) -> Result<Dataset> {
        Dataset::new(
            features,
            self.labels.clone(),
            self.feature_names.clone(),
            self.kinds.clone(),
            self.label_name.clone(),
        )
    }

    /// Appends columns (row-major, `extra_cols` wide) after the existing ones.
    pub fn append_columns(&self, extra: &[f64], names: Vec<String>, kinds: Vec<ColumnKind>) -> Result<Dataset> {
        let extra_cols = names.len();
        if extra.len() != extra_cols * self.n_rows {
            return Err(Error::LengthMismatch(extra.len(), extra_cols * self.n_rows));
        }
        let mut features = Vec::with_capacity(self.n_rows * (self.n_cols + extra_cols));
        for i in 0..self.n_rows {
            features.extend_from_slice(self.row(i));
            features.extend_from_slice(&extra[i * extra_cols..(i + 1) * extra_cols]);
        }
        let mut feature_names = self.feature_names.clone();
        feature_names.extend(names);
        let mut all_kinds = self.kinds.clone();
        all_kinds.extend(kinds);
        Dataset::new(features, self.labels.clone(), feature_names, all_kinds, self.label_name.clone())
    }

    fn clone_meta(&self) -> Dataset {
        Dataset {
            features: Vec::new(),
            labels: Vec::new(),
            feature_names: self.feature_names.clone(),
            kinds: self.kinds.clone(),
            label_name: self.label_name.clone(),
            n_rows: 0,
            n_cols: self.n_cols,
        }
    }

    /// Writes `<path>` as header + numeric CSV and `<path>.json`-style sidecar
    /// (same stem, `.json` extension) holding names, kinds and label column.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(&self.label_name);
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(self.n_cols + 1);
        for i in 0..self.n_rows {
            record.clear();
            record.extend(self.row(i).iter().map(|v| format_number(*v)));
            record.push(self.labels[i].to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
        let meta = DatasetMeta {
            feature_names: self.feature_names.clone(),
            kinds: self.kinds.clone(),
            label: self.label_name.clone(),
        };
        let file = File::create(sidecar_path(path))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &meta)?;
        Ok(())
    }

    /// Reads a dataset written by [`Dataset::write_csv`]. Without a sidecar the
    /// last column is the label and kinds are inferred from the value sets.
    pub fn read_csv(path: &Path) -> Result<Dataset> {
        let sidecar = sidecar_path(path);
        let meta: Option<DatasetMeta> = if sidecar.exists() {
            Some(serde_json::from_reader(BufReader::new(File::open(&sidecar)?))?)
        } else {
            None
        };
        let mut rdr = csv::Reader::from_reader(BufReader::new(File::open(path)?));
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let label_name = meta.as_ref().map_or_else(|| header.last().cloned().unwrap_or_default(), |m| m.label.clone());
        let label_col = header
            .iter()
            .position(|h| *h == label_name)
            .ok_or_else(|| Error::SchemaMismatch(format!("label column `{label_name}` not in header")))?;
        let feature_cols: Vec<usize> = (0..header.len()).filter(|&j| j != label_col).collect();
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (row_idx, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(Error::SchemaMismatch(format!("row {row_idx} has {} fields", rec.len())));
            }
            for &j in &feature_cols {
                features.push(parse_number(&rec[j], &header[j])?);
            }
            let y = parse_number(&rec[label_col], &label_name)?;
            if y != 0.0 && y != 1.0 {
                return Err(Error::NonBinaryValue(y));
            }
            labels.push(y as u8);
        }
        let names: Vec<String> = feature_cols.iter().map(|&j| header[j].clone()).collect();
        let kinds = match meta {
            Some(m) => {
                if m.feature_names != names {
                    return Err(Error::SchemaMismatch("sidecar feature names differ from CSV header".into()));
                }
                m.kinds
            }
            None => {
                let n_cols = names.len();
                (0..n_cols)
                    .map(|j| infer_kind(features.iter().skip(j).step_by(n_cols.max(1)).copied()))
                    .collect()
            }
        };
        Dataset::new(features, labels, names, kinds, label_name)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetMeta {
    feature_names: Vec<String>,
    kinds: Vec<ColumnKind>,
    label: String,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn parse_number(s: &str, column: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::UnknownCategory { column: column.to_string(), value: s.to_string() })
}

pub(crate) fn format_number(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn infer_kind(values: impl Iterator<Item = f64>) -> ColumnKind {
    let mut binary = true;
    let mut ternary = true;
    for v in values {
        if v != 0.0 && v != 1.0 {
            binary = false;
        }
        if v != 0.0 && v != 1.0 && v != -1.0 {
            ternary = false;
        }
    }
    if binary {
        ColumnKind::Binary
    } else if ternary {
        ColumnKind::Ternary
    } else {
        ColumnKind::Zscore
    }
}

/// A train/test partition of row indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
    pub ratio: f64,
}

/// Per-row fold assignment for stratified k-fold cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub fold_assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    /// `(train, test)` row indices for fold `f`, in ascending row order.
    pub fn fold(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, &a) in self.fold_assignments.iter().enumerate() {
            if a == f {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.fold_assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

fn class_indices(labels: &[u8]) -> [Vec<usize>; 2] {
    let mut by_class = [Vec::new(), Vec::new()];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y as usize].push(i);
    }
    by_class
}

/// Stratified holdout split on a label vector.
pub fn split_labels(labels: &[u8], ratio: f64, seed: u64) -> Result<SplitPlan> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::RatioOutOfRange(ratio));
    }
    let mut by_class = class_indices(labels);
    if by_class[0].is_empty() || by_class[1].is_empty() {
        return Err(Error::SingleClassDataset { positives: by_class[1].len(), negatives: by_class[0].len() });
    }
    let n = labels.len();
    let n_train = ((ratio * n as f64).round() as usize).clamp(1, n - 1);

    // Largest-remainder apportionment of the training quota across classes.
    let quotas: Vec<f64> = by_class.iter().map(|c| ratio * c.len() as f64).collect();
    let mut take: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut remaining = n_train.saturating_sub(take.iter().sum());
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    while remaining > 0 {
        let before = remaining;
        for &c in &order {
            if remaining > 0 && take[c] < by_class[c].len() {
                take[c] += 1;
                remaining -= 1;
            }
        }
        if remaining == before {
            break;
        }
    }

    let mut r = rng::sub_rng(seed, 0x5b11);
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n - n_train);
    for (c, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut r);
        train.extend_from_slice(&members[..take[c]]);
        test.extend_from_slice(&members[take[c]..]);
    }
    train.shuffle(&mut r);
    test.shuffle(&mut r);
    Ok(SplitPlan { train_indices: train, test_indices: test, seed, ratio })
}

/// Stratified holdout split of a dataset.
pub fn split_stratified(ds: &Dataset, ratio: f64, seed: u64) -> Result<SplitPlan> {
    split_labels(ds.labels(), ratio, seed)
}

/// Stratified k-fold assignment on a label vector.
///
/// Each class needs at least `k` members; `k == n_rows` (leave-one-out) is
/// accepted as long as both classes are present.
pub fn kfold_labels(labels: &[u8], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidFoldCount(k));
    }
    let mut by_class = class_indices(labels);
    let leave_one_out = k == labels.len();
    for (c, members) in by_class.iter().enumerate() {
        let needed = if leave_one_out { 1 } else { k };
        if members.len() < needed {
            return Err(Error::TooFewPerClass { k, class: c as u8, count: members.len() });
        }
    }
    let mut r = rng::sub_rng(seed, 0xf01d);
    let mut assignments = vec![0usize; labels.len()];
    let mut pos = 0usize;
    for members in by_class.iter_mut() {
        members.shuffle(&mut r);
        for &i in members.iter() {
            assignments[i] = pos % k;
            pos += 1;
        }
    }
    Ok(FoldPlan { k, fold_assignments: assignments, seed })
}

pub fn kfold_stratified(ds: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    kfold_labels(ds.labels(), k, seed)
}
