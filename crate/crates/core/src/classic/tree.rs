//! CART classification trees (Gini), with optional per-node feature
//! subsampling and extra-trees random thresholds.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or `min_leaf` binds.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features sampled per node; `None` uses all.
    pub mtry: Option<usize>,
    pub random_splits: bool,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: None, min_leaf: 1, mtry: None, random_splits: false }
    }
}

impl TreeParams {
    /// Converts a feature fraction to a per-node count (at least one).
    pub fn with_feature_fraction(mut self, fraction: f64, n_features: usize) -> Self {
        self.mtry = Some(((fraction * n_features as f64).ceil() as usize).clamp(1, n_features.max(1)));
        self
    }

    pub(crate) fn validate(&self, p: usize) -> Result<()> {
        if self.max_depth == Some(0) {
            return Err(Error::InvalidConfig("max_depth must be at least 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::InvalidConfig("min_leaf must be at least 1".into()));
        }
        if let Some(m) = self.mtry {
            if m == 0 || m > p {
                return Err(Error::InvalidConfig(format!("mtry {m} outside 1..={p}")));
            }
        }
        Ok(())
    }
}

/// Rows with `x[feature] < threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Split { feature: usize, threshold: f64, left: usize, right: usize, n_samples: usize },
    Leaf { value: f64, n_samples: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub n_features: usize,
    pub nodes: Vec<TreeNode>,
    /// Normalized total impurity decrease per feature (all zero if no split).
    pub importances: Vec<f64>,
}

impl TreeModel {
    pub fn score_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split { feature, threshold, left, right, .. } => {
                    i = if row[*feature] < *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn rec(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + rec(nodes, *left).max(rec(nodes, *right)),
            }
        }
        rec(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }
}

/// Per-feature sorted distinct values and each row's rank among them.
pub(crate) struct Presorted {
    pub values: Vec<Vec<f64>>,
    /// Feature-major codes: `codes[j][i]` indexes `values[j]`.
    pub codes: Vec<Vec<u32>>,
    pub labels: Vec<u8>,
}

impl Presorted {
    pub fn new(ds: &Dataset) -> Presorted {
        let (n, p) = (ds.n_rows(), ds.n_cols());
        let mut values = Vec::with_capacity(p);
        let mut codes = Vec::with_capacity(p);
        let mut col = vec![0.0; n];
        for j in 0..p {
            for (i, c) in col.iter_mut().enumerate() {
                *c = ds.get(i, j);
            }
            let mut v = col.clone();
            v.sort_unstable_by(f64::total_cmp);
            v.dedup();
            codes.push(col.iter().map(|x| v.partition_point(|d| d < x) as u32).collect());
            values.push(v);
        }
        Presorted { values, codes, labels: ds.labels().to_vec() }
    }
}

struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    /// Rows with code ≤ `split_code` go left.
    split_code: u32,
}

struct Grower<'a> {
    pre: &'a Presorted,
    params: TreeParams,
    rng: Rng,
    cnt: [Vec<u32>; 2],
    groups: Vec<(u32, u32, u32)>,
    keys: Vec<u64>,
    nodes: Vec<TreeNode>,
    importances: Vec<f64>,
    features: Vec<usize>,
}

fn gini_score(n0: f64, n1: f64) -> f64 {
    // Σ n_c² / n; impurity decrease = score(L) + score(R) − score(parent)
    let n = n0 + n1;
    if n == 0.0 {
        0.0
    } else {
        (n0 * n0 + n1 * n1) / n
    }
}

impl Grower<'_> {
    /// Fills `self.groups` with ordered (code, count0, count1) for the node.
    fn collect_groups(&mut self, j: usize, idx: &[usize]) {
        let codes = &self.pre.codes[j];
        let y = &self.pre.labels;
        let groups = &mut self.groups;
        groups.clear();
        if self.pre.values[j].len() <= 4 * idx.len() + 16 {
            let mut lo = u32::MAX;
            let mut hi = 0;
            for &i in idx {
                let c = codes[i];
                self.cnt[y[i] as usize][c as usize] += 1;
                lo = lo.min(c);
                hi = hi.max(c);
            }
            for c in lo..=hi {
                let (a, b) = (self.cnt[0][c as usize], self.cnt[1][c as usize]);
                if a + b > 0 {
                    groups.push((c, a, b));
                    self.cnt[0][c as usize] = 0;
                    self.cnt[1][c as usize] = 0;
                }
            }
        } else {
            self.keys.clear();
            self.keys.extend(idx.iter().map(|&i| (u64::from(codes[i]) << 1) | u64::from(y[i])));
            self.keys.sort_unstable();
            for &k in &self.keys {
                let (c, yy) = ((k >> 1) as u32, (k & 1) as u32);
                match groups.last_mut() {
                    Some(g) if g.0 == c => {
                        g.1 += 1 - yy;
                        g.2 += yy;
                    }
                    _ => groups.push((c, 1 - yy, yy)),
                }
            }
        }
    }

    fn best_for_feature(&mut self, j: usize, idx: &[usize], n0: f64, n1: f64, best: &Option<Candidate>) -> Option<Candidate> {
        self.collect_groups(j, idx);
        let groups = &self.groups;
        if groups.len() < 2 {
            return None;
        }
        let vals = &self.pre.values[j];
        let min_leaf = self.params.min_leaf as f64;
        let parent = gini_score(n0, n1);
        let best_gain = best.as_ref().map_or(1e-12, |b| b.gain + 1e-9);

        let eval = |l0: f64, l1: f64| -> Option<f64> {
            let (r0, r1) = (n0 - l0, n1 - l1);
            if l0 + l1 < min_leaf || r0 + r1 < min_leaf {
                return None;
            }
            Some(gini_score(l0, l1) + gini_score(r0, r1) - parent)
        };

        if self.params.random_splits {
            let lo = vals[groups[0].0 as usize];
            let hi = vals[groups[groups.len() - 1].0 as usize];
            let mut t: f64 = self.rng.random_range(lo..hi);
            if t <= lo {
                t = (lo + hi) / 2.0;
            }
            let (mut l0, mut l1) = (0.0, 0.0);
            let mut split_code = groups[0].0;
            for g in groups {
                if vals[g.0 as usize] < t {
                    l0 += g.1 as f64;
                    l1 += g.2 as f64;
                    split_code = g.0;
                } else {
                    break;
                }
            }
            let gain = eval(l0, l1)?;
            return (gain > best_gain).then_some(Candidate { gain, feature: j, threshold: t, split_code });
        }

        let mut found: Option<Candidate> = None;
        let mut floor = best_gain;
        let (mut l0, mut l1) = (0.0, 0.0);
        for w in groups.windows(2) {
            l0 += w[0].1 as f64;
            l1 += w[0].2 as f64;
            if let Some(gain) = eval(l0, l1) {
                if gain > floor {
                    let threshold = 0.5 * (vals[w[0].0 as usize] + vals[w[1].0 as usize]);
                    found = Some(Candidate { gain, feature: j, threshold, split_code: w[0].0 });
                    floor = gain + 1e-9;
                }
            }
        }
        found
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let y = &self.pre.labels;
        let n1 = idx.iter().filter(|&&i| y[i] == 1).count() as f64;
        let n0 = idx.len() as f64 - n1;
        let m = idx.len();
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { value: if m == 0 { 0.0 } else { n1 / m as f64 }, n_samples: m });
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        if !depth_ok || n0 == 0.0 || n1 == 0.0 || m < 2 * self.params.min_leaf {
            return id;
        }
        let p = self.features.len();
        let mtry = self.params.mtry.unwrap_or(p);
        let mut order = std::mem::take(&mut self.features);
        // Subsampled features are scanned in random order so exact gain
        // ties are broken at random rather than toward low indices.
        if mtry < p {
            order.shuffle(&mut self.rng);
        }
        let mut best: Option<Candidate> = None;
        for &j in &order[..mtry] {
            if let Some(c) = self.best_for_feature(j, idx, n0, n1, &best) {
                best = Some(c);
            }
        }
        // Keep drawing features until some valid split turns up.
        let mut k = mtry;
        while best.is_none() && k < p {
            best = self.best_for_feature(order[k], idx, n0, n1, &None);
            k += 1;
        }
        order.sort_unstable();
        self.features = order;
        let Some(best) = best else { return id };

        let codes = &self.pre.codes[best.feature];
        let mut split = 0;
        for i in 0..m {
            if codes[idx[i]] <= best.split_code {
                idx.swap(i, split);
                split += 1;
            }
        }
        self.importances[best.feature] += best.gain;
        let (left_idx, right_idx) = idx.split_at_mut(split);
        let left = self.grow(left_idx, depth + 1);
        let right = self.grow(right_idx, depth + 1);
        self.nodes[id] = TreeNode::Split { feature: best.feature, threshold: best.threshold, left, right, n_samples: m };
        id
    }
}

pub(crate) fn grow_tree(pre: &Presorted, mut idx: Vec<usize>, params: &TreeParams, seed: u64) -> TreeModel {
    let p = pre.codes.len();
    let max_distinct = pre.values.iter().map(Vec::len).max().unwrap_or(0);
    let mut g = Grower {
        pre,
        params: *params,
        rng: rng::rng(seed),
        cnt: [vec![0; max_distinct], vec![0; max_distinct]],
        groups: Vec::new(),
        keys: Vec::new(),
        nodes: Vec::new(),
        importances: vec![0.0; p],
        features: (0..p).collect(),
    };
    g.grow(&mut idx, 0);
    let total: f64 = g.importances.iter().sum();
    if total > 0.0 {
        g.importances.iter_mut().for_each(|v| *v /= total);
    }
    TreeModel { n_features: p, nodes: g.nodes, importances: g.importances }
}

pub fn fit_tree(ds: &Dataset, params: &TreeParams, seed: u64) -> Result<TreeModel> {
    params.validate(ds.n_cols())?;
    if ds.n_rows() == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let pre = Presorted::new(ds);
    Ok(grow_tree(&pre, (0..ds.n_rows()).collect(), params, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn accuracy(m: &TreeModel, ds: &Dataset) -> f64 {
        ds.rows().zip(ds.labels()).filter(|(r, &y)| u8::from(m.score_row(r) >= 0.5) == y).count() as f64
            / ds.n_rows() as f64
    }

    #[test]
    fn separable_root_split() {
        let ds = Dataset::from_rows(&[vec![0.0], vec![0.2], vec![0.8], vec![1.0]], vec![0, 0, 1, 1]).unwrap();
        let m = fit_tree(&ds, &TreeParams::default(), 0).unwrap();
        match &m.nodes[0] {
            TreeNode::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert!((threshold - 0.5).abs() < 1e-12);
            }
            _ => panic!("expected a split"),
        }
        assert_eq!(accuracy(&m, &ds), 1.0);
        assert_eq!(m.n_leaves(), 2);
    }

    #[test]
    fn xor_depth_one() {
        let ds = Dataset::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]], vec![0, 1, 1, 0])
            .unwrap();
        assert!(fit_tree(&ds, &TreeParams { max_depth: Some(0), ..Default::default() }, 0).is_err());
        let m = fit_tree(&ds, &TreeParams { max_depth: Some(1), ..Default::default() }, 0).unwrap();
        // Exhaustive oracle: no single axis split beats 2/4 correct on XOR,
        // so a depth-1 tree is at most 0.75 accurate.
        assert!(accuracy(&m, &ds) <= 0.75);
        let deep = fit_tree(&ds, &TreeParams { max_depth: Some(2), ..Default::default() }, 0).unwrap();
        assert!(deep.nodes.len() == 1 || accuracy(&deep, &ds) >= accuracy(&m, &ds));
    }

    #[test]
    fn constant_label_single_leaf() {
        let ds = Dataset::from_rows(&[vec![1.0], vec![2.0], vec![3.0]], vec![1, 1, 1]).unwrap();
        let m = fit_tree(&ds, &TreeParams::default(), 0).unwrap();
        assert_eq!(m.nodes.len(), 1);
        assert_eq!(m.score_row(&[0.0]), 1.0);
        assert!(m.importances.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ties_prefer_lower_feature() {
        // both features split the labels perfectly
        let ds = Dataset::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]], vec![0, 1]).unwrap();
        let m = fit_tree(&ds, &TreeParams::default(), 0).unwrap();
        assert!(matches!(m.nodes[0], TreeNode::Split { feature: 0, .. }));
    }

    #[test]
    fn extra_trees_threshold_between_min_and_max() {
        let ds = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]], vec![0, 0, 1, 1]).unwrap();
        for seed in 0..20 {
            let m = fit_tree(&ds, &TreeParams { random_splits: true, max_depth: Some(1), ..Default::default() }, seed).unwrap();
            if let TreeNode::Split { threshold, .. } = m.nodes[0] {
                assert!(threshold > 0.0 && threshold < 3.0);
            }
        }
    }

    fn data_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<u8>)> {
        proptest::collection::vec((proptest::collection::vec(0u8..6, 3), 0u8..2), 8..60).prop_map(|rows| {
            let x = rows.iter().map(|(r, _)| r.iter().map(|&v| v as f64).collect()).collect();
            let y = rows.iter().map(|(_, y)| *y).collect();
            (x, y)
        })
    }

    proptest! {
        #[test]
        fn accuracy_non_decreasing_in_depth((x, y) in data_strategy()) {
            let ds = Dataset::from_rows(&x, y).unwrap();
            let mut last = 0.0;
            for d in 1..7 {
                let m = fit_tree(&ds, &TreeParams { max_depth: Some(d), ..Default::default() }, 1).unwrap();
                let a = accuracy(&m, &ds);
                prop_assert!(a + 1e-12 >= last, "depth {} accuracy {} < {}", d, a, last);
                last = a;
                // children sample counts sum to the parent's
                for node in &m.nodes {
                    if let TreeNode::Split { left, right, n_samples, .. } = node {
                        let c = |i: usize| match &m.nodes[i] { TreeNode::Split { n_samples, .. } | TreeNode::Leaf { n_samples, .. } => *n_samples };
                        prop_assert_eq!(c(*left) + c(*right), *n_samples);
                    }
                }
            }
        }
    }
}
