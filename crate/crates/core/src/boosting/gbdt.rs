//! Histogram gradient-boosted trees for the logistic loss.
//!
//! One engine covers the usual family members: growth policy (level-wise,
//! leaf-wise or symmetric) and first- vs second-order leaf estimates are
//! configuration, not separate implementations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{log1p_exp, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum Growth {
    LevelWise { max_depth: usize },
    LeafWise { max_leaves: usize },
    /// Oblivious trees: one (feature, bin) split shared by every node of a level.
    Symmetric { max_depth: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtConfig {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub growth: Growth,
    pub n_bins: usize,
    pub l2_leaf: f64,
    /// Newton leaves `−G/(H+λ)`; otherwise mean-residual leaves and variance gain.
    pub second_order: bool,
    pub min_leaf: usize,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self::xgb()
    }
}

impl GbdtConfig {
    fn base(growth: Growth, second_order: bool) -> Self {
        Self { n_rounds: 200, learning_rate: 0.1, growth, n_bins: 255, l2_leaf: 1.0, second_order, min_leaf: 20 }
    }

    pub fn xgb() -> Self {
        Self::base(Growth::LevelWise { max_depth: 6 }, true)
    }

    pub fn lgbm() -> Self {
        Self::base(Growth::LeafWise { max_leaves: 31 }, true)
    }

    pub fn histgb() -> Self {
        Self::base(Growth::LevelWise { max_depth: 6 }, false)
    }

    pub fn cat() -> Self {
        Self::base(Growth::Symmetric { max_depth: 6 }, true)
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "xgb" | "xgboost" => Some(Self::xgb()),
            "lgbm" | "lightgbm" => Some(Self::lgbm()),
            "histgb" => Some(Self::histgb()),
            "cat" | "catboost" => Some(Self::cat()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(2..=65_536).contains(&self.n_bins) {
            return bad("n_bins must be in [2, 65536]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]");
        }
        if !(self.l2_leaf >= 0.0) {
            return bad("l2_leaf must be non-negative");
        }
        if self.min_leaf == 0 {
            return bad("min_leaf must be at least 1");
        }
        match self.growth {
            Growth::LevelWise { max_depth: 0 } | Growth::Symmetric { max_depth: 0 } => bad("max_depth must be at least 1"),
            Growth::LeafWise { max_leaves } if max_leaves < 2 => bad("max_leaves must be at least 2"),
            _ => Ok(()),
        }
    }

    /// λ actually used: first-order mode has unit Hessians and no shrinkage.
    fn lambda(&self) -> f64 {
        if self.second_order {
            self.l2_leaf
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum GbNode {
    /// Rows with `bin <= bin` (equivalently `x <= threshold`) go left.
    Split { feature: usize, bin: u16, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbTree {
    pub nodes: Vec<GbNode>,
}

impl GbTree {
    pub fn eval_bins(&self, bins: &[u16]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                GbNode::Leaf { value } => return *value,
                GbNode::Split { feature, bin, left, right, .. } => {
                    at = if bins[*feature] <= *bin { *left } else { *right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, GbNode::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &GbTree, at: usize) -> usize {
            match &t.nodes[at] {
                GbNode::Leaf { .. } => 0,
                GbNode::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub config: GbdtConfig,
    /// Prior log-odds of the training labels.
    pub base: f64,
    /// Per-feature ascending bin edges from the training data.
    pub edges: Vec<Vec<f64>>,
    pub trees: Vec<GbTree>,
    /// Total split gain per feature, normalized to sum 1.
    pub importances: Vec<f64>,
    /// Mean training log-loss before the first round and after each round.
    pub train_loss: Vec<f64>,
}

/// Equal-frequency edges at midpoints between distinct values; a column with
/// at most `n_bins` distinct values gets one bin per value.
pub fn bin_edges(col: &[f64], n_bins: usize) -> Vec<f64> {
    let mut v: Vec<f64> = col.to_vec();
    v.sort_by(f64::total_cmp);
    let mut distinct: Vec<(f64, usize)> = Vec::new();
    for x in v {
        match distinct.last_mut() {
            Some((d, c)) if *d == x => *c += 1,
            _ => distinct.push((x, 1)),
        }
    }
    let mid = |k: usize| 0.5 * (distinct[k].0 + distinct[k + 1].0);
    if distinct.len() <= n_bins {
        return (0..distinct.len().saturating_sub(1)).map(mid).collect();
    }
    let n = col.len() as f64;
    let mut edges = Vec::with_capacity(n_bins - 1);
    let mut cum = 0usize;
    for k in 0..distinct.len() - 1 {
        cum += distinct[k].1;
        if cum as f64 >= (edges.len() + 1) as f64 * n / n_bins as f64 {
            edges.push(mid(k));
            if edges.len() == n_bins - 1 {
                break;
            }
        }
    }
    edges
}

/// Bin index of `x`: the number of edges strictly below it. Out-of-range
/// values land in the end bins.
pub fn bin_of(edges: &[f64], x: f64) -> u16 {
    edges.partition_point(|&e| e < x) as u16
}

impl BoostedModel {
    pub fn n_features(&self) -> usize {
        self.edges.len()
    }

    pub fn bin_row(&self, row: &[f64]) -> Vec<u16> {
        self.edges.iter().zip(row).map(|(e, &x)| bin_of(e, x)).collect()
    }

    pub fn log_odds(&self, row: &[f64]) -> f64 {
        let bins = self.bin_row(row);
        self.base + self.config.learning_rate * self.trees.iter().map(|t| t.eval_bins(&bins)).sum::<f64>()
    }

    pub fn score_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.log_odds(row))
    }
}

type Stats = [f64; 3]; // (G, H, count)
type Hist = Vec<Vec<Stats>>;

#[derive(Clone, Copy)]
struct Cand {
    feature: usize,
    bin: usize,
    gain: f64,
}

struct Open {
    id: usize,
    idx: Vec<usize>,
    hist: Hist,
    sum: Stats,
    best: Option<Cand>,
}

struct Ctx<'a> {
    bins: &'a [u16],
    n: usize,
    n_bins: Vec<usize>,
    edges: &'a [Vec<f64>],
    g: &'a [f64],
    h: &'a [f64],
    lambda: f64,
    min_leaf: usize,
}

const MIN_HESS: f64 = 1e-12;
const PAR_ROWS: usize = 4096;

impl Ctx<'_> {
    fn hist(&self, idx: &[usize]) -> Hist {
        let one = |j: usize| {
            let col = &self.bins[j * self.n..(j + 1) * self.n];
            let mut hj = vec![[0.0; 3]; self.n_bins[j]];
            for &i in idx {
                let s = &mut hj[col[i] as usize];
                s[0] += self.g[i];
                s[1] += self.h[i];
                s[2] += 1.0;
            }
            hj
        };
        let p = self.n_bins.len();
        if idx.len() >= PAR_ROWS {
            (0..p).into_par_iter().map(one).collect()
        } else {
            (0..p).map(one).collect()
        }
    }

    fn score(&self, s: Stats) -> f64 {
        s[0] * s[0] / (s[1] + self.lambda)
    }

    fn gain(&self, l: Stats, r: Stats, parent: Stats) -> Option<f64> {
        let ok = |s: Stats| s[2] >= self.min_leaf as f64 && s[1] + self.lambda > MIN_HESS;
        if !ok(l) || !ok(r) {
            return None;
        }
        Some(0.5 * (self.score(l) + self.score(r) - self.score(parent)))
    }

    /// Scans every (feature, bin) boundary; `visit(feature, bin, gain)`.
    fn scan(&self, hist: &Hist, sum: Stats, mut visit: impl FnMut(usize, usize, f64)) {
        for (j, hj) in hist.iter().enumerate() {
            let mut l = [0.0; 3];
            for (b, s) in hj.iter().enumerate().take(hj.len().saturating_sub(1)) {
                l[0] += s[0];
                l[1] += s[1];
                l[2] += s[2];
                let r = [sum[0] - l[0], sum[1] - l[1], sum[2] - l[2]];
                if let Some(gain) = self.gain(l, r, sum) {
                    visit(j, b, gain);
                }
            }
        }
    }

    fn best(&self, hist: &Hist, sum: Stats) -> Option<Cand> {
        let mut best: Option<Cand> = None;
        self.scan(hist, sum, |feature, bin, gain| {
            if gain > best.map_or(1e-12, |c| c.gain) {
                best = Some(Cand { feature, bin, gain });
            }
        });
        best
    }

    fn open(&self, id: usize, idx: Vec<usize>, hist: Hist) -> Open {
        let sum = idx.iter().fold([0.0; 3], |s, &i| [s[0] + self.g[i], s[1] + self.h[i], s[2] + 1.0]);
        let best = self.best(&hist, sum);
        Open { id, idx, hist, sum, best }
    }

    /// Splits `node` on `(feature, bin)`, building the smaller child's
    /// histogram directly and the larger one by subtraction.
    fn split(&self, node: Open, feature: usize, bin: usize, nodes: &mut Vec<GbNode>, want_best: bool) -> (Open, Open) {
        let col = &self.bins[feature * self.n..(feature + 1) * self.n];
        let (li, ri): (Vec<usize>, Vec<usize>) = node.idx.iter().partition(|&&i| (col[i] as usize) <= bin);
        let (left, right) = (nodes.len(), nodes.len() + 1);
        nodes.push(GbNode::Leaf { value: 0.0 });
        nodes.push(GbNode::Leaf { value: 0.0 });
        nodes[node.id] = GbNode::Split {
            feature,
            bin: bin as u16,
            threshold: self.edges[feature].get(bin).copied().unwrap_or(f64::INFINITY),
            left,
            right,
        };
        let small_left = li.len() <= ri.len();
        let small = self.hist(if small_left { &li } else { &ri });
        let mut large = node.hist;
        for (lj, sj) in large.iter_mut().zip(&small) {
            for (a, b) in lj.iter_mut().zip(sj) {
                a[0] -= b[0];
                a[1] -= b[1];
                a[2] -= b[2];
            }
        }
        let (hl, hr) = if small_left { (small, large) } else { (large, small) };
        let mk = |id, idx: Vec<usize>, hist: Hist| {
            if want_best {
                self.open(id, idx, hist)
            } else {
                let sum = idx.iter().fold([0.0; 3], |s, &i| [s[0] + self.g[i], s[1] + self.h[i], s[2] + 1.0]);
                Open { id, idx, hist, sum, best: None }
            }
        };
        (mk(left, li, hl), mk(right, ri, hr))
    }

    fn close(&self, node: &Open, nodes: &mut [GbNode], lr: f64, f: &mut [f64]) {
        let denom = node.sum[1] + self.lambda;
        let value = if denom > MIN_HESS { -node.sum[0] / denom } else { 0.0 };
        nodes[node.id] = GbNode::Leaf { value };
        for &i in &node.idx {
            f[i] += lr * value;
        }
    }
}

fn grow(ctx: &Ctx, cfg: &GbdtConfig, f: &mut [f64], gains: &mut [f64]) -> GbTree {
    let mut nodes = vec![GbNode::Leaf { value: 0.0 }];
    let all: Vec<usize> = (0..ctx.n).collect();
    let hist = ctx.hist(&all);
    let lr = cfg.learning_rate;
    match cfg.growth {
        Growth::LevelWise { max_depth } => {
            let mut frontier = vec![ctx.open(0, all, hist)];
            for depth in 0..max_depth {
                let last = depth + 1 == max_depth;
                let mut next = Vec::new();
                for node in frontier {
                    match node.best {
                        Some(c) => {
                            gains[c.feature] += c.gain;
                            let (l, r) = ctx.split(node, c.feature, c.bin, &mut nodes, !last);
                            next.push(l);
                            next.push(r);
                        }
                        None => ctx.close(&node, &mut nodes, lr, f),
                    }
                }
                frontier = next;
            }
            for node in &frontier {
                ctx.close(node, &mut nodes, lr, f);
            }
        }
        Growth::LeafWise { max_leaves } => {
            let mut open = vec![ctx.open(0, all, hist)];
            let mut closed = 0usize;
            while open.len() + closed < max_leaves {
                let pick = open
                    .iter()
                    .enumerate()
                    .filter_map(|(k, o)| o.best.map(|c| (k, c.gain, o.id)))
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.2.cmp(&a.2)));
                let Some((k, _, _)) = pick else { break };
                let node = open.remove(k);
                let c = node.best.unwrap();
                gains[c.feature] += c.gain;
                let (l, r) = ctx.split(node, c.feature, c.bin, &mut nodes, true);
                open.push(l);
                open.push(r);
                let (low, high): (Vec<Open>, Vec<Open>) = open.into_iter().partition(|o| o.best.is_none());
                for o in &low {
                    ctx.close(o, &mut nodes, lr, f);
                }
                closed += low.len();
                open = high;
            }
            for o in &open {
                ctx.close(o, &mut nodes, lr, f);
            }
        }
        Growth::Symmetric { max_depth } => {
            let offsets: Vec<usize> = ctx
                .n_bins
                .iter()
                .scan(0, |acc, &nb| {
                    let o = *acc;
                    *acc += nb;
                    Some(o)
                })
                .collect();
            let total_bins: usize = ctx.n_bins.iter().sum();
            let root_sum = all.iter().fold([0.0; 3], |s, &i| [s[0] + ctx.g[i], s[1] + ctx.h[i], s[2] + 1.0]);
            let mut frontier = vec![Open { id: 0, idx: all, hist, sum: root_sum, best: None }];
            for _ in 0..max_depth {
                let mut table = vec![0.0; total_bins];
                let mut valid = vec![false; total_bins];
                for node in &frontier {
                    ctx.scan(&node.hist, node.sum, |j, b, gain| {
                        table[offsets[j] + b] += gain;
                        valid[offsets[j] + b] = true;
                    });
                }
                let mut best: Option<(usize, usize, f64)> = None;
                for (j, &off) in offsets.iter().enumerate() {
                    for b in 0..ctx.n_bins[j] {
                        if valid[off + b] && table[off + b] > best.map_or(1e-12, |c| c.2) {
                            best = Some((j, b, table[off + b]));
                        }
                    }
                }
                let Some((j, b, gain)) = best else { break };
                gains[j] += gain;
                let mut next = Vec::with_capacity(frontier.len() * 2);
                for node in frontier {
                    let (l, r) = ctx.split(node, j, b, &mut nodes, false);
                    next.push(l);
                    next.push(r);
                }
                frontier = next;
            }
            for node in &frontier {
                ctx.close(node, &mut nodes, lr, f);
            }
        }
    }
    GbTree { nodes }
}

fn mean_log_loss(f: &[f64], y: &[u8]) -> f64 {
    f.iter().zip(y).map(|(&z, &t)| log1p_exp(z) - f64::from(t) * z).sum::<f64>() / y.len() as f64
}

/// Fits the booster. Training is deterministic; `_seed` is accepted for a
/// uniform fitting signature.
pub fn fit_gbdt(ds: &Dataset, cfg: &GbdtConfig, _seed: u64) -> Result<BoostedModel> {
    cfg.validate()?;
    let (n, p) = (ds.n_rows(), ds.n_cols());
    let y = ds.labels();
    let pos = ds.positives();
    if pos == 0 || pos == n {
        return Err(Error::SingleClassDataset { positives: pos, negatives: n - pos });
    }
    let prev = pos as f64 / n as f64;
    let base = (prev / (1.0 - prev)).ln();
    let edges: Vec<Vec<f64>> = (0..p).map(|j| bin_edges(&ds.column(j), cfg.n_bins)).collect();
    let mut bins = vec![0u16; n * p];
    for j in 0..p {
        for i in 0..n {
            bins[j * n + i] = bin_of(&edges[j], ds.get(i, j));
        }
    }
    let n_bins: Vec<usize> = edges.iter().map(|e| e.len() + 1).collect();
    let mut f = vec![base; n];
    let mut g = vec![0.0; n];
    let mut h = vec![1.0; n];
    let mut gains = vec![0.0; p];
    let mut trees = Vec::with_capacity(cfg.n_rounds);
    let mut train_loss = vec![mean_log_loss(&f, y)];
    for _ in 0..cfg.n_rounds {
        for i in 0..n {
            let pi = sigmoid(f[i]);
            g[i] = pi - f64::from(y[i]);
            if cfg.second_order {
                h[i] = pi * (1.0 - pi);
            }
        }
        let ctx = Ctx {
            bins: &bins,
            n,
            n_bins: n_bins.clone(),
            edges: &edges,
            g: &g,
            h: &h,
            lambda: cfg.lambda(),
            min_leaf: cfg.min_leaf,
        };
        let tree = grow(&ctx, cfg, &mut f, &mut gains);
        if tree.nodes.iter().any(|nd| matches!(nd, GbNode::Leaf { value } if !value.is_finite())) {
            return Err(Error::BaseModelTrainingFailure("non-finite leaf value".into()));
        }
        trees.push(tree);
        train_loss.push(mean_log_loss(&f, y));
    }
    let total: f64 = gains.iter().sum();
    let importances = if total > 0.0 { gains.iter().map(|v| v / total).collect() } else { vec![0.0; p] };
    Ok(BoostedModel { config: *cfg, base, edges, trees, importances, train_loss })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn edges_and_clamping() {
        let e = bin_edges(&[3.0, 1.0, 2.0, 2.0], 10);
        assert_eq!(e, vec![1.5, 2.5]);
        assert_eq!(bin_of(&e, -100.0), 0);
        assert_eq!(bin_of(&e, 2.0), 1);
        assert_eq!(bin_of(&e, 100.0), 2);
        let many: Vec<f64> = (0..1000).map(f64::from).collect();
        let e = bin_edges(&many, 4);
        assert_eq!(e.len(), 3);
        assert_eq!(e, vec![249.5, 499.5, 749.5]);
    }

    fn toy(n: usize, seed: u64) -> Dataset {
        let mut r = crate::rng::rng(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let x: Vec<f64> = (0..3).map(|_| r.random::<f64>()).collect();
            y.push(u8::from(r.random::<f64>() < sigmoid(4.0 * (x[0] - 0.5) + 2.0 * (x[1] - x[2]))));
            rows.push(x);
        }
        Dataset::from_rows(&rows, y).unwrap()
    }

    #[test]
    fn zero_rounds_gives_prevalence() {
        let ds = toy(50, 1);
        let m = fit_gbdt(&ds, &GbdtConfig { n_rounds: 0, ..GbdtConfig::xgb() }, 0).unwrap();
        assert!((m.score_row(ds.row(0)) - ds.prevalence()).abs() < 1e-12);
    }

    #[test]
    fn constant_tree_shifts_by_eta_c() {
        let ds = toy(60, 2);
        let mut m = fit_gbdt(&ds, &GbdtConfig { n_rounds: 3, min_leaf: 5, ..GbdtConfig::lgbm() }, 0).unwrap();
        let before = m.log_odds(ds.row(3));
        m.trees.push(GbTree { nodes: vec![GbNode::Leaf { value: 0.7 }] });
        assert!((m.log_odds(ds.row(3)) - before - 0.1 * 0.7).abs() < 1e-12);
    }

    #[test]
    fn leafwise_two_equals_levelwise_one() {
        for seed in 0..5 {
            let ds = toy(120, 10 + seed);
            let a = fit_gbdt(&ds, &GbdtConfig { n_rounds: 5, min_leaf: 3, growth: Growth::LeafWise { max_leaves: 2 }, ..GbdtConfig::xgb() }, 0).unwrap();
            let b = fit_gbdt(&ds, &GbdtConfig { n_rounds: 5, min_leaf: 3, growth: Growth::LevelWise { max_depth: 1 }, ..GbdtConfig::xgb() }, 0).unwrap();
            assert_eq!(a.trees, b.trees);
        }
    }

    #[test]
    fn growth_limits_respected() {
        let ds = toy(400, 3);
        for (cfg, leaves, depth) in [
            (GbdtConfig { growth: Growth::LeafWise { max_leaves: 7 }, ..GbdtConfig::lgbm() }, 7, usize::MAX),
            (GbdtConfig { growth: Growth::LevelWise { max_depth: 3 }, ..GbdtConfig::xgb() }, 8, 3),
            (GbdtConfig { growth: Growth::Symmetric { max_depth: 3 }, ..GbdtConfig::cat() }, 8, 3),
        ] {
            let m = fit_gbdt(&ds, &GbdtConfig { n_rounds: 10, min_leaf: 5, ..cfg }, 0).unwrap();
            for t in &m.trees {
                assert!(t.n_leaves() <= leaves && t.depth() <= depth);
            }
        }
    }

    #[test]
    fn symmetric_levels_share_splits() {
        let ds = toy(400, 4);
        let m = fit_gbdt(&ds, &GbdtConfig { n_rounds: 4, min_leaf: 5, ..GbdtConfig::cat() }, 0).unwrap();
        for t in &m.trees {
            let mut level = vec![0usize];
            while let Some(GbNode::Split { .. }) = level.first().map(|&i| &t.nodes[i]) {
                let keys: Vec<(usize, u16)> = level
                    .iter()
                    .map(|&i| match &t.nodes[i] {
                        GbNode::Split { feature, bin, .. } => (*feature, *bin),
                        GbNode::Leaf { .. } => panic!("ragged symmetric tree"),
                    })
                    .collect();
                assert!(keys.windows(2).all(|w| w[0] == w[1]));
                level = level
                    .iter()
                    .flat_map(|&i| match &t.nodes[i] {
                        GbNode::Split { left, right, .. } => vec![*left, *right],
                        GbNode::Leaf { .. } => vec![],
                    })
                    .collect();
            }
        }
    }

    #[test]
    fn loss_monotone_each_preset() {
        let ds = toy(500, 5);
        for cfg in [GbdtConfig::xgb(), GbdtConfig::lgbm(), GbdtConfig::histgb(), GbdtConfig::cat()] {
            let m = fit_gbdt(&ds, &GbdtConfig { n_rounds: 50, ..cfg }, 0).unwrap();
            assert!(m.train_loss.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{:?}", cfg.growth);
            let s: f64 = m.importances.iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn serde_round_trip() {
        let ds = toy(100, 6);
        let m = fit_gbdt(&ds, &GbdtConfig { n_rounds: 5, min_leaf: 5, ..GbdtConfig::cat() }, 0).unwrap();
        let back: BoostedModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        for row in ds.rows() {
            assert_eq!(back.score_row(row), m.score_row(row));
        }
    }
}
