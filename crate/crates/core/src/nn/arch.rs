//! Network definitions. Parameters live in a flat [`Store`]; each forward pass
//! requests them in a fixed order, creating (and initializing) them on the
//! first pass.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum Arch {
    Dnn {
        hidden: Vec<usize>,
        dropout: f64,
        slope: f64,
    },
    ResnetMlp {
        width: usize,
        depth: usize,
        dropout: f64,
        slope: f64,
    },
    WideDeep {
        hidden: Vec<usize>,
        dropout: f64,
        slope: f64,
        /// Deep-path output weights fixed at zero (reduces to a linear model).
        freeze_deep: bool,
    },
    TabnetLite {
        feature_dim: usize,
        n_steps: usize,
        gamma_relax: f64,
        /// Weight of the mean mask entropy in the loss.
        sparsity: f64,
        slope: f64,
    },
}

impl Arch {
    pub fn dnn() -> Arch {
        Arch::Dnn { hidden: vec![64, 32], dropout: 0.1, slope: 0.01 }
    }

    pub fn resnet() -> Arch {
        Arch::ResnetMlp { width: 64, depth: 2, dropout: 0.1, slope: 0.01 }
    }

    pub fn wide_deep() -> Arch {
        Arch::WideDeep { hidden: vec![64, 32], dropout: 0.1, slope: 0.01, freeze_deep: false }
    }

    pub fn tabnet() -> Arch {
        Arch::TabnetLite { feature_dim: 16, n_steps: 3, gamma_relax: 1.3, sparsity: 1e-3, slope: 0.01 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Arch::Dnn { .. } => "dnn",
            Arch::ResnetMlp { .. } => "resnet_mlp",
            Arch::WideDeep { .. } => "wide_deep",
            Arch::TabnetLite { .. } => "tabnet_lite",
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let bad = |m: &str| Err(crate::Error::InvalidConfig(m.to_string()));
        let drop_ok = |d: f64| (0.0..1.0).contains(&d);
        match self {
            Arch::Dnn { hidden, dropout, .. } | Arch::WideDeep { hidden, dropout, .. } => {
                if hidden.is_empty() || hidden.contains(&0) {
                    return bad("hidden layer widths must be positive");
                }
                if !drop_ok(*dropout) {
                    return bad("dropout must be in [0, 1)");
                }
            }
            Arch::ResnetMlp { width, depth, dropout, .. } => {
                if *width == 0 || *depth == 0 || !drop_ok(*dropout) {
                    return bad("resnet needs width, depth ≥ 1 and dropout in [0, 1)");
                }
            }
            Arch::TabnetLite { feature_dim, n_steps, gamma_relax, sparsity, .. } => {
                if *feature_dim == 0 || *n_steps == 0 || !(*gamma_relax >= 1.0) || !(*sparsity >= 0.0) {
                    return bad("tabnet needs feature_dim, n_steps ≥ 1, gamma_relax ≥ 1, sparsity ≥ 0");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    #[serde(default)]
    pub frozen: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Store {
    pub params: Vec<Param>,
    pub bn: Vec<BnStats>,
}

#[derive(Clone, Copy)]
enum Init {
    /// He-uniform on fan-in.
    He(usize),
    Zeros,
    Ones,
}

enum StoreRef<'a> {
    Mut(&'a mut Store),
    Ref(&'a Store),
}

impl StoreRef<'_> {
    fn get(&self) -> &Store {
        match self {
            StoreRef::Mut(s) => s,
            StoreRef::Ref(s) => s,
        }
    }
}

/// Per-call forward context.
pub struct Fwd<'a> {
    pub g: Graph,
    store: StoreRef<'a>,
    cursor: usize,
    bn_cursor: usize,
    init: Rng,
    pub train: bool,
    dropout: Rng,
    /// Graph variable of each store parameter, by store index.
    pub param_vars: Vec<Var>,
    /// Batch statistics observed in train mode, by bn index.
    pub batch_stats: Vec<(Vec<f64>, Vec<f64>)>,
    /// Sparsemax masks per step (tabnet only).
    pub masks: Vec<Var>,
    /// Scalar regularization terms to add to the loss.
    pub penalties: Vec<Var>,
}

impl<'a> Fwd<'a> {
    /// Training / initializing pass: missing parameters are created.
    pub fn new(store: &'a mut Store, train: bool, init_seed: u64, dropout_seed: u64) -> Fwd<'a> {
        Self::build(StoreRef::Mut(store), train, init_seed, dropout_seed)
    }

    /// Inference pass over a complete store.
    pub fn infer(store: &'a Store) -> Fwd<'a> {
        Self::build(StoreRef::Ref(store), false, 0, 0)
    }

    fn build(store: StoreRef<'a>, train: bool, init_seed: u64, dropout_seed: u64) -> Fwd<'a> {
        Fwd {
            g: Graph::new(),
            store,
            cursor: 0,
            bn_cursor: 0,
            init: crate::rng::rng(init_seed),
            train,
            dropout: crate::rng::rng(dropout_seed),
            param_vars: Vec::new(),
            batch_stats: Vec::new(),
            masks: Vec::new(),
            penalties: Vec::new(),
        }
    }

    fn param(&mut self, name: &str, rows: usize, cols: usize, init: Init, frozen: bool) -> Var {
        if self.cursor == self.store.get().params.len() {
            let StoreRef::Mut(store) = &mut self.store else {
                panic!("parameter {name} missing from a fitted network");
            };
            let values = match init {
                Init::He(fan_in) => {
                    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
                    (0..rows * cols).map(|_| self.init.random_range(-bound..bound)).collect()
                }
                Init::Zeros => vec![0.0; rows * cols],
                Init::Ones => vec![1.0; rows * cols],
            };
            store.params.push(Param { name: name.to_string(), rows, cols, values, frozen });
        }
        let p = &self.store.get().params[self.cursor];
        assert_eq!((p.rows, p.cols), (rows, cols), "parameter {} shape changed", p.name);
        let v = self.g.leaf(rows, cols, p.values.clone());
        self.param_vars.push(v);
        self.cursor += 1;
        v
    }

    pub fn dense(&mut self, x: Var, out: usize, name: &str) -> Var {
        self.dense_frozen(x, out, name, false)
    }

    fn dense_frozen(&mut self, x: Var, out: usize, name: &str, frozen: bool) -> Var {
        let [_, k] = self.g.shape(x);
        let init = if frozen { Init::Zeros } else { Init::He(k) };
        let w = self.param(&format!("{name}.w"), k, out, init, frozen);
        let b = self.param(&format!("{name}.b"), 1, out, Init::Zeros, frozen);
        let h = self.g.matmul(x, w);
        self.g.add_bias(h, b)
    }

    pub fn batch_norm(&mut self, x: Var, name: &str) -> Var {
        let [n, m] = self.g.shape(x);
        let gamma = self.param(&format!("{name}.gamma"), 1, m, Init::Ones, false);
        let beta = self.param(&format!("{name}.beta"), 1, m, Init::Zeros, false);
        if self.bn_cursor == self.store.get().bn.len() {
            let StoreRef::Mut(store) = &mut self.store else {
                panic!("batch-norm statistics missing from a fitted network");
            };
            store.bn.push(BnStats { mean: vec![0.0; m], var: vec![1.0; m] });
        }
        let k = self.bn_cursor;
        self.bn_cursor += 1;
        if self.train && n > 1 {
            let (y, mean, var) = self.g.batch_norm_train(x, gamma, beta);
            self.batch_stats.push((mean, var));
            y
        } else {
            self.batch_stats.push((Vec::new(), Vec::new()));
            let s = &self.store.get().bn[k];
            let (mean, var) = (s.mean.clone(), s.var.clone());
            self.g.batch_norm_infer(x, gamma, beta, &mean, &var)
        }
    }

    pub fn dropout(&mut self, x: Var, rate: f64) -> Var {
        if !self.train || rate <= 0.0 {
            return x;
        }
        let len = self.g.value(x).len();
        let keep = 1.0 - rate;
        let mask = (0..len).map(|_| if self.dropout.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
        self.g.mul_const(x, mask)
    }

    /// dense → batch norm → leaky ReLU → dropout.
    fn block(&mut self, x: Var, out: usize, dropout: f64, slope: f64, name: &str) -> Var {
        let h = self.dense(x, out, name);
        let h = self.batch_norm(h, &format!("{name}.bn"));
        let h = self.g.leaky_relu(h, slope);
        self.dropout(h, dropout)
    }

    fn mlp(&mut self, x: Var, hidden: &[usize], dropout: f64, slope: f64, prefix: &str) -> Var {
        let mut h = x;
        for (i, &w) in hidden.iter().enumerate() {
            h = self.block(h, w, dropout, slope, &format!("{prefix}{i}"));
        }
        h
    }

    /// Logits column (n×1) for input `x` (n×p).
    pub fn logits(&mut self, arch: &Arch, x: Var) -> Var {
        match arch {
            Arch::Dnn { hidden, dropout, slope } => {
                let h = self.mlp(x, hidden, *dropout, *slope, "hidden");
                self.dense(h, 1, "head")
            }
            Arch::ResnetMlp { width, depth, dropout, slope } => {
                let mut h = self.dense(x, *width, "proj");
                for d in 0..*depth {
                    let r = self.block(h, *width, *dropout, *slope, &format!("res{d}"));
                    h = self.g.add(h, r);
                }
                self.dense(h, 1, "head")
            }
            Arch::WideDeep { hidden, dropout, slope, freeze_deep } => {
                let wide = self.dense(x, 1, "wide");
                let h = self.mlp(x, hidden, *dropout, *slope, "deep");
                let deep = self.dense_frozen(h, 1, "deep_head", *freeze_deep);
                self.g.add(wide, deep)
            }
            Arch::TabnetLite { feature_dim, n_steps, gamma_relax, sparsity, slope } => {
                self.tabnet(x, *feature_dim, *n_steps, *gamma_relax, *sparsity, *slope)
            }
        }
    }

    /// Feature transformer: shared dense+bn+act, then step-specific dense+bn+act.
    fn transformer(&mut self, x: Var, width: usize, slope: f64, step: usize) -> Var {
        let h = self.dense_shared(x, width, "shared");
        let h = self.batch_norm(h, &format!("ft{step}.bn0"));
        let h = self.g.leaky_relu(h, slope);
        let h = self.dense(h, width, &format!("ft{step}.dense"));
        let h = self.batch_norm(h, &format!("ft{step}.bn1"));
        self.g.leaky_relu(h, slope)
    }

    /// A dense layer whose parameters are created once and reused by every
    /// later call with the same name.
    fn dense_shared(&mut self, x: Var, out: usize, name: &str) -> Var {
        let key_w = format!("{name}.w");
        match self.store.get().params.iter().position(|p| p.name == key_w) {
            Some(pos) if self.param_vars.len() > pos => {
                let w = self.param_vars[pos];
                let b = self.param_vars[pos + 1];
                let h = self.g.matmul(x, w);
                self.g.add_bias(h, b)
            }
            _ => self.dense(x, out, name),
        }
    }

    fn tabnet(&mut self, x: Var, fd: usize, n_steps: usize, gamma: f64, sparsity: f64, slope: f64) -> Var {
        let [n, p] = self.g.shape(x);
        let width = 2 * fd;
        let t0 = self.transformer(x, width, slope, 0);
        let mut att = self.g.slice_cols(t0, fd, width);
        let ones = self.g.leaf(n, p, vec![1.0; n * p]);
        let mut prior = ones;
        let mut agg: Option<Var> = None;
        let mut entropies: Vec<Var> = Vec::new();
        for s in 1..=n_steps {
            let a = self.dense(att, p, &format!("att{s}"));
            let z = self.g.mul(a, prior);
            let allowed: Vec<bool> = self.g.value(prior).iter().map(|&v| v > 0.0).collect();
            let mask = self.g.sparsemax_where(z, Some(&allowed));
            self.masks.push(mask);
            entropies.push(self.g.mean_entropy(mask));
            let relax = self.g.scale_shift(mask, -1.0, gamma);
            prior = self.g.mul(prior, relax);
            let xm = self.g.mul(mask, x);
            let t = self.transformer(xm, width, slope, s);
            let d = self.g.slice_cols(t, 0, fd);
            let d = self.g.relu(d);
            agg = Some(match agg {
                Some(prev) => self.g.add(prev, d),
                None => d,
            });
            att = self.g.slice_cols(t, fd, width);
        }
        if sparsity > 0.0 {
            let mut total = entropies[0];
            for &e in &entropies[1..] {
                total = self.g.add(total, e);
            }
            let pen = self.g.scale_shift(total, sparsity / n_steps as f64, 0.0);
            self.penalties.push(pen);
        }
        self.dense(agg.expect("n_steps ≥ 1"), 1, "head")
    }
}
