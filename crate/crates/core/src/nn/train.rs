//! Mini-batch SGD with momentum, inference and TabNet mask extraction.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::arch::{Arch, Fwd, Store};
use super::graph::Var;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::sigmoid;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NnParams {
    pub arch: Arch,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Weight positives by `n_neg / n_pos`.
    pub pos_weight: bool,
    /// Global gradient-norm clip (`None` disables).
    pub clip_norm: Option<f64>,
}

impl Default for NnParams {
    fn default() -> Self {
        Self { arch: Arch::dnn(), epochs: 60, batch_size: 64, lr: 0.05, momentum: 0.9, pos_weight: false, clip_norm: Some(5.0) }
    }
}

impl NnParams {
    pub fn with_arch(arch: Arch) -> Self {
        Self { arch, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnModel {
    pub arch: Arch,
    pub n_features: usize,
    pub store: Store,
    /// Mean training loss per epoch.
    pub train_loss: Vec<f64>,
}

const BN_MOMENTUM: f64 = 0.1;
const INFER_CHUNK: usize = 512;

fn init_seed(seed: u64) -> u64 {
    rng::derive_seed(seed, 0x1417)
}

/// Forward + loss on one batch in train mode; returns the context and the loss var.
#[allow(clippy::too_many_arguments)]
fn batch_loss<'a>(store: &'a mut Store, arch: &Arch, x: &[f64], p: usize, y: &[f64], w: Option<Vec<f64>>, seed: u64, drop_seed: u64) -> (Fwd<'a>, Var) {
    let n = y.len();
    let mut f = Fwd::new(store, true, init_seed(seed), drop_seed);
    let xv = f.g.leaf(n, p, x.to_vec());
    let z = f.logits(arch, xv);
    let mut loss = f.g.bce_logits(z, y.to_vec(), w);
    for pen in f.penalties.clone() {
        loss = f.g.add(loss, pen);
    }
    (f, loss)
}

pub fn fit_nn(ds: &Dataset, params: &NnParams, seed: u64) -> Result<NnModel> {
    params.arch.validate()?;
    if params.epochs == 0 || params.batch_size == 0 {
        return Err(Error::InvalidConfig("epochs and batch_size must be at least 1".into()));
    }
    if !(params.lr > 0.0) || !(0.0..1.0).contains(&params.momentum) {
        return Err(Error::InvalidConfig("lr must be positive and momentum in [0, 1)".into()));
    }
    let (n, p) = (ds.n_rows(), ds.n_cols());
    let pos = ds.positives();
    if pos == 0 || pos == n {
        return Err(Error::SingleClassDataset { positives: pos, negatives: n - pos });
    }
    let pw = if params.pos_weight { (n - pos) as f64 / pos as f64 } else { 1.0 };
    let mut store = Store::default();
    let mut velocity: Vec<Vec<f64>> = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle = rng::sub_rng(seed, 0x5b0f);
    let mut train_loss = Vec::with_capacity(params.epochs);
    let mut step = 0u64;
    let mut xb = Vec::with_capacity(params.batch_size * p);
    for epoch in 0..params.epochs {
        let lr = params.lr * 0.5f64.powi((4 * epoch / params.epochs) as i32);
        order.shuffle(&mut shuffle);
        let (mut sum, mut cnt) = (0.0, 0usize);
        for chunk in order.chunks(params.batch_size) {
            // Batch statistics are undefined for a single row.
            if chunk.len() < 2 {
                continue;
            }
            xb.clear();
            for &i in chunk {
                xb.extend_from_slice(ds.row(i));
            }
            let yb: Vec<f64> = chunk.iter().map(|&i| f64::from(ds.labels()[i])).collect();
            let wb = params.pos_weight.then(|| yb.iter().map(|&t| if t > 0.0 { pw } else { 1.0 }).collect());
            step += 1;
            let (mut f, loss) = batch_loss(&mut store, &params.arch, &xb, p, &yb, wb, seed, rng::derive_seed(seed, 1 << 32 | step));
            let lv = f.g.value(loss)[0];
            if !lv.is_finite() {
                return Err(Error::DivergenceDetected { epoch, loss: lv });
            }
            f.g.backward(loss)?;
            let grads: Vec<Vec<f64>> = f.param_vars.iter().map(|&v| f.g.grad(v).to_vec()).collect();
            let stats = std::mem::take(&mut f.batch_stats);
            drop(f);
            let scale = match params.clip_norm {
                Some(c) => {
                    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
                    if norm > c { c / norm } else { 1.0 }
                }
                None => 1.0,
            };
            if velocity.is_empty() {
                velocity = store.params.iter().map(|q| vec![0.0; q.values.len()]).collect();
            }
            for ((q, v), g) in store.params.iter_mut().zip(&mut velocity).zip(&grads) {
                if q.frozen {
                    continue;
                }
                for k in 0..v.len() {
                    v[k] = params.momentum * v[k] - lr * scale * g[k];
                    q.values[k] += v[k];
                }
            }
            let m = chunk.len() as f64;
            for (bn, (mean, var)) in store.bn.iter_mut().zip(stats) {
                if mean.is_empty() {
                    continue;
                }
                for j in 0..mean.len() {
                    bn.mean[j] = (1.0 - BN_MOMENTUM) * bn.mean[j] + BN_MOMENTUM * mean[j];
                    bn.var[j] = (1.0 - BN_MOMENTUM) * bn.var[j] + BN_MOMENTUM * var[j] * m / (m - 1.0);
                }
            }
            sum += lv * m;
            cnt += chunk.len();
        }
        let epoch_loss = if cnt > 0 { sum / cnt as f64 } else { f64::NAN };
        if !epoch_loss.is_finite() {
            return Err(Error::DivergenceDetected { epoch, loss: epoch_loss });
        }
        train_loss.push(epoch_loss);
    }
    Ok(NnModel { arch: params.arch.clone(), n_features: p, store, train_loss })
}

impl NnModel {
    /// Logits for `n` rows of row-major `x` in inference mode.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let p = self.n_features;
        let mut out = Vec::with_capacity(x.len() / p.max(1));
        for chunk in x.chunks(INFER_CHUNK * p) {
            let n = chunk.len() / p;
            let mut f = Fwd::infer(&self.store);
            let xv = f.g.leaf(n, p, chunk.to_vec());
            let z = f.logits(&self.arch, xv);
            out.extend_from_slice(f.g.value(z));
        }
        out
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.logits(x).into_iter().map(sigmoid).collect()
    }

    pub fn score_row(&self, row: &[f64]) -> f64 {
        self.predict(row)[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabnetMasks {
    pub n_rows: usize,
    pub n_features: usize,
    /// `masks[step]` is a row-major `n_rows × n_features` matrix.
    pub masks: Vec<Vec<f64>>,
    /// Mask mass summed over steps and rows, normalized to 1.
    pub importance: Vec<f64>,
}

pub fn tabnet_masks(model: &NnModel, ds: &Dataset) -> Result<TabnetMasks> {
    if !matches!(model.arch, Arch::TabnetLite { .. }) {
        return Err(Error::WrongArchitecture { expected: "tabnet_lite" });
    }
    let p = model.n_features;
    if ds.n_cols() != p {
        return Err(Error::DimensionMismatch { expected: p, got: ds.n_cols() });
    }
    let mut masks: Vec<Vec<f64>> = Vec::new();
    for chunk in ds.features().chunks(INFER_CHUNK * p) {
        let n = chunk.len() / p;
        let mut f = Fwd::infer(&model.store);
        let xv = f.g.leaf(n, p, chunk.to_vec());
        f.logits(&model.arch, xv);
        if masks.is_empty() {
            masks = vec![Vec::with_capacity(ds.n_rows() * p); f.masks.len()];
        }
        for (s, &m) in f.masks.iter().enumerate() {
            masks[s].extend_from_slice(f.g.value(m));
        }
    }
    let mut importance = vec![0.0; p];
    for m in &masks {
        for (i, v) in m.iter().enumerate() {
            importance[i % p] += v;
        }
    }
    let total: f64 = importance.iter().sum();
    if total > 0.0 {
        importance.iter_mut().for_each(|v| *v /= total);
    }
    Ok(TabnetMasks { n_rows: ds.n_rows(), n_features: p, masks, importance })
}

/// Largest relative error between back-propagated and central-difference
/// gradients at `points` randomly chosen parameter coordinates of a freshly
/// initialized network (train mode, fixed dropout masks).
pub fn param_gradient_check(arch: &Arch, ds: &Dataset, seed: u64, points: usize, h: f64) -> f64 {
    use rand::Rng as _;
    let p = ds.n_cols();
    let y = ds.labels_f64();
    let x = ds.features().to_vec();
    let drop_seed = rng::derive_seed(seed, 77);
    let mut store = Store::default();
    let (mut f, loss) = batch_loss(&mut store, arch, &x, p, &y, None, seed, drop_seed);
    f.g.backward(loss).expect("scalar loss");
    let grads: Vec<Vec<f64>> = f.param_vars.iter().map(|&v| f.g.grad(v).to_vec()).collect();
    drop(f);
    let mut r = rng::sub_rng(seed, 0x6c);
    let mut worst: f64 = 0.0;
    let eval = |store: &mut Store| {
        let (f, loss) = batch_loss(store, arch, &x, p, &y, None, seed, drop_seed);
        f.g.value(loss)[0]
    };
    for _ in 0..points {
        let k = r.random_range(0..store.params.len());
        let j = r.random_range(0..store.params[k].values.len());
        let orig = store.params[k].values[j];
        store.params[k].values[j] = orig + h;
        let up = eval(&mut store);
        store.params[k].values[j] = orig - h;
        let down = eval(&mut store);
        store.params[k].values[j] = orig;
        let num = (up - down) / (2.0 * h);
        let ana = grads[k][j];
        let rel = (num - ana).abs() / num.abs().max(ana.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}
