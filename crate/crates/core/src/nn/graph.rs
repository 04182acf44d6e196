//! Tape-based reverse-mode autodiff over row-major 2-D tensors.

use crate::error::{Error, Result};
use crate::models::{log1p_exp, sigmoid};

use super::sparsemax::sparsemax_masked;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Tensor {
        assert_eq!(values.len(), rows * cols, "tensor shape mismatch");
        Tensor { rows, cols, grad: vec![0.0; values.len()], values }
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Vec<f64>),
    ScaleShift(Var, f64),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Concat(Var, Var),
    SliceCols(Var, usize),
    Sum(Var),
    /// Cached normalized input and per-column inverse std.
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64>, train: bool },
    Sparsemax(Var),
    BceLogits { z: Var, target: Vec<f64>, weight: Vec<f64> },
    MeanEntropy(Var),
}

/// Recorded computation. Values are computed eagerly; `backward` fills
/// gradients for every node.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<(Tensor, Op)>,
}

pub const BN_EPS: f64 = 1e-5;
pub const ENTROPY_EPS: f64 = 1e-15;

impl Graph {
    pub fn new() -> Graph {
        Graph::default()
    }

    fn push(&mut self, t: Tensor, op: Op) -> Var {
        self.nodes.push((t, op));
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Var {
        self.push(Tensor::new(rows, cols, values), Op::Leaf)
    }

    pub fn tensor(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].0
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].0.values
    }

    pub fn grad(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].0.grad
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].0.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let ([n, k], [k2, m]) = (self.shape(a), self.shape(b));
        assert_eq!(k, k2, "matmul inner dimension");
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let o = &mut out[i * m..(i + 1) * m];
            for t in 0..k {
                let x = av[i * k + t];
                if x == 0.0 {
                    continue;
                }
                for (oj, bj) in o.iter_mut().zip(&bv[t * m..(t + 1) * m]) {
                    *oj += x * bj;
                }
            }
        }
        self.push(Tensor::new(n, m, out), Op::MatMul(a, b))
    }

    /// `a` (n×m) plus a 1×m row broadcast over rows.
    pub fn add_bias(&mut self, a: Var, b: Var) -> Var {
        let [n, m] = self.shape(a);
        assert_eq!(self.shape(b), [1, m], "bias shape");
        let bv = self.value(b);
        let out: Vec<f64> = self.value(a).iter().enumerate().map(|(i, x)| x + bv[i % m]).collect();
        self.push(Tensor::new(n, m, out), Op::AddBias(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape");
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let [n, m] = self.shape(a);
        self.push(Tensor::new(n, m, out), Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shape");
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let [n, m] = self.shape(a);
        self.push(Tensor::new(n, m, out), Op::Mul(a, b))
    }

    /// Elementwise product with a constant (e.g. a dropout mask).
    pub fn mul_const(&mut self, a: Var, c: Vec<f64>) -> Var {
        assert_eq!(c.len(), self.value(a).len(), "mul_const shape");
        let out = self.value(a).iter().zip(&c).map(|(x, y)| x * y).collect();
        let [n, m] = self.shape(a);
        self.push(Tensor::new(n, m, out), Op::MulConst(a, c))
    }

    /// `s·a + c`.
    pub fn scale_shift(&mut self, a: Var, s: f64, c: f64) -> Var {
        let out = self.value(a).iter().map(|x| s * x + c).collect();
        let [n, m] = self.shape(a);
        self.push(Tensor::new(n, m, out), Op::ScaleShift(a, s))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = self.value(a).iter().map(|&x| if x > 0.0 { x } else { slope * x }).collect();
        let [n, m] = self.shape(a);
        self.push(Tensor::new(n, m, out), Op::LeakyRelu(a, slope))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.leaky_relu(a, 0.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        let [n, m] = self.shape(a);
        self.push(Tensor::new(n, m, out), Op::Sigmoid(a))
    }

    /// Column-wise concatenation.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let ([n, ma], [n2, mb]) = (self.shape(a), self.shape(b));
        assert_eq!(n, n2, "concat rows");
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = Vec::with_capacity(n * (ma + mb));
        for i in 0..n {
            out.extend_from_slice(&av[i * ma..(i + 1) * ma]);
            out.extend_from_slice(&bv[i * mb..(i + 1) * mb]);
        }
        self.push(Tensor::new(n, ma + mb, out), Op::Concat(a, b))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let [n, m] = self.shape(a);
        assert!(start < end && end <= m, "slice bounds");
        let av = self.value(a);
        let mut out = Vec::with_capacity(n * (end - start));
        for i in 0..n {
            out.extend_from_slice(&av[i * m + start..i * m + end]);
        }
        self.push(Tensor::new(n, end - start, out), Op::SliceCols(a, start))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(Tensor::new(1, 1, vec![s]), Op::Sum(a))
    }

    /// Batch normalization with batch statistics; returns the output and the
    /// batch mean / biased variance for running-average updates.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var) -> (Var, Vec<f64>, Vec<f64>) {
        let [n, m] = self.shape(x);
        let xv = self.value(x);
        let mut mean = vec![0.0; m];
        let mut var = vec![0.0; m];
        for i in 0..n {
            for j in 0..m {
                mean[j] += xv[i * m + j];
            }
        }
        mean.iter_mut().for_each(|v| *v /= n as f64);
        for i in 0..n {
            for j in 0..m {
                let d = xv[i * m + j] - mean[j];
                var[j] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= n as f64);
        let (out, xhat, inv_std) = self.bn_eval(x, gamma, beta, &mean, &var);
        let v = self.push(Tensor::new(n, m, out), Op::BatchNorm { x, gamma, beta, xhat, inv_std, train: true });
        (v, mean, var)
    }

    /// Batch normalization with fixed (running) statistics.
    pub fn batch_norm_infer(&mut self, x: Var, gamma: Var, beta: Var, mean: &[f64], var: &[f64]) -> Var {
        let [n, m] = self.shape(x);
        let (out, xhat, inv_std) = self.bn_eval(x, gamma, beta, mean, var);
        self.push(Tensor::new(n, m, out), Op::BatchNorm { x, gamma, beta, xhat, inv_std, train: false })
    }

    fn bn_eval(&self, x: Var, gamma: Var, beta: Var, mean: &[f64], var: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let [_, m] = self.shape(x);
        assert_eq!(self.shape(gamma), [1, m], "gamma shape");
        assert_eq!(self.shape(beta), [1, m], "beta shape");
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let (g, b) = (self.value(gamma), self.value(beta));
        let xhat: Vec<f64> = self.value(x).iter().enumerate().map(|(i, v)| (v - mean[i % m]) * inv_std[i % m]).collect();
        let out = xhat.iter().enumerate().map(|(i, h)| g[i % m] * h + b[i % m]).collect();
        (out, xhat, inv_std)
    }

    /// Row-wise sparsemax.
    pub fn sparsemax(&mut self, a: Var) -> Var {
        self.sparsemax_where(a, None)
    }

    /// Row-wise sparsemax over entries where `allowed` (same shape) is true.
    pub fn sparsemax_where(&mut self, a: Var, allowed: Option<&[bool]>) -> Var {
        let [n, m] = self.shape(a);
        let av = self.value(a);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            sparsemax_masked(&av[i * m..(i + 1) * m], allowed.map(|al| &al[i * m..(i + 1) * m]), &mut out[i * m..(i + 1) * m]);
        }
        self.push(Tensor::new(n, m, out), Op::Sparsemax(a))
    }

    /// Weighted binary cross-entropy on logits, averaged over rows.
    pub fn bce_logits(&mut self, z: Var, target: Vec<f64>, weight: Option<Vec<f64>>) -> Var {
        let [n, m] = self.shape(z);
        assert_eq!(m, 1, "logits must be a column");
        assert_eq!(target.len(), n, "target length");
        let weight = weight.unwrap_or_else(|| vec![1.0; n]);
        let zv = self.value(z);
        let loss = (0..n).map(|i| weight[i] * (log1p_exp(zv[i]) - target[i] * zv[i])).sum::<f64>() / n as f64;
        self.push(Tensor::new(1, 1, vec![loss]), Op::BceLogits { z, target, weight })
    }

    /// Mean over rows of `−Σ m log(m + ε)`.
    pub fn mean_entropy(&mut self, a: Var) -> Var {
        let [n, _] = self.shape(a);
        let h = -self.value(a).iter().map(|&m| m * (m + ENTROPY_EPS).ln()).sum::<f64>() / n as f64;
        self.push(Tensor::new(1, 1, vec![h]), Op::MeanEntropy(a))
    }

    /// Clears gradients and back-propagates from the scalar `out`.
    pub fn backward(&mut self, out: Var) -> Result<()> {
        let shape = self.shape(out);
        if shape != [1, 1] {
            return Err(Error::NonScalarOutput(shape.to_vec()));
        }
        for (t, _) in &mut self.nodes {
            t.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        self.nodes[out.0].0.grad[0] = 1.0;
        for k in (0..=out.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(k);
            let (node, op) = &rest[0];
            let dy = &node.grad;
            if dy.iter().all(|&g| g == 0.0) {
                continue;
            }
            let y = &node.values;
            let g = |v: &Var| v.0;
            match op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (n, m) = (node.rows, node.cols);
                    let k_ = before[g(a)].0.cols;
                    let av = before[g(a)].0.values.clone();
                    let bv = before[g(b)].0.values.clone();
                    {
                        let ga = &mut before[g(a)].0.grad;
                        for i in 0..n {
                            for t in 0..k_ {
                                let mut s = 0.0;
                                for j in 0..m {
                                    s += dy[i * m + j] * bv[t * m + j];
                                }
                                ga[i * k_ + t] += s;
                            }
                        }
                    }
                    let gb = &mut before[g(b)].0.grad;
                    for i in 0..n {
                        let row = &dy[i * m..(i + 1) * m];
                        for t in 0..k_ {
                            let x = av[i * k_ + t];
                            if x == 0.0 {
                                continue;
                            }
                            for (gbj, d) in gb[t * m..(t + 1) * m].iter_mut().zip(row) {
                                *gbj += x * d;
                            }
                        }
                    }
                }
                Op::AddBias(a, b) => {
                    let m = node.cols;
                    before[g(a)].0.grad.iter_mut().zip(dy).for_each(|(x, d)| *x += d);
                    let gb = &mut before[g(b)].0.grad;
                    for (i, d) in dy.iter().enumerate() {
                        gb[i % m] += d;
                    }
                }
                Op::Add(a, b) => {
                    before[g(a)].0.grad.iter_mut().zip(dy).for_each(|(x, d)| *x += d);
                    before[g(b)].0.grad.iter_mut().zip(dy).for_each(|(x, d)| *x += d);
                }
                Op::Mul(a, b) => {
                    let av = before[g(a)].0.values.clone();
                    let bv = before[g(b)].0.values.clone();
                    before[g(a)].0.grad.iter_mut().enumerate().for_each(|(i, x)| *x += dy[i] * bv[i]);
                    before[g(b)].0.grad.iter_mut().enumerate().for_each(|(i, x)| *x += dy[i] * av[i]);
                }
                Op::MulConst(a, c) => {
                    before[g(a)].0.grad.iter_mut().enumerate().for_each(|(i, x)| *x += dy[i] * c[i]);
                }
                Op::ScaleShift(a, s) => {
                    before[g(a)].0.grad.iter_mut().zip(dy).for_each(|(x, d)| *x += s * d);
                }
                Op::LeakyRelu(a, slope) => {
                    let (src, grad) = {
                        let t = &mut before[g(a)].0;
                        (&t.values, &mut t.grad)
                    };
                    for i in 0..dy.len() {
                        grad[i] += if src[i] > 0.0 { dy[i] } else { slope * dy[i] };
                    }
                }
                Op::Sigmoid(a) => {
                    before[g(a)].0.grad.iter_mut().enumerate().for_each(|(i, x)| *x += dy[i] * y[i] * (1.0 - y[i]));
                }
                Op::Concat(a, b) => {
                    let ma = before[g(a)].0.cols;
                    let m = node.cols;
                    let mb = m - ma;
                    for i in 0..node.rows {
                        for j in 0..ma {
                            before[g(a)].0.grad[i * ma + j] += dy[i * m + j];
                        }
                        for j in 0..mb {
                            before[g(b)].0.grad[i * mb + j] += dy[i * m + ma + j];
                        }
                    }
                }
                Op::SliceCols(a, start) => {
                    let ma = before[g(a)].0.cols;
                    let w = node.cols;
                    let ga = &mut before[g(a)].0.grad;
                    for i in 0..node.rows {
                        for j in 0..w {
                            ga[i * ma + start + j] += dy[i * w + j];
                        }
                    }
                }
                Op::Sum(a) => {
                    let d = dy[0];
                    before[g(a)].0.grad.iter_mut().for_each(|x| *x += d);
                }
                Op::BatchNorm { x, gamma, beta, xhat, inv_std, train } => {
                    let (n, m) = (node.rows, node.cols);
                    let gam = before[g(gamma)].0.values.clone();
                    let mut sum_dy = vec![0.0; m];
                    let mut sum_dy_xhat = vec![0.0; m];
                    for i in 0..n * m {
                        sum_dy[i % m] += dy[i];
                        sum_dy_xhat[i % m] += dy[i] * xhat[i];
                    }
                    before[g(beta)].0.grad.iter_mut().zip(&sum_dy).for_each(|(a, b)| *a += b);
                    before[g(gamma)].0.grad.iter_mut().zip(&sum_dy_xhat).for_each(|(a, b)| *a += b);
                    let gx = &mut before[g(x)].0.grad;
                    let nf = n as f64;
                    for i in 0..n * m {
                        let j = i % m;
                        gx[i] += if *train {
                            gam[j] * inv_std[j] / nf * (nf * dy[i] - sum_dy[j] - xhat[i] * sum_dy_xhat[j])
                        } else {
                            gam[j] * inv_std[j] * dy[i]
                        };
                    }
                }
                Op::Sparsemax(a) => {
                    let m = node.cols;
                    let ga = &mut before[g(a)].0.grad;
                    for i in 0..node.rows {
                        let yr = &y[i * m..(i + 1) * m];
                        let dr = &dy[i * m..(i + 1) * m];
                        let (mut s, mut c) = (0.0, 0.0);
                        for j in 0..m {
                            if yr[j] > 0.0 {
                                s += dr[j];
                                c += 1.0;
                            }
                        }
                        let mean = if c > 0.0 { s / c } else { 0.0 };
                        for j in 0..m {
                            if yr[j] > 0.0 {
                                ga[i * m + j] += dr[j] - mean;
                            }
                        }
                    }
                }
                Op::BceLogits { z, target, weight } => {
                    let d = dy[0];
                    let t = &mut before[g(z)].0;
                    let n = t.rows as f64;
                    for i in 0..t.rows {
                        t.grad[i] += d * weight[i] * (sigmoid(t.values[i]) - target[i]) / n;
                    }
                }
                Op::MeanEntropy(a) => {
                    let d = dy[0];
                    let t = &mut before[g(a)].0;
                    let n = t.rows as f64;
                    for i in 0..t.values.len() {
                        let m = t.values[i];
                        t.grad[i] += -d * ((m + ENTROPY_EPS).ln() + m / (m + ENTROPY_EPS)) / n;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(1, 1, vec![3.0]);
        let y = g.mul(x, x);
        g.backward(y).unwrap();
        assert_eq!(g.grad(x), &[6.0]);
    }

    #[test]
    fn non_scalar_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(1, 2, vec![1.0, 2.0]);
        assert!(matches!(g.backward(x), Err(Error::NonScalarOutput(s)) if s == vec![1, 2]));
    }

    #[test]
    fn bce_gradient_zero_at_target() {
        let mut g = Graph::new();
        let z = g.leaf(2, 1, vec![0.3, -1.2]);
        let t = vec![sigmoid(0.3), sigmoid(-1.2)];
        let l = g.bce_logits(z, t, None);
        g.backward(l).unwrap();
        assert!(g.grad(z).iter().all(|v| v.abs() < 1e-15));
    }
}
