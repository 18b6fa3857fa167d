//! A small reverse-mode tape over 2-D matrices.
//!
//! Nodes are appended in evaluation order, so backward is a single reverse
//! sweep. Parameter leaves borrow their value from the [`ParamSet`] instead of
//! copying it, and their gradients land in a [`Grads`] keyed by [`ParamId`].

use std::collections::HashMap;

use rand::Rng;

use super::{sigmoid, Grads, Matrix, ParamId, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Value {
    Owned(Matrix),
    Param(ParamId),
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix,
        rstd: Vec<f64>,
    },
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    Gather(Var, Vec<usize>),
    Im2Col {
        x: Var,
        seg: usize,
        k: usize,
    },
    MaxPoolGroups {
        x: Var,
        argmax: Vec<usize>,
    },
    MeanRows(Var),
    StraightThrough(Var),
    SoftmaxXentDiag {
        x: Var,
        probs: Matrix,
    },
    BceLogits {
        x: Var,
        targets: Matrix,
    },
}

struct Node {
    value: Value,
    op: Op,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

pub struct Graph<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        match &self.nodes[v.0].value {
            Value::Owned(m) => m,
            Value::Param(id) => self.params.get(*id),
        }
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Leaf,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul_t(self.value(b));
        self.push(out, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    /// Adds the `1 x n` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let bias = self.value(b);
        assert_eq!(bias.rows, 1);
        assert_eq!(bias.cols, self.value(a).cols);
        let mut out = self.value(a).clone();
        for r in 0..out.rows {
            for (o, &x) in out.row_mut(r).iter_mut().zip(&bias.data) {
                *o += x;
            }
        }
        self.push(out, Op::AddRow(a, b))
    }

    /// `x · w + b`
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul(x, w);
        self.add_row(xw, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape());
        let data = va.data.iter().zip(&vb.data).map(|(x, y)| x * y).collect();
        let out = Matrix::from_vec(va.rows, va.cols, data);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x * c);
        self.push(out, Op::Scale(a, c))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| 1.0 - x);
        self.push(out, Op::OneMinus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = softmax_rows(self.value(a));
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Per-row layer normalization with learned `1 x n` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let vx = self.value(x);
        let (g, b) = (self.value(gamma), self.value(beta));
        let n = vx.cols as f64;
        let mut xhat = Matrix::zeros(vx.rows, vx.cols);
        let mut out = Matrix::zeros(vx.rows, vx.cols);
        let mut rstd = Vec::with_capacity(vx.rows);
        for r in 0..vx.rows {
            let row = vx.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd.push(s);
            for c in 0..vx.cols {
                let h = (row[c] - mean) * s;
                xhat.set(r, c, h);
                out.set(r, c, h * g.data[c] + b.data[c]);
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                out.row_mut(r)[offset..offset + v.cols].copy_from_slice(v.row(r));
            }
            offset += v.cols;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Var {
        let v = self.value(a);
        assert!(start + width <= v.cols);
        let mut out = Matrix::zeros(v.rows, width);
        for r in 0..v.rows {
            out.row_mut(r).copy_from_slice(&v.row(r)[start..start + width]);
        }
        self.push(out, Op::SliceCols(a, start))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols, cols, "concat_rows col mismatch");
            data.extend_from_slice(&v.data);
            rows += v.rows;
        }
        self.push(Matrix::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, count: usize) -> Var {
        let v = self.value(a);
        assert!(start + count <= v.rows);
        let out = Matrix::from_vec(count, v.cols, v.data[start * v.cols..(start + count) * v.cols].to_vec());
        self.push(out, Op::SliceRows(a, start))
    }

    /// Row lookup: output row `i` is `table[indices[i]]`.
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Var {
        let t = self.value(table);
        let mut data = Vec::with_capacity(indices.len() * t.cols);
        for &i in indices {
            data.extend_from_slice(t.row(i));
        }
        let out = Matrix::from_vec(indices.len(), t.cols, data);
        self.push(out, Op::Gather(table, indices.to_vec()))
    }

    /// Sliding windows for a narrow convolution. `x` holds consecutive
    /// segments of `seg` rows; each window of `k` rows inside a segment becomes
    /// one output row of width `k * cols`.
    pub fn im2col(&mut self, x: Var, seg: usize, k: usize) -> Var {
        let v = self.value(x);
        assert!(k >= 1 && k <= seg && v.rows % seg == 0);
        let nseg = v.rows / seg;
        let per = seg - k + 1;
        let d = v.cols;
        let mut out = Matrix::zeros(nseg * per, k * d);
        for s in 0..nseg {
            for p in 0..per {
                let dst = out.row_mut(s * per + p);
                let src = &v.data[(s * seg + p) * d..(s * seg + p + k) * d];
                dst.copy_from_slice(src);
            }
        }
        self.push(out, Op::Im2Col { x, seg, k })
    }

    /// Column-wise max over consecutive groups of `group` rows.
    pub fn max_pool_groups(&mut self, x: Var, group: usize) -> Var {
        let v = self.value(x);
        assert!(group >= 1 && v.rows % group == 0);
        let ngroups = v.rows / group;
        let mut out = Matrix::zeros(ngroups, v.cols);
        let mut argmax = vec![0usize; ngroups * v.cols];
        for g in 0..ngroups {
            for c in 0..v.cols {
                let mut best = g * group;
                for r in g * group + 1..(g + 1) * group {
                    if v.get(r, c) > v.get(best, c) {
                        best = r;
                    }
                }
                out.set(g, c, v.get(best, c));
                argmax[g * v.cols + c] = best;
            }
        }
        self.push(out, Op::MaxPoolGroups { x, argmax })
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let mut out = Matrix::zeros(1, v.cols);
        for r in 0..v.rows {
            for (o, x) in out.data.iter_mut().zip(v.row(r)) {
                *o += x;
            }
        }
        let n = v.rows as f64;
        for o in &mut out.data {
            *o /= n;
        }
        self.push(out, Op::MeanRows(a))
    }

    /// Replaces the value of `a` by `f(a)` in the forward pass while passing
    /// gradients through unchanged (straight-through estimator).
    pub fn straight_through(&mut self, a: Var, f: impl Fn(f64) -> f64) -> Var {
        let out = self.value(a).map(f);
        self.push(out, Op::StraightThrough(a))
    }

    /// Inverted dropout with a mask drawn from `rng`; identity when `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, rng: &mut R) -> Var {
        if p <= 0.0 {
            return a;
        }
        let (rows, cols) = self.value(a).shape();
        let keep = 1.0 - p;
        let data = (0..rows * cols)
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let mask = self.constant(Matrix::from_vec(rows, cols, data));
        self.mul(a, mask)
    }

    /// Mean over rows of softmax cross-entropy where row `i`'s target is column `i`.
    pub fn softmax_xent_diag(&mut self, x: Var) -> Var {
        let v = self.value(x);
        assert_eq!(v.rows, v.cols, "in-batch score matrix must be square");
        let probs = softmax_rows(v);
        let loss = softmax_xent_diag_value(v);
        self.push(Matrix::filled(1, 1, loss), Op::SoftmaxXentDiag { x, probs })
    }

    /// Binary cross-entropy on logits, summed over columns and averaged over rows.
    pub fn bce_logits(&mut self, x: Var, targets: Matrix) -> Var {
        let v = self.value(x);
        assert_eq!(v.shape(), targets.shape());
        let mut total = 0.0;
        for (&z, &t) in v.data.iter().zip(&targets.data) {
            total += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
        }
        let loss = total / v.rows as f64;
        self.push(Matrix::filled(1, 1, loss), Op::BceLogits { x, targets })
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1));
        m.data[0]
    }

    /// Reverse sweep from the scalar `loss`. Returns gradients for every
    /// parameter that contributed.
    pub fn backward(&self, loss: Var) -> Grads {
        assert_eq!(self.value(loss).shape(), (1, 1), "backward needs a scalar loss");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));
        let mut out = Grads::new(self.params.len());

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let y = match &node.value {
                Value::Owned(m) => m,
                Value::Param(id) => {
                    out.accumulate(*id, g);
                    continue;
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = g.matmul_t(self.value(*b));
                    let db = self.value(*a).t_matmul(&g);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::MatMulT(a, b) => {
                    let da = g.matmul(self.value(*b));
                    let db = g.t_matmul(self.value(*a));
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::AddRow(a, b) => {
                    let mut db = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (o, x) in db.data.iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    acc(&mut grads, *b, db);
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let da = zip_map(&g, vb, |gi, bi| gi * bi);
                    let db = zip_map(&g, va, |gi, ai| gi * ai);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g.map(|x| x * c)),
                Op::OneMinus(a) => acc(&mut grads, *a, g.map(|x| -x)),
                Op::Sigmoid(a) => acc(&mut grads, *a, zip_map(&g, y, |gi, yi| gi * yi * (1.0 - yi))),
                Op::Tanh(a) => acc(&mut grads, *a, zip_map(&g, y, |gi, yi| gi * (1.0 - yi * yi))),
                Op::Relu(a) => acc(&mut grads, *a, zip_map(&g, y, |gi, yi| if yi > 0.0 { gi } else { 0.0 })),
                Op::SoftmaxRows(a) => {
                    let mut dx = Matrix::zeros(g.rows, g.cols);
                    for r in 0..g.rows {
                        let (gr, yr) = (g.row(r), y.row(r));
                        let s: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for c in 0..g.cols {
                            dx.set(r, c, yr[c] * (gr[c] - s));
                        }
                    }
                    acc(&mut grads, *a, dx);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    rstd,
                } => {
                    let gam = self.value(*gamma);
                    let n = g.cols as f64;
                    let mut dgamma = Matrix::zeros(1, g.cols);
                    let mut dbeta = Matrix::zeros(1, g.cols);
                    let mut dx = Matrix::zeros(g.rows, g.cols);
                    for r in 0..g.rows {
                        let (gr, hr) = (g.row(r), xhat.row(r));
                        let mut sum_dh = 0.0;
                        let mut sum_dh_h = 0.0;
                        for c in 0..g.cols {
                            dgamma.data[c] += gr[c] * hr[c];
                            dbeta.data[c] += gr[c];
                            let dh = gr[c] * gam.data[c];
                            sum_dh += dh;
                            sum_dh_h += dh * hr[c];
                        }
                        for c in 0..g.cols {
                            let dh = gr[c] * gam.data[c];
                            dx.set(r, c, rstd[r] / n * (n * dh - sum_dh - hr[c] * sum_dh_h));
                        }
                    }
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *gamma, dgamma);
                    acc(&mut grads, *beta, dbeta);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols;
                        let mut dp = Matrix::zeros(g.rows, w);
                        for r in 0..g.rows {
                            dp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        offset += w;
                        acc(&mut grads, p, dp);
                    }
                }
                Op::SliceCols(a, start) => {
                    let va = self.value(*a);
                    let mut da = Matrix::zeros(va.rows, va.cols);
                    for r in 0..g.rows {
                        da.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *a, da);
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let rows = self.value(p).rows;
                        let dp = Matrix::from_vec(rows, g.cols, g.data[offset * g.cols..(offset + rows) * g.cols].to_vec());
                        offset += rows;
                        acc(&mut grads, p, dp);
                    }
                }
                Op::SliceRows(a, start) => {
                    let va = self.value(*a);
                    let mut da = Matrix::zeros(va.rows, va.cols);
                    da.data[start * va.cols..(start + g.rows) * va.cols].copy_from_slice(&g.data);
                    acc(&mut grads, *a, da);
                }
                Op::Gather(table, indices) => {
                    let t = self.value(*table);
                    let mut dt = Matrix::zeros(t.rows, t.cols);
                    for (r, &idx) in indices.iter().enumerate() {
                        for (o, x) in dt.row_mut(idx).iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    acc(&mut grads, *table, dt);
                }
                Op::Im2Col { x, seg, k } => {
                    let vx = self.value(*x);
                    let d = vx.cols;
                    let nseg = vx.rows / seg;
                    let per = seg - k + 1;
                    let mut dx = Matrix::zeros(vx.rows, d);
                    for s in 0..nseg {
                        for p in 0..per {
                            let src = g.row(s * per + p);
                            let dst = &mut dx.data[(s * seg + p) * d..(s * seg + p + k) * d];
                            for (o, v) in dst.iter_mut().zip(src) {
                                *o += v;
                            }
                        }
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::MaxPoolGroups { x, argmax } => {
                    let vx = self.value(*x);
                    let mut dx = Matrix::zeros(vx.rows, vx.cols);
                    for gi in 0..g.rows {
                        for c in 0..g.cols {
                            let r = argmax[gi * g.cols + c];
                            dx.data[r * vx.cols + c] += g.get(gi, c);
                        }
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::MeanRows(a) => {
                    let va = self.value(*a);
                    let n = va.rows as f64;
                    let mut da = Matrix::zeros(va.rows, va.cols);
                    for r in 0..va.rows {
                        for (o, x) in da.row_mut(r).iter_mut().zip(&g.data) {
                            *o = x / n;
                        }
                    }
                    acc(&mut grads, *a, da);
                }
                Op::StraightThrough(a) => acc(&mut grads, *a, g),
                Op::SoftmaxXentDiag { x, probs } => {
                    let scale = g.data[0] / probs.rows as f64;
                    let mut dx = probs.clone();
                    for r in 0..dx.rows {
                        let v = dx.get(r, r);
                        dx.set(r, r, v - 1.0);
                    }
                    for v in &mut dx.data {
                        *v *= scale;
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::BceLogits { x, targets } => {
                    let vx = self.value(*x);
                    let scale = g.data[0] / vx.rows as f64;
                    let dx = zip_map(vx, targets, |z, t| (sigmoid(z) - t) * scale);
                    acc(&mut grads, *x, dx);
                }
            }
        }
        out
    }
}

fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_vec(a.rows, a.cols, data)
}

pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.rows, m.cols);
    for r in 0..m.rows {
        let row = m.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (o, &x) in out.row_mut(r).iter_mut().zip(row) {
            *o = (x - max).exp();
            sum += *o;
        }
        for o in out.row_mut(r) {
            *o /= sum;
        }
    }
    out
}

/// Mean over rows of `-log softmax(row)[diag]`, via log-sum-exp.
pub fn softmax_xent_diag_value(m: &Matrix) -> f64 {
    let mut total = 0.0;
    for r in 0..m.rows {
        let row = m.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        total += lse - row[r];
    }
    total / m.rows as f64
}
