//! Reverse-mode automatic differentiation over a per-example tape.
//!
//! A [`Graph`] borrows the parameter store, records every operation as it
//! runs the forward pass and replays the tape backwards on demand.
//! Parameters are referenced, not copied, so building a graph is cheap.

use crate::params::{Grads, ParamId, ParamStore};
use crate::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc, Mat};
use crate::NeuralError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Which score entries an attention row may see.
#[derive(Clone, Debug, PartialEq)]
pub enum Mask {
    None,
    /// Row `i` sees columns `0..=i`.
    Causal,
    /// Column `j` is visible iff `keys[j]`.
    Keys(Vec<bool>),
}

impl Mask {
    fn allows(&self, i: usize, j: usize) -> bool {
        match self {
            Mask::None => true,
            Mask::Causal => j <= i,
            Mask::Keys(k) => k[j],
        }
    }
}

enum Op {
    Param(ParamId),
    Const,
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    MatMul(Var, Var),
    MatMulBT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Mat,
        inv_std: Vec<f64>,
    },
    Softmax {
        x: Var,
    },
    Bce {
        x: Var,
        targets: Vec<f64>,
    },
    CrossEntropy {
        x: Var,
        targets: Vec<Option<usize>>,
        probs: Mat,
        count: usize,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Param(_) => "param",
            Op::Const => "const",
            Op::Gather { .. } => "gather",
            Op::MatMul(..) => "matmul",
            Op::MatMulBT(..) => "matmul_bt",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Scale(..) => "scale",
            Op::Gelu(_) => "gelu",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Softmax { .. } => "softmax",
            Op::Bce { .. } => "bce",
            Op::CrossEntropy { .. } => "cross_entropy",
        }
    }
}

struct Node {
    op: Op,
    value: Option<Mat>,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    non_finite: Option<&'static str>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const LN_EPS: f64 = 1e-5;

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::with_capacity(256),
            non_finite: None,
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat {
        match &self.nodes[v.0].op {
            Op::Param(id) => self.params.get(*id),
            _ => self.nodes[v.0].value.as_ref().expect("computed node"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    /// Fails if any forward value so far was NaN or infinite.
    pub fn check_finite(&self) -> Result<(), NeuralError> {
        match self.non_finite {
            Some(op) => Err(NeuralError::NonFinite { op }),
            None => Ok(()),
        }
    }

    fn push(&mut self, op: Op, value: Option<Mat>) -> Var {
        if self.non_finite.is_none() {
            if let Some(v) = &value {
                if !v.is_finite() {
                    self.non_finite = Some(op.name());
                }
            }
        }
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.push(Op::Param(id), None)
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(Op::Const, Some(value))
    }

    /// Rows of `table` selected by `ids`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let d = t.cols();
        let mut out = Mat::zeros(ids.len(), d);
        for (r, &id) in ids.iter().enumerate() {
            assert!(id < t.rows(), "gather index {id} out of {} rows", t.rows());
            out.row_mut(r).copy_from_slice(t.row(id));
        }
        self.push(
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            Some(out),
        )
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = Mat::zeros(av.rows(), bv.cols());
        matmul_acc(&mut out, av, bv);
        self.push(Op::MatMul(a, b), Some(out))
    }

    /// `a * b^T`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = Mat::zeros(av.rows(), bv.rows());
        matmul_bt_acc(&mut out, av, bv);
        self.push(Op::MatMulBT(a, b), Some(out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "add shapes");
        let mut out = av.clone();
        out.add_assign(bv);
        self.push(Op::Add(a, b), Some(out))
    }

    /// Adds a `1 x m` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (av, rv) = (self.value(a), self.value(row));
        assert_eq!((1, av.cols()), rv.shape(), "add_row shapes");
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(rv.data()) {
                *o += b;
            }
        }
        self.push(Op::AddRow(a, row), Some(out))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= s);
        self.push(Op::Scale(a, s), Some(out))
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for v in out.data_mut() {
            let x = *v;
            let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
            *v = 0.5 * x * (1.0 + t);
        }
        self.push(Op::Gelu(a), Some(out))
    }

    /// Row-wise normalization with learned `1 x d` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let (n, d) = xv.shape();
        let (g, b) = (self.value(gamma), self.value(beta));
        assert_eq!(g.shape(), (1, d), "layer_norm gain shape");
        assert_eq!(b.shape(), (1, d), "layer_norm bias shape");
        let mut xhat = Mat::zeros(n, d);
        let mut out = Mat::zeros(n, d);
        let mut inv_std = Vec::with_capacity(n);
        for r in 0..n {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(is);
            for c in 0..d {
                let h = (row[c] - mean) * is;
                xhat.set(r, c, h);
                out.set(r, c, h * g.data()[c] + b.data()[c]);
            }
        }
        self.push(
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            Some(out),
        )
    }

    /// Row-wise softmax; masked entries get probability zero.
    pub fn softmax(&mut self, x: Var, mask: Mask) -> Var {
        let xv = self.value(x);
        let (n, m) = xv.shape();
        if let Mask::Keys(k) = &mask {
            assert_eq!(k.len(), m, "key mask width");
        }
        let mut out = Mat::zeros(n, m);
        for i in 0..n {
            let row = xv.row(i);
            let max = (0..m)
                .filter(|&j| mask.allows(i, j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let mut total = 0.0;
            for j in (0..m).filter(|&j| mask.allows(i, j)) {
                let e = (row[j] - max).exp();
                out.set(i, j, e);
                total += e;
            }
            out.row_mut(i).iter_mut().for_each(|v| *v /= total);
        }
        self.push(Op::Softmax { x }, Some(out))
    }

    /// Mean binary cross-entropy of a `1 x k` logit row against 0/1 targets.
    pub fn bce_with_logits(&mut self, x: Var, targets: &[f64]) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.len(), targets.len(), "bce target count");
        let k = targets.len() as f64;
        let loss: f64 = xv
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &t)| z.max(0.0) - z * t + (-z.abs()).exp().ln_1p())
            .sum::<f64>()
            / k;
        self.push(
            Op::Bce {
                x,
                targets: targets.to_vec(),
            },
            Some(Mat::filled(1, 1, loss)),
        )
    }

    /// Mean categorical cross-entropy over rows with a target. When `allowed`
    /// is given, row `i` is normalized over the set bits of `allowed[i]` only.
    pub fn cross_entropy(&mut self, x: Var, targets: &[Option<usize>], allowed: Option<&[u64]>) -> Var {
        let xv = self.value(x);
        let (n, m) = xv.shape();
        assert_eq!(targets.len(), n, "cross_entropy target rows");
        assert!(allowed.is_none() || m <= 64, "allowed masks cover at most 64 classes");
        let mut probs = Mat::zeros(n, m);
        let mut loss = 0.0;
        let mut count = 0;
        for (i, t) in targets.iter().enumerate() {
            let Some(t) = *t else { continue };
            let ok = |j: usize| allowed.is_none_or(|a| (a[i] >> j) & 1 == 1);
            let row = xv.row(i);
            let max = (0..m)
                .filter(|&j| ok(j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for j in (0..m).filter(|&j| ok(j)) {
                let e = (row[j] - max).exp();
                probs.set(i, j, e);
                total += e;
            }
            probs.row_mut(i).iter_mut().for_each(|v| *v /= total);
            // A target outside the allowed set has zero probability and infinite loss.
            loss += if ok(t) {
                max + total.ln() - row[t]
            } else {
                f64::INFINITY
            };
            count += 1;
        }
        let value = if count == 0 { 0.0 } else { loss / count as f64 };
        self.push(
            Op::CrossEntropy {
                x,
                targets: targets.to_vec(),
                probs,
                count,
            },
            Some(Mat::filled(1, 1, value)),
        )
    }

    /// Back-propagates `d(scale * loss)` and adds parameter gradients into `grads`.
    pub fn backward(&self, loss: Var, scale: f64, grads: &mut Grads) {
        assert_eq!(self.shape(loss), (1, 1), "loss must be a scalar");
        let mut g: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        g[loss.0] = Some(Mat::filled(1, 1, scale));
        for idx in (0..=loss.0).rev() {
            let Some(go) = g[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Param(id) => grads.accumulate(*id, &go, 1.0),
                Op::Const => {}
                Op::Gather { table, ids } => {
                    let gt = self.grad_slot(&mut g, *table);
                    for (r, &id) in ids.iter().enumerate() {
                        for (a, b) in gt.row_mut(id).iter_mut().zip(go.row(r)) {
                            *a += b;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    matmul_bt_acc(self.grad_slot(&mut g, *a), &go, bv);
                    matmul_at_acc(self.grad_slot(&mut g, *b), av, &go);
                }
                Op::MatMulBT(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    matmul_acc(self.grad_slot(&mut g, *a), &go, bv);
                    matmul_at_acc(self.grad_slot(&mut g, *b), &go, av);
                }
                Op::Add(a, b) => {
                    self.grad_slot(&mut g, *a).add_assign(&go);
                    self.grad_slot(&mut g, *b).add_assign(&go);
                }
                Op::AddRow(a, row) => {
                    self.grad_slot(&mut g, *a).add_assign(&go);
                    let gr = self.grad_slot(&mut g, *row);
                    for r in 0..go.rows() {
                        for (a, b) in gr.data_mut().iter_mut().zip(go.row(r)) {
                            *a += b;
                        }
                    }
                }
                Op::Scale(a, s) => self.grad_slot(&mut g, *a).add_scaled(&go, *s),
                Op::Gelu(a) => {
                    let xv = self.value(*a);
                    let ga = self.grad_slot(&mut g, *a);
                    for ((o, &x), &gy) in ga.data_mut().iter_mut().zip(xv.data()).zip(go.data()) {
                        let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
                        let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                        *o += gy * (0.5 * (1.0 + t) + 0.5 * x * dt);
                    }
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let gv = self.value(*gamma).clone();
                    let (n, d) = xhat.shape();
                    {
                        let gg = self.grad_slot(&mut g, *gamma);
                        for r in 0..n {
                            for c in 0..d {
                                gg.data_mut()[c] += go.get(r, c) * xhat.get(r, c);
                            }
                        }
                    }
                    {
                        let gb = self.grad_slot(&mut g, *beta);
                        for r in 0..n {
                            for (a, b) in gb.data_mut().iter_mut().zip(go.row(r)) {
                                *a += b;
                            }
                        }
                    }
                    let gx = self.grad_slot(&mut g, *x);
                    let mut gh = vec![0.0; d];
                    for r in 0..n {
                        let mut mean_gh = 0.0;
                        let mut mean_ghx = 0.0;
                        for c in 0..d {
                            gh[c] = go.get(r, c) * gv.data()[c];
                            mean_gh += gh[c];
                            mean_ghx += gh[c] * xhat.get(r, c);
                        }
                        mean_gh /= d as f64;
                        mean_ghx /= d as f64;
                        let row = gx.row_mut(r);
                        for c in 0..d {
                            row[c] += inv_std[r] * (gh[c] - mean_gh - xhat.get(r, c) * mean_ghx);
                        }
                    }
                }
                Op::Softmax { x, .. } => {
                    let p = self.nodes[idx].value.as_ref().expect("softmax output");
                    let gx = self.grad_slot(&mut g, *x);
                    for i in 0..p.rows() {
                        let dot: f64 = p.row(i).iter().zip(go.row(i)).map(|(a, b)| a * b).sum();
                        let pr = p.row(i);
                        let gr = go.row(i);
                        for (j, o) in gx.row_mut(i).iter_mut().enumerate() {
                            *o += pr[j] * (gr[j] - dot);
                        }
                    }
                }
                Op::Bce { x, targets } => {
                    let xv = self.value(*x);
                    let k = targets.len() as f64;
                    let s = go.get(0, 0) / k;
                    let mut upd = Mat::zeros(xv.rows(), xv.cols());
                    for ((u, &z), &t) in upd.data_mut().iter_mut().zip(xv.data()).zip(targets) {
                        *u = s * (1.0 / (1.0 + (-z).exp()) - t);
                    }
                    self.grad_slot(&mut g, *x).add_assign(&upd);
                }
                Op::CrossEntropy {
                    x,
                    targets,
                    probs,
                    count,
                } => {
                    if *count == 0 {
                        continue;
                    }
                    let s = go.get(0, 0) / *count as f64;
                    let gx = self.grad_slot(&mut g, *x);
                    for (i, t) in targets.iter().enumerate() {
                        let Some(t) = *t else { continue };
                        for (j, o) in gx.row_mut(i).iter_mut().enumerate() {
                            *o += s * (probs.get(i, j) - if j == t { 1.0 } else { 0.0 });
                        }
                    }
                }
            }
        }
    }

    fn grad_slot<'g>(&self, g: &'g mut [Option<Mat>], v: Var) -> &'g mut Mat {
        let (r, c) = self.shape(v);
        g[v.0].get_or_insert_with(|| Mat::zeros(r, c))
    }
}
