//! Tape-based reverse-mode automatic differentiation over small dense
//! tensors.
//!
//! A [`Graph`] is rebuilt for every forward pass. Parameters live in a
//! [`ParamStore`] and enter a graph as leaves through [`Graph::param`];
//! after [`Graph::backward`] their gradients are pulled back with
//! [`ParamStore::accumulate_grads`].

mod gradcheck;
mod param;
mod tensor;

use std::collections::HashMap;
use std::fmt;

pub use gradcheck::{grad_check, GradCheckReport};
pub use param::{ParamId, ParamStore};
pub use tensor::Tensor;

use crate::error::{Error, Result};
use tensor::{gemm_a_bt_acc, gemm_acc, gemm_at_b_acc};

/// Probability floor applied before taking a logarithm in
/// [`Graph::cross_entropy`].
pub const PROB_FLOOR: f64 = 1e-12;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A differentiable operation defined outside this module.
pub trait CustomOp: fmt::Debug {
    fn name(&self) -> &'static str;

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor>;

    /// Gradient with respect to every input, given the gradient of the output.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad_output: &Tensor) -> Vec<Tensor>;
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Tensor),
    Reshape(Var),
    Concat(Var, Var),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    Gather(Var, Vec<usize>),
    Softmax(Var),
    LayerNorm(Var, Var, Var, f64),
    Gelu(Var),
    CrossEntropy(Var, usize),
    Sum(Var),
    Custom(Box<dyn CustomOp>, Vec<Var>),
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Recorded computation. Nodes are appended in evaluation order, so the
/// inputs of every node precede it.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    grads: Vec<Option<Tensor>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last [`Graph::backward`] loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        debug_assert!(
            value.is_finite() || !self.inputs_finite(&op),
            "non-finite output from finite inputs in {op:?}"
        );
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn inputs_finite(&self, op: &Op) -> bool {
        input_vars(op).iter().all(|v| self.nodes[v.0].value.is_finite())
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Constant leaf (no gradient).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, false)
    }

    /// Leaf that receives a gradient but is not tied to a stored parameter.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// Leaf for a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(Op::Leaf, store.value(id).clone(), true);
        self.params.insert(id, v);
        v
    }

    /// Parameter leaves of this graph with their gradients from the last
    /// backward pass.
    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params.iter().filter_map(|(&id, &v)| self.grad(v).map(|g| (id, g)))
    }

    pub fn param_var(&self, id: ParamId) -> Option<Var> {
        self.params.get(&id).copied()
    }

    /// Matrix product. A rank-1 left operand is a row vector and a rank-1
    /// right operand a column vector; the result drops that axis again.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (m, k) = match sa.len() {
            1 => (1, sa[0]),
            2 => (sa[0], sa[1]),
            _ => return Err(Error::shape("matmul", &sa, &sb)),
        };
        let (k2, n) = match sb.len() {
            1 => (sb[0], 1),
            2 => (sb[0], sb[1]),
            _ => return Err(Error::shape("matmul", &sa, &sb)),
        };
        if k != k2 || (sa.len() == 1 && sb.len() == 1) {
            return Err(Error::shape("matmul", &sa, &sb));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let shape = match (sa.len(), sb.len()) {
            (1, _) => vec![n],
            (_, 1) => vec![m],
            _ => vec![m, n],
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::MatMul(a, b), Tensor::new(shape, out)?, rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(Error::shape("transpose", &s, &[]));
        }
        let (m, n) = (s[0], s[1]);
        let x = self.value(a).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = x[i * n + j];
            }
        }
        let rg = self.rg(a);
        Ok(self.push(Op::Transpose(a), Tensor::matrix(n, m, out)?, rg))
    }

    fn zip_same(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape(name, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Add(a, b), t, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Sub(a, b), t, rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Mul(a, b), t, rg))
    }

    /// Adds vector `bias` to every row of `a` (or to `a` itself when `a` is a
    /// vector).
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(bias));
        if tb.rank() != 1 || ta.rank() == 0 || ta.cols() != tb.len() {
            return Err(Error::shape("add_bias", ta.shape(), tb.shape()));
        }
        let c = tb.len();
        let mut data = ta.data().to_vec();
        for (i, x) in data.iter_mut().enumerate() {
            *x += tb.data()[i % c];
        }
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(Op::AddBias(a, bias), t, rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let ta = self.value(a);
        let t = Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|x| x * c).collect()).expect("same shape");
        let rg = self.rg(a);
        self.push(Op::Scale(a, c), t, rg)
    }

    /// Elementwise product with a constant tensor (dropout masks).
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Result<Var> {
        let ta = self.value(a);
        if ta.shape() != c.shape() {
            return Err(Error::shape("mul_const", ta.shape(), c.shape()));
        }
        let data = ta.data().iter().zip(c.data()).map(|(x, y)| x * y).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a);
        Ok(self.push(Op::MulConst(a, c), t, rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let ta = self.value(a);
        if shape.iter().product::<usize>() != ta.len() {
            return Err(Error::shape("reshape", ta.shape(), shape));
        }
        let t = Tensor::new(shape.to_vec(), ta.data().to_vec())?;
        let rg = self.rg(a);
        Ok(self.push(Op::Reshape(a), t, rg))
    }

    /// Concatenation along the last axis. Two vectors concatenate end to end;
    /// two matrices with equal row counts concatenate column-wise.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let t = match (ta.rank(), tb.rank()) {
            (1, 1) => {
                let mut d = ta.data().to_vec();
                d.extend_from_slice(tb.data());
                Tensor::vector(d)
            }
            (2, 2) if ta.rows() == tb.rows() => {
                let (ca, cb) = (ta.cols(), tb.cols());
                let mut d = Vec::with_capacity(ta.len() + tb.len());
                for i in 0..ta.rows() {
                    d.extend_from_slice(ta.row(i));
                    d.extend_from_slice(tb.row(i));
                }
                Tensor::matrix(ta.rows(), ca + cb, d)?
            }
            _ => return Err(Error::shape("concat", ta.shape(), tb.shape())),
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Concat(a, b), t, rg))
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let ta = self.value(a);
        if ta.rank() != 2 || start > end || end > ta.rows() {
            return Err(Error::shape("slice_rows", ta.shape(), &[start, end]));
        }
        let c = ta.cols();
        let t = Tensor::matrix(end - start, c, ta.data()[start * c..end * c].to_vec())?;
        let rg = self.rg(a);
        Ok(self.push(Op::SliceRows(a, start), t, rg))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let ta = self.value(a);
        if ta.rank() != 2 || start > end || end > ta.cols() {
            return Err(Error::shape("slice_cols", ta.shape(), &[start, end]));
        }
        let mut d = Vec::with_capacity(ta.rows() * (end - start));
        for i in 0..ta.rows() {
            d.extend_from_slice(&ta.row(i)[start..end]);
        }
        let t = Tensor::matrix(ta.rows(), end - start, d)?;
        let rg = self.rg(a);
        Ok(self.push(Op::SliceCols(a, start), t, rg))
    }

    /// Row `i` of a matrix as a vector.
    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        let r = self.slice_rows(a, i, i + 1)?;
        let c = self.value(r).cols();
        self.reshape(r, &[c])
    }

    /// Looks up rows of `table` (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tt = self.value(table);
        if tt.rank() != 2 {
            return Err(Error::shape("gather_rows", tt.shape(), &[]));
        }
        let mut d = Vec::with_capacity(ids.len() * tt.cols());
        for &id in ids {
            if id >= tt.rows() {
                return Err(Error::Index {
                    what: "embedding row",
                    index: id,
                    size: tt.rows(),
                });
            }
            d.extend_from_slice(tt.row(id));
        }
        let t = Tensor::matrix(ids.len(), tt.cols(), d)?;
        let rg = self.rg(table);
        Ok(self.push(Op::Gather(table, ids.to_vec()), t, rg))
    }

    /// Softmax along the last axis. `mask[j] == false` excludes column `j`
    /// from the normalization and forces its output to exactly 0.
    pub fn softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var> {
        let ta = self.value(a);
        if ta.rank() == 0 {
            return Err(Error::shape("softmax", ta.shape(), &[]));
        }
        let c = ta.cols();
        if let Some(m) = mask {
            if m.len() != c {
                return Err(Error::shape("softmax mask", ta.shape(), &[m.len()]));
            }
            if !m.iter().any(|&keep| keep) {
                return Err(Error::InvalidMask);
            }
        }
        let keep = |j: usize| mask.is_none_or(|m| m[j]);
        let mut out = vec![0.0; ta.len()];
        for i in 0..ta.rows() {
            let row = ta.row(i);
            let max = (0..c)
                .filter(|&j| keep(j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            let o = &mut out[i * c..(i + 1) * c];
            let mut z = 0.0;
            for j in 0..c {
                if keep(j) {
                    o[j] = (row[j] - max).exp();
                    z += o[j];
                }
            }
            for v in o.iter_mut() {
                *v /= z;
            }
        }
        let t = Tensor::new(ta.shape().to_vec(), out)?;
        let rg = self.rg(a);
        Ok(self.push(Op::Softmax(a), t, rg))
    }

    /// Row-wise layer normalization with learned gain and shift.
    pub fn layer_norm(&mut self, x: Var, gain: Var, shift: Var, eps: f64) -> Result<Var> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(shift));
        let c = tx.cols();
        if tx.rank() == 0 || tg.shape() != [c] || tb.shape() != [c] {
            return Err(Error::shape("layer_norm", tx.shape(), tg.shape()));
        }
        let mut out = vec![0.0; tx.len()];
        for i in 0..tx.rows() {
            let row = tx.row(i);
            let (mean, inv) = row_stats(row, eps);
            for j in 0..c {
                out[i * c + j] = (row[j] - mean) * inv * tg.data()[j] + tb.data()[j];
            }
        }
        let t = Tensor::new(tx.shape().to_vec(), out)?;
        let rg = self.rg(x) || self.rg(gain) || self.rg(shift);
        Ok(self.push(Op::LayerNorm(x, gain, shift, eps), t, rg))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let t = Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|&x| gelu(x)).collect()).expect("same shape");
        let rg = self.rg(a);
        self.push(Op::Gelu(a), t, rg)
    }

    /// `-ln(max(probs[gold], PROB_FLOOR))` for a probability vector.
    pub fn cross_entropy(&mut self, probs: Var, gold: usize) -> Result<Var> {
        let tp = self.value(probs);
        if tp.rank() != 1 {
            return Err(Error::shape("cross_entropy", tp.shape(), &[]));
        }
        if gold >= tp.len() {
            return Err(Error::Index {
                what: "gold label",
                index: gold,
                size: tp.len(),
            });
        }
        let v = -tp.data()[gold].max(PROB_FLOOR).ln();
        let rg = self.rg(probs);
        Ok(self.push(Op::CrossEntropy(probs, gold), Tensor::scalar(v), rg))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let v = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Op::Sum(a), Tensor::scalar(v), rg)
    }

    pub fn custom(&mut self, op: Box<dyn CustomOp>, inputs: &[Var]) -> Result<Var> {
        let t = {
            let ts: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
            op.forward(&ts)?
        };
        let rg = inputs.iter().any(|&v| self.rg(v));
        Ok(self.push(Op::Custom(op, inputs.to_vec()), t, rg))
    }

    /// Reverse pass from a scalar `loss`. Gradients from a previous call are
    /// discarded; accumulation across passes happens in [`ParamStore`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lv = self.value(loss);
        if lv.len() != 1 || lv.rank() > 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if self.nodes[idx].requires_grad {
                self.propagate(idx, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let val = |v: Var| &self.nodes[v.0].value;
        let mut send = |v: Var, t: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        let like = |v: Var, data: Vec<f64>| Tensor::new(val(v).shape().to_vec(), data).expect("shape");
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k) = if ta.rank() == 1 {
                    (1, ta.len())
                } else {
                    (ta.rows(), ta.cols())
                };
                let n = if tb.rank() == 1 { 1 } else { tb.cols() };
                if self.rg(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm_a_bt_acc(gd, tb.data(), &mut da, m, k, n);
                    send(*a, like(*a, da));
                }
                if self.rg(*b) {
                    let mut db = vec![0.0; k * n];
                    gemm_at_b_acc(ta.data(), gd, &mut db, m, k, n);
                    send(*b, like(*b, db));
                }
            }
            Op::Transpose(a) => {
                let (m, n) = (val(*a).rows(), val(*a).cols());
                let mut d = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        d[i * n + j] = gd[j * m + i];
                    }
                }
                send(*a, like(*a, d));
            }
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::Sub(a, b) => {
                send(*a, g.clone());
                send(*b, like(*b, gd.iter().map(|x| -x).collect()));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                send(*a, like(*a, gd.iter().zip(tb.data()).map(|(x, y)| x * y).collect()));
                send(*b, like(*b, gd.iter().zip(ta.data()).map(|(x, y)| x * y).collect()));
            }
            Op::AddBias(a, b) => {
                send(*a, g.clone());
                let c = val(*b).len();
                let mut db = vec![0.0; c];
                for (i, x) in gd.iter().enumerate() {
                    db[i % c] += x;
                }
                send(*b, like(*b, db));
            }
            Op::Scale(a, c) => send(*a, like(*a, gd.iter().map(|x| x * c).collect())),
            Op::MulConst(a, c) => send(*a, like(*a, gd.iter().zip(c.data()).map(|(x, y)| x * y).collect())),
            Op::Reshape(a) => send(*a, like(*a, gd.to_vec())),
            Op::Concat(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                if ta.rank() == 1 {
                    send(*a, like(*a, gd[..ta.len()].to_vec()));
                    send(*b, like(*b, gd[ta.len()..].to_vec()));
                } else {
                    let (ca, cb) = (ta.cols(), tb.cols());
                    let (mut da, mut db) = (Vec::with_capacity(ta.len()), Vec::with_capacity(tb.len()));
                    for row in gd.chunks(ca + cb) {
                        da.extend_from_slice(&row[..ca]);
                        db.extend_from_slice(&row[ca..]);
                    }
                    send(*a, like(*a, da));
                    send(*b, like(*b, db));
                }
            }
            Op::SliceRows(a, start) => {
                let ta = val(*a);
                let c = ta.cols();
                let mut d = vec![0.0; ta.len()];
                d[start * c..start * c + gd.len()].copy_from_slice(gd);
                send(*a, like(*a, d));
            }
            Op::SliceCols(a, start) => {
                let ta = val(*a);
                let (c, w) = (ta.cols(), g.cols());
                let mut d = vec![0.0; ta.len()];
                for i in 0..ta.rows() {
                    d[i * c + start..i * c + start + w].copy_from_slice(&gd[i * w..(i + 1) * w]);
                }
                send(*a, like(*a, d));
            }
            Op::Gather(table, ids) => {
                let c = val(*table).cols();
                let mut d = vec![0.0; val(*table).len()];
                for (r, &id) in ids.iter().enumerate() {
                    for j in 0..c {
                        d[id * c + j] += gd[r * c + j];
                    }
                }
                send(*table, like(*table, d));
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let c = y.cols();
                let mut d = vec![0.0; y.len()];
                for i in 0..y.rows() {
                    let yr = y.row(i);
                    let gr = &gd[i * c..(i + 1) * c];
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for j in 0..c {
                        d[i * c + j] = yr[j] * (gr[j] - dot);
                    }
                }
                send(*a, like(*a, d));
            }
            Op::LayerNorm(x, gain, shift, eps) => {
                let tx = val(*x);
                let gamma = val(*gain).data();
                let c = tx.cols();
                let mut dx = vec![0.0; tx.len()];
                let mut dg = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                let mut xhat = vec![0.0; c];
                let mut dxhat = vec![0.0; c];
                for i in 0..tx.rows() {
                    let row = tx.row(i);
                    let gr = &gd[i * c..(i + 1) * c];
                    let (mean, inv) = row_stats(row, *eps);
                    for j in 0..c {
                        xhat[j] = (row[j] - mean) * inv;
                        dxhat[j] = gr[j] * gamma[j];
                        dg[j] += gr[j] * xhat[j];
                        dbeta[j] += gr[j];
                    }
                    let mean_dxhat = dxhat.iter().sum::<f64>() / c as f64;
                    let mean_dxhat_xhat = dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                    for j in 0..c {
                        dx[i * c + j] = inv * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                    }
                }
                send(*x, like(*x, dx));
                send(*gain, like(*gain, dg));
                send(*shift, like(*shift, dbeta));
            }
            Op::Gelu(a) => {
                let xs = val(*a).data();
                send(
                    *a,
                    like(*a, gd.iter().zip(xs).map(|(g, &x)| g * gelu_grad(x)).collect()),
                );
            }
            Op::CrossEntropy(p, gold) => {
                let tp = val(*p);
                let mut d = vec![0.0; tp.len()];
                let pg = tp.data()[*gold];
                if pg > PROB_FLOOR {
                    d[*gold] = -gd[0] / pg;
                }
                send(*p, like(*p, d));
            }
            Op::Sum(a) => send(*a, Tensor::filled(val(*a).shape(), gd[0])),
            Op::Custom(op, inputs) => {
                let ts: Vec<&Tensor> = inputs.iter().map(|&v| val(v)).collect();
                let gs = op.backward(&ts, &node.value, g);
                for (&v, gv) in inputs.iter().zip(gs) {
                    send(v, gv);
                }
            }
        }
    }
}

fn input_vars(op: &Op) -> Vec<Var> {
    match op {
        Op::Leaf => vec![],
        Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddBias(a, b) | Op::Concat(a, b) => {
            vec![*a, *b]
        }
        Op::Transpose(a)
        | Op::Scale(a, _)
        | Op::MulConst(a, _)
        | Op::Reshape(a)
        | Op::SliceRows(a, _)
        | Op::SliceCols(a, _)
        | Op::Gather(a, _)
        | Op::Softmax(a)
        | Op::Gelu(a)
        | Op::CrossEntropy(a, _)
        | Op::Sum(a) => vec![*a],
        Op::LayerNorm(x, g, b, _) => vec![*x, *g, *b],
        Op::Custom(_, inputs) => inputs.clone(),
    }
}

fn row_stats(row: &[f64], eps: f64) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + eps).sqrt())
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}
