//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] records every primitive applied during a forward pass.
//! Nodes are appended in execution order, so the record is topologically
//! sorted by construction and [`Tape::backward`] is a single reverse sweep.
//! A tape lives for one forward/backward step; a fresh tape starts from
//! zero gradients.

use super::gemm::{gemm, Op as G};
use super::tensor::{numel, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

type BackwardFn = dyn Fn(&Tensor, &[&Tensor], &Tensor) -> Vec<Tensor> + Send + Sync;

enum Op {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddBias(Var, Var),
    Matmul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    SoftmaxRows(Var),
    Conv1d { x: Var, w: Var, dilation: usize },
    ChannelMix(Var, Var),
    NodeMix(Var, Var),
    MeanLast(Var),
    Sum(Var),
    Nll { probs: Var, labels: Vec<usize> },
    Custom { inputs: Vec<Var>, backward: Box<BackwardFn> },
}

struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// Probability floor applied inside [`Tape::nll`].
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by one backward sweep, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a tracked value; `None` for untracked values.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn dim_err(what: &str, a: &[usize], b: &[usize]) -> Error {
    Error::Dimension(format!("{what}: shapes {a:?} and {b:?} are incompatible"))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Valid output range `[t0, t1)` of a conv tap with signed offset `off`.
fn tap_range(t: usize, off: isize) -> Option<(usize, usize)> {
    let t0 = (-off).max(0) as usize;
    let t1 = (t as isize - off).min(t as isize);
    (t1 > t0 as isize).then_some((t0, t1 as usize))
}

impl Tape {
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

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf; it is differentiated iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let tracked = t.requires_grad();
        self.push(t, Op::Leaf, tracked)
    }

    pub fn param(&mut self, t: Tensor) -> Var {
        self.leaf(t.with_grad(true))
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t.with_grad(false))
    }

    fn unary(&mut self, a: Var, value: Tensor, op: Op) -> Var {
        let tracked = self.tracked(a);
        self.push(value, op, tracked)
    }

    fn binary(&mut self, a: Var, b: Var, value: Tensor, op: Op) -> Var {
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(value, op, tracked)
    }

    fn zip_with(&self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(dim_err(what, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_with(a, b, "add", |x, y| x + y)?;
        Ok(self.binary(a, b, v, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_with(a, b, "elementwise_mul", |x, y| x * y)?;
        Ok(self.binary(a, b, v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| c * x);
        self.unary(a, v, Op::Scale(a, c))
    }

    /// `x[..., c] + bias[c]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let c = *tx.shape().last().unwrap_or(&1);
        if tb.shape() != [c] {
            return Err(dim_err("add_bias", tx.shape(), tb.shape()));
        }
        let mut v = tx.clone().with_grad(false);
        for row in v.data_mut().chunks_exact_mut(c) {
            for (o, b) in row.iter_mut().zip(tb.data()) {
                *o += b;
            }
        }
        Ok(self.binary(x, bias, v, Op::AddBias(x, bias)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let [m, k] = ta.dims2()?;
        let [k2, n] = tb.dims2()?;
        if k != k2 {
            return Err(dim_err("matmul", ta.shape(), tb.shape()));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), G::N, tb.data(), G::N, 0.0, &mut out);
        let v = Tensor::new([m, n], out)?;
        Ok(self.binary(a, b, v, Op::Matmul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).transpose()?;
        Ok(self.unary(a, v, Op::Transpose(a)))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).clone().with_grad(false).reshape(shape)?;
        Ok(self.unary(a, v, Op::Reshape(a)))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.unary(a, v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.unary(a, v, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.unary(a, v, Op::Relu(a))
    }

    /// Softmax along the last axis, shifted by the row maximum.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let c = match ta.shape().last() {
            Some(&c) if c > 0 => c,
            _ => return Err(Error::Dimension(format!("softmax over shape {:?}", ta.shape()))),
        };
        let mut v = ta.clone().with_grad(false);
        for row in v.data_mut().chunks_exact_mut(c) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                s += *x;
            }
            for x in row.iter_mut() {
                *x /= s;
            }
        }
        Ok(self.unary(a, v, Op::SoftmaxRows(a)))
    }

    /// Non-causal dilated convolution along the second-to-last axis.
    ///
    /// `x: [..., T, c_in]`, `w: [ks, c_in, c_out]`, `bias: [c_out]`. The output
    /// keeps length `T`; the input is zero-padded by `dilation·(ks−1)/2` on
    /// both sides so that tap `j` reads `t + (j − (ks−1)/2)·dilation`.
    pub fn conv1d(&mut self, x: Var, w: Var, bias: Var, dilation: usize) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        let &[ks, c_in, c_out] = tw.shape() else {
            return Err(Error::Dimension(format!("conv1d kernel shape {:?}", tw.shape())));
        };
        if ks % 2 == 0 {
            return Err(Error::Config(format!("conv1d kernel size must be odd, got {ks}")));
        }
        if dilation < 1 {
            return Err(Error::Config("conv1d dilation must be at least 1".into()));
        }
        let r = tx.rank();
        if r < 2 || tx.shape()[r - 1] != c_in {
            return Err(dim_err("conv1d", tx.shape(), tw.shape()));
        }
        let t = tx.shape()[r - 2];
        let rows = tx.len() / (t * c_in).max(1);
        let mut shape = tx.shape().to_vec();
        shape[r - 1] = c_out;

        let conv = {
            let mut out = vec![0.0; rows * t * c_out];
            let half = (ks - 1) / 2;
            for tap in 0..ks {
                let off = (tap as isize - half as isize) * dilation as isize;
                let wk = &tw.data()[tap * c_in * c_out..(tap + 1) * c_in * c_out];
                if off == 0 {
                    gemm(rows * t, c_in, c_out, tx.data(), G::N, wk, G::N, 1.0, &mut out);
                    continue;
                }
                let Some((t0, t1)) = tap_range(t, off) else { continue };
                let len = t1 - t0;
                for row in 0..rows {
                    let src = row * t * c_in + ((t0 as isize + off) as usize) * c_in;
                    let dst = row * t * c_out + t0 * c_out;
                    gemm(
                        len,
                        c_in,
                        c_out,
                        &tx.data()[src..src + len * c_in],
                        G::N,
                        wk,
                        G::N,
                        1.0,
                        &mut out[dst..dst + len * c_out],
                    );
                }
            }
            Tensor::new(shape, out)?
        };
        let conv_tracked = self.tracked(x) || self.tracked(w);
        let cv = self.push(conv, Op::Conv1d { x, w, dilation }, conv_tracked);
        self.add_bias(cv, bias)
    }

    /// `x[..., c_in] · w[c_in, c_out]`: a shared 1×1 convolution / dense layer.
    pub fn channel_mix(&mut self, x: Var, w: Var) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        let [c_in, c_out] = tw.dims2()?;
        if tx.shape().last() != Some(&c_in) {
            return Err(dim_err("channel_mix", tx.shape(), tw.shape()));
        }
        let rows = tx.len() / c_in.max(1);
        let mut out = vec![0.0; rows * c_out];
        gemm(rows, c_in, c_out, tx.data(), G::N, tw.data(), G::N, 0.0, &mut out);
        let mut shape = tx.shape().to_vec();
        *shape.last_mut().unwrap() = c_out;
        let v = Tensor::new(shape, out)?;
        Ok(self.binary(x, w, v, Op::ChannelMix(x, w)))
    }

    /// `out[b] = adj · x[b]` for `x: [B, N, ...]` and `adj: [N, N]`.
    pub fn node_mix(&mut self, adj: Var, x: Var) -> Result<Var> {
        let (ta, tx) = (self.value(adj), self.value(x));
        let [n, n2] = ta.dims2()?;
        if n != n2 || tx.rank() < 2 || tx.shape()[1] != n {
            return Err(dim_err("node_mix", ta.shape(), tx.shape()));
        }
        let b = tx.shape()[0];
        let feat = numel(&tx.shape()[2..]);
        let block = n * feat;
        let mut out = vec![0.0; b * block];
        for bi in 0..b {
            let xs = &tx.data()[bi * block..(bi + 1) * block];
            gemm(n, n, feat, ta.data(), G::N, xs, G::N, 0.0, &mut out[bi * block..(bi + 1) * block]);
        }
        let v = Tensor::new(tx.shape(), out)?;
        Ok(self.binary(adj, x, v, Op::NodeMix(adj, x)))
    }

    /// Mean over the last axis; drops that axis.
    pub fn mean_last(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let Some((&l, lead)) = ta.shape().split_last() else {
            return Err(Error::Dimension("mean_last on a scalar".into()));
        };
        if l == 0 {
            return Err(Error::Dimension("mean over an empty axis".into()));
        }
        let data = ta.data().chunks_exact(l).map(|r| r.iter().sum::<f64>() / l as f64).collect();
        let v = Tensor::new(lead, data)?;
        Ok(self.unary(a, v, Op::MeanLast(a)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.unary(a, v, Op::Sum(a))
    }

    /// Mean negative log-likelihood of `labels` under row-stochastic `probs: [B, C]`.
    /// Probabilities are floored at [`PROB_FLOOR`].
    pub fn nll(&mut self, probs: Var, labels: &[usize]) -> Result<Var> {
        let tp = self.value(probs);
        let [b, c] = tp.dims2()?;
        if labels.len() != b || b == 0 {
            return Err(Error::Contract(format!("{} labels for a batch of {b}", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::Contract(format!("label {bad} out of range for {c} classes")));
        }
        let loss =
            labels.iter().enumerate().map(|(i, &l)| -tp.data()[i * c + l].max(PROB_FLOOR).ln()).sum::<f64>() / b as f64;
        Ok(self.unary(probs, Tensor::scalar(loss), Op::Nll { probs, labels: labels.to_vec() }))
    }

    /// Records an opaque primitive with a caller-supplied vector-Jacobian rule.
    ///
    /// `backward(grad_out, inputs, output)` returns one gradient per input,
    /// each shaped like its input.
    pub fn custom<F>(&mut self, inputs: &[Var], value: Tensor, backward: F) -> Var
    where
        F: Fn(&Tensor, &[&Tensor], &Tensor) -> Vec<Tensor> + Send + Sync + 'static,
    {
        let tracked = inputs.iter().any(|&v| self.tracked(v));
        self.push(value.with_grad(false), Op::Custom { inputs: inputs.to_vec(), backward: Box::new(backward) }, tracked)
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Every tracked value upstream of `loss` receives its total derivative;
    /// contributions from fan-out are summed. Tracked leaves that do not
    /// influence `loss` receive zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let tl = self.value(loss);
        if tl.len() != 1 {
            return Err(Error::Contract(format!("backward needs a scalar loss, got shape {:?}", tl.shape())));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(tl.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[i] = Some(g);
        }

        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.tracked && grads[i].is_none() {
                grads[i] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.tracked(v) {
            return;
        }
        debug_assert_eq!(g.shape(), self.value(v).shape());
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g.with_grad(false)),
        }
    }

    fn like(&self, v: Var, data: Vec<f64>) -> Tensor {
        Tensor::new(self.value(v).shape(), data).expect("gradient shaped like its input")
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.tracked(*a) {
                    let d = g.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *a, self.like(*a, d));
                }
                if self.tracked(*b) {
                    let d = g.data().iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *b, self.like(*b, d));
                }
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, g.map(|x| c * x)),
            Op::AddBias(x, bias) => {
                self.accumulate(grads, *x, g.clone());
                if self.tracked(*bias) {
                    let c = self.value(*bias).len();
                    let mut d = vec![0.0; c];
                    for row in g.data().chunks_exact(c) {
                        for (o, v) in d.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    self.accumulate(grads, *bias, self.like(*bias, d));
                }
            }
            Op::Matmul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let [m, k] = ta.dims2()?;
                let n = tb.dims2()?[1];
                if self.tracked(*a) {
                    let mut d = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), G::N, tb.data(), G::T, 0.0, &mut d);
                    self.accumulate(grads, *a, self.like(*a, d));
                }
                if self.tracked(*b) {
                    let mut d = vec![0.0; k * n];
                    gemm(k, m, n, ta.data(), G::T, g.data(), G::N, 0.0, &mut d);
                    self.accumulate(grads, *b, self.like(*b, d));
                }
            }
            Op::Transpose(a) => self.accumulate(grads, *a, g.transpose()?),
            Op::Reshape(a) => {
                let shape = self.value(*a).shape().to_vec();
                self.accumulate(grads, *a, g.clone().reshape(shape)?);
            }
            Op::Tanh(a) => {
                let d = g.data().iter().zip(out.data()).map(|(g, y)| g * (1.0 - y * y)).collect();
                self.accumulate(grads, *a, self.like(*a, d));
            }
            Op::Sigmoid(a) => {
                let d = g.data().iter().zip(out.data()).map(|(g, y)| g * y * (1.0 - y)).collect();
                self.accumulate(grads, *a, self.like(*a, d));
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                let d = g.data().iter().zip(x.data()).map(|(&g, &x)| if x > 0.0 { g } else { 0.0 }).collect();
                self.accumulate(grads, *a, self.like(*a, d));
            }
            Op::SoftmaxRows(a) => {
                let c = *out.shape().last().unwrap();
                let mut d = vec![0.0; out.len()];
                for ((dr, gr), yr) in
                    d.chunks_exact_mut(c).zip(g.data().chunks_exact(c)).zip(out.data().chunks_exact(c))
                {
                    let s: f64 = gr.iter().zip(yr).map(|(g, y)| g * y).sum();
                    for ((o, g), y) in dr.iter_mut().zip(gr).zip(yr) {
                        *o = y * (g - s);
                    }
                }
                self.accumulate(grads, *a, self.like(*a, d));
            }
            Op::Conv1d { x, w, dilation } => self.conv1d_backward(*x, *w, *dilation, g, grads),
            Op::ChannelMix(x, w) => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let [c_in, c_out] = tw.dims2()?;
                let rows = tx.len() / c_in.max(1);
                if self.tracked(*x) {
                    let mut d = vec![0.0; tx.len()];
                    gemm(rows, c_out, c_in, g.data(), G::N, tw.data(), G::T, 0.0, &mut d);
                    self.accumulate(grads, *x, self.like(*x, d));
                }
                if self.tracked(*w) {
                    let mut d = vec![0.0; tw.len()];
                    gemm(c_in, rows, c_out, tx.data(), G::T, g.data(), G::N, 0.0, &mut d);
                    self.accumulate(grads, *w, self.like(*w, d));
                }
            }
            Op::NodeMix(adj, x) => {
                let (ta, tx) = (self.value(*adj), self.value(*x));
                let n = ta.shape()[0];
                let b = tx.shape()[0];
                let feat = numel(&tx.shape()[2..]);
                let block = n * feat;
                if self.tracked(*x) {
                    let mut d = vec![0.0; tx.len()];
                    for bi in 0..b {
                        let gs = &g.data()[bi * block..(bi + 1) * block];
                        gemm(n, n, feat, ta.data(), G::T, gs, G::N, 0.0, &mut d[bi * block..(bi + 1) * block]);
                    }
                    self.accumulate(grads, *x, self.like(*x, d));
                }
                if self.tracked(*adj) {
                    let mut d = vec![0.0; n * n];
                    for bi in 0..b {
                        let gs = &g.data()[bi * block..(bi + 1) * block];
                        let xs = &tx.data()[bi * block..(bi + 1) * block];
                        gemm(n, feat, n, gs, G::N, xs, G::T, 1.0, &mut d);
                    }
                    self.accumulate(grads, *adj, self.like(*adj, d));
                }
            }
            Op::MeanLast(a) => {
                let l = *self.value(*a).shape().last().unwrap();
                let inv = 1.0 / l as f64;
                let d = g.data().iter().flat_map(|&v| std::iter::repeat_n(v * inv, l)).collect();
                self.accumulate(grads, *a, self.like(*a, d));
            }
            Op::Sum(a) => {
                let shape = self.value(*a).shape().to_vec();
                self.accumulate(grads, *a, Tensor::full(shape, g.item()));
            }
            Op::Nll { probs, labels } => {
                let tp = self.value(*probs);
                let c = tp.shape()[1];
                let scale = g.item() / labels.len() as f64;
                let mut d = vec![0.0; tp.len()];
                for (i, &l) in labels.iter().enumerate() {
                    let p = tp.data()[i * c + l];
                    if p > PROB_FLOOR {
                        d[i * c + l] = -scale / p;
                    }
                }
                self.accumulate(grads, *probs, self.like(*probs, d));
            }
            Op::Custom { inputs, backward } => {
                let vals: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
                let gs = backward(g, &vals, out);
                if gs.len() != inputs.len() {
                    return Err(Error::Contract(format!(
                        "custom backward returned {} gradients for {} inputs",
                        gs.len(),
                        inputs.len()
                    )));
                }
                for (&v, gi) in inputs.iter().zip(gs) {
                    if gi.shape() != self.value(v).shape() {
                        return Err(dim_err("custom backward", gi.shape(), self.value(v).shape()));
                    }
                    self.accumulate(grads, v, gi);
                }
            }
        }
        Ok(())
    }

    fn conv1d_backward(&self, x: Var, w: Var, dilation: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let (tx, tw) = (self.value(x), self.value(w));
        let &[ks, c_in, c_out] = tw.shape() else { unreachable!() };
        let t = tx.shape()[tx.rank() - 2];
        let rows = tx.len() / (t * c_in).max(1);
        let half = (ks - 1) / 2;
        let (need_x, need_w) = (self.tracked(x), self.tracked(w));
        let mut dx = if need_x { vec![0.0; tx.len()] } else { Vec::new() };
        let mut dw = if need_w { vec![0.0; tw.len()] } else { Vec::new() };

        for tap in 0..ks {
            let off = (tap as isize - half as isize) * dilation as isize;
            let span = tap * c_in * c_out..(tap + 1) * c_in * c_out;
            if off == 0 {
                if need_x {
                    gemm(rows * t, c_out, c_in, g.data(), G::N, &tw.data()[span.clone()], G::T, 1.0, &mut dx);
                }
                if need_w {
                    gemm(c_in, rows * t, c_out, tx.data(), G::T, g.data(), G::N, 1.0, &mut dw[span]);
                }
                continue;
            }
            let Some((t0, t1)) = tap_range(t, off) else { continue };
            let len = t1 - t0;
            for row in 0..rows {
                let xs = row * t * c_in + ((t0 as isize + off) as usize) * c_in;
                let gs = row * t * c_out + t0 * c_out;
                let g_blk = &g.data()[gs..gs + len * c_out];
                if need_x {
                    gemm(
                        len,
                        c_out,
                        c_in,
                        g_blk,
                        G::N,
                        &tw.data()[span.clone()],
                        G::T,
                        1.0,
                        &mut dx[xs..xs + len * c_in],
                    );
                }
                if need_w {
                    gemm(
                        c_in,
                        len,
                        c_out,
                        &tx.data()[xs..xs + len * c_in],
                        G::T,
                        g_blk,
                        G::N,
                        1.0,
                        &mut dw[span.clone()],
                    );
                }
            }
        }
        if need_x {
            self.accumulate(grads, x, self.like(x, dx));
        }
        if need_w {
            self.accumulate(grads, w, self.like(w, dw));
        }
    }
}
