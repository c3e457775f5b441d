//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! Every operation appends a node holding its forward value and the handles
//! of its inputs. [`Tape::backward`] walks the nodes in reverse recording
//! order and applies each node's local rule, accumulating into per-node
//! gradient buffers. Model parameters live outside the tape: a training step
//! registers them as leaves, runs the forward pass, pulls gradients, and then
//! drops or clears the tape.

use super::tensor::{matmul_acc, matmul_nt_acc, matmul_tn_acc, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    Sum(Var),
    Mean(Var),
    ConcatCols(Vec<Var>),
    StackRows(Vec<Var>),
    Reshape(Var),
    Clip(Var, f64, f64),
    Conv1d {
        input: Var,
        kernels: Var,
        bias: Var,
        width: usize,
        stride: usize,
    },
    BceWithLogits(Var, Vec<f64>),
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b)
            | Op::MatMulNt(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b) => vec![*a, *b],
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::SoftmaxRows(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Reshape(a)
            | Op::Clip(a, _, _)
            | Op::BceWithLogits(a, _) => vec![*a],
            Op::ConcatCols(vs) | Op::StackRows(vs) => vs.clone(),
            Op::Conv1d {
                input,
                kernels,
                bias,
                ..
            } => vec![*input, *kernels, *bias],
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of a forward computation. Single owner, not shareable.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of `shape` when the loss does not depend on it.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(shape.0, shape.1))
    }
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

    /// Drops every recorded node. Handles from before the call are invalid.
    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Differentiable leaf (a trainable parameter).
    pub fn param(&mut self, value: &Tensor) -> Var {
        self.leaf(value.clone(), true)
    }

    /// Constant leaf; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ` without materializing the transpose.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul_nt(self.value(b))?;
        Ok(self.push(out, Op::MatMulNt(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    fn zip_with(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape(op, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(ta.rows(), ta.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("add", a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("sub", a, b, |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("mul", a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Adds the `1xq` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(bias));
        if tb.rows() != 1 || tb.cols() != ta.cols() {
            return Err(Error::shape("add_row", ta.shape(), tb.shape()));
        }
        let mut out = ta.clone();
        let q = ta.cols();
        for (i, x) in out.data_mut().iter_mut().enumerate() {
            *x += tb.data()[i % q];
        }
        Ok(self.push(out, Op::AddRow(a, bias)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x * c);
        self.push(out, Op::Scale(a, c))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = softmax_rows(self.value(a));
        self.push(out, Op::SoftmaxRows(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).mean());
        self.push(out, Op::Mean(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::contract("concat_cols of zero tensors"))?;
        let rows = self.value(*first).rows();
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(Error::shape("concat_cols", self.shape(*first), self.shape(p)));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::from_vec(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::contract("stack_rows of zero tensors"))?;
        let cols = self.value(*first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(Error::shape("stack_rows", self.shape(*first), t.shape()));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let out = Tensor::from_vec(rows, cols, data)?;
        Ok(self.push(out, Op::StackRows(parts.to_vec())))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let out = self.value(a).clone().reshape(rows, cols)?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    /// Clamps entries to `[lo, hi]`; gradient passes only where unclipped.
    pub fn clip(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(out, Op::Clip(a, lo, hi))
    }

    /// Valid (unpadded) 1-D cross-correlation.
    ///
    /// `input` is `c_in x len`, `kernels` is `c_out x (c_in * width)` with
    /// each row laid out channel-major, `bias` is `1 x c_out`. The output is
    /// `c_out x ((len - width) / stride + 1)`.
    pub fn conv1d(&mut self, input: Var, kernels: Var, bias: Var, width: usize, stride: usize) -> Result<Var> {
        let (x, k, b) = (self.value(input), self.value(kernels), self.value(bias));
        let (c_in, len) = x.shape();
        let c_out = k.rows();
        if width == 0 || stride == 0 {
            return Err(Error::config("conv1d width and stride must be positive"));
        }
        if width > len {
            return Err(Error::shape("conv1d", x.shape(), (c_in, width)));
        }
        if k.cols() != c_in * width {
            return Err(Error::shape("conv1d", x.shape(), k.shape()));
        }
        if b.shape() != (1, c_out) {
            return Err(Error::shape("conv1d bias", k.shape(), b.shape()));
        }
        let out_len = (len - width) / stride + 1;
        let mut out = Tensor::zeros(c_out, out_len);
        for o in 0..c_out {
            let krow = k.row(o);
            for j in 0..out_len {
                let mut acc = b.data()[o];
                for ci in 0..c_in {
                    let xs = &x.row(ci)[j * stride..j * stride + width];
                    let ks = &krow[ci * width..(ci + 1) * width];
                    acc += xs.iter().zip(ks).map(|(a, b)| a * b).sum::<f64>();
                }
                out.set(o, j, acc);
            }
        }
        Ok(self.push(
            out,
            Op::Conv1d {
                input,
                kernels,
                bias,
                width,
                stride,
            },
        ))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against `targets`,
    /// computed stably from the logits.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let z = self.value(logits);
        if z.len() != targets.len() || z.is_empty() {
            return Err(Error::shape("bce_with_logits", z.shape(), (targets.len(), 1)));
        }
        let total: f64 = z
            .data()
            .iter()
            .zip(targets)
            .map(|(&x, &t)| softplus(x) - t * x)
            .sum();
        let out = Tensor::scalar(total / targets.len() as f64);
        Ok(self.push(out, Op::BceWithLogits(logits, targets.to_vec())))
    }

    /// Gradients of the scalar `loss` with respect to every node that
    /// requires them.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let active: Vec<bool> = self.nodes.iter().map(|n| n.requires_grad).collect();
        self.run_backward(loss, active)
    }

    /// Like [`Tape::backward`], but only propagates along paths that reach
    /// one of `wrt`. Gradients of other leaves are left empty.
    pub fn backward_wrt(&self, loss: Var, wrt: &[Var]) -> Result<Gradients> {
        let mut active = vec![false; self.nodes.len()];
        for &v in wrt {
            active[v.0] = self.nodes[v.0].requires_grad;
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if !active[i] && node.requires_grad {
                active[i] = node.op.inputs().iter().any(|v| active[v.0]);
            }
        }
        self.run_backward(loss, active)
    }

    fn run_backward(&self, loss: Var, active: Vec<bool>) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            if !active[i] {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &active, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Tensor>], active: &[bool], v: Var) -> Option<&'g mut Tensor> {
        if !active[v.0] {
            return None;
        }
        let (r, c) = self.nodes[v.0].value.shape();
        Some(grads[v.0].get_or_insert_with(|| Tensor::zeros(r, c)))
    }

    fn backprop_node(&self, i: usize, g: &Tensor, active: &[bool], grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if let Some(ga) = self.slot(grads, active, *a) {
                    matmul_nt_acc(g, val(*b), ga);
                }
                if let Some(gb) = self.slot(grads, active, *b) {
                    matmul_tn_acc(val(*a), g, gb);
                }
            }
            Op::MatMulNt(a, b) => {
                if let Some(ga) = self.slot(grads, active, *a) {
                    matmul_acc(g, val(*b), ga);
                }
                if let Some(gb) = self.slot(grads, active, *b) {
                    matmul_tn_acc(g, val(*a), gb);
                }
            }
            Op::Transpose(a) => {
                if let Some(ga) = self.slot(grads, active, *a) {
                    ga.add_assign(&g.transpose());
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = self.slot(grads, active, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = self.slot(grads, active, *b) {
                    gb.add_assign(g);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.slot(grads, active, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = self.slot(grads, active, *b) {
                    for (x, d) in gb.data_mut().iter_mut().zip(g.data()) {
                        *x -= d;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                if let Some(ga) = self.slot(grads, active, *a) {
                    for ((x, d), y) in ga.data_mut().iter_mut().zip(g.data()).zip(vb.data()) {
                        *x += d * y;
                    }
                }
                if let Some(gb) = self.slot(grads, active, *b) {
                    for ((x, d), y) in gb.data_mut().iter_mut().zip(g.data()).zip(va.data()) {
                        *x += d * y;
                    }
                }
            }
            Op::AddRow(a, bias) => {
                if let Some(ga) = self.slot(grads, active, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = self.slot(grads, active, *bias) {
                    let q = g.cols();
                    for (k, d) in g.data().iter().enumerate() {
                        gb.data_mut()[k % q] += d;
                    }
                }
            }
            Op::Scale(a, c) => {
                if let Some(ga) = self.slot(grads, active, *a) {
                    for (x, d) in ga.data_mut().iter_mut().zip(g.data()) {
                        *x += c * d;
                    }
                }
            }
            Op::Relu(a) => {
                let va = val(*a);
                if let Some(ga) = self.slot(grads, active, *a) {
                    for ((x, d), &inp) in ga.data_mut().iter_mut().zip(g.data()).zip(va.data()) {
                        if inp > 0.0 {
                            *x += d;
                        }
                    }
                }
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                if let Some(ga) = self.slot(grads, active, *a) {
                    for ((x, d), &s) in ga.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *x += d * s * (1.0 - s);
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                if let Some(ga) = self.slot(grads, active, *a) {
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        let cols = y.cols();
                        let out = &mut ga.data_mut()[r * cols..(r + 1) * cols];
                        for ((x, &p), &q) in out.iter_mut().zip(yr).zip(gr) {
                            *x += p * (q - dot);
                        }
                    }
                }
            }
            Op::Sum(a) => {
                let d = g.item();
                if let Some(ga) = self.slot(grads, active, *a) {
                    ga.data_mut().iter_mut().for_each(|x| *x += d);
                }
            }
            Op::Mean(a) => {
                let n = val(*a).len() as f64;
                let d = g.item() / n;
                if let Some(ga) = self.slot(grads, active, *a) {
                    ga.data_mut().iter_mut().for_each(|x| *x += d);
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).cols();
                    if let Some(gp) = self.slot(grads, active, p) {
                        for r in 0..g.rows() {
                            let src = &g.row(r)[offset..offset + w];
                            let dst = &mut gp.data_mut()[r * w..(r + 1) * w];
                            for (x, d) in dst.iter_mut().zip(src) {
                                *x += d;
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::StackRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = val(p).len();
                    if let Some(gp) = self.slot(grads, active, p) {
                        for (x, d) in gp.data_mut().iter_mut().zip(&g.data()[offset..offset + n]) {
                            *x += d;
                        }
                    }
                    offset += n;
                }
            }
            Op::Reshape(a) => {
                if let Some(ga) = self.slot(grads, active, *a) {
                    for (x, d) in ga.data_mut().iter_mut().zip(g.data()) {
                        *x += d;
                    }
                }
            }
            Op::Clip(a, lo, hi) => {
                let va = val(*a);
                if let Some(ga) = self.slot(grads, active, *a) {
                    for ((x, d), &inp) in ga.data_mut().iter_mut().zip(g.data()).zip(va.data()) {
                        if inp >= *lo && inp <= *hi {
                            *x += d;
                        }
                    }
                }
            }
            Op::Conv1d {
                input,
                kernels,
                bias,
                width,
                stride,
            } => {
                let (x, k) = (val(*input), val(*kernels));
                let (c_in, c_out, width, stride) = (x.rows(), k.rows(), *width, *stride);
                let out_len = g.cols();
                if let Some(gx) = self.slot(grads, active, *input) {
                    for o in 0..c_out {
                        for j in 0..out_len {
                            let d = g.get(o, j);
                            if d == 0.0 {
                                continue;
                            }
                            for ci in 0..c_in {
                                for t in 0..width {
                                    let idx = ci * x.cols() + j * stride + t;
                                    gx.data_mut()[idx] += d * k.get(o, ci * width + t);
                                }
                            }
                        }
                    }
                }
                if let Some(gk) = self.slot(grads, active, *kernels) {
                    for o in 0..c_out {
                        for j in 0..out_len {
                            let d = g.get(o, j);
                            if d == 0.0 {
                                continue;
                            }
                            for ci in 0..c_in {
                                for t in 0..width {
                                    let idx = o * gk.cols() + ci * width + t;
                                    gk.data_mut()[idx] += d * x.get(ci, j * stride + t);
                                }
                            }
                        }
                    }
                }
                if let Some(gb) = self.slot(grads, active, *bias) {
                    for o in 0..c_out {
                        gb.data_mut()[o] += g.row(o).iter().sum::<f64>();
                    }
                }
            }
            Op::BceWithLogits(a, targets) => {
                let z = val(*a);
                let scale = g.item() / targets.len() as f64;
                if let Some(ga) = self.slot(grads, active, *a) {
                    for ((x, &zi), &t) in ga.data_mut().iter_mut().zip(z.data()).zip(targets) {
                        *x += scale * (sigmoid(zi) - t);
                    }
                }
            }
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn softmax_rows(m: &Tensor) -> Tensor {
    let mut out = m.clone();
    let cols = m.cols();
    for row in out.data_mut().chunks_mut(cols.max(1)) {
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut total = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            total += *x;
        }
        for x in row.iter_mut() {
            *x /= total;
        }
    }
    out
}
