//! Reverse-mode differentiation over an append-only tape.
//!
//! A [`Graph`] records every operation of one forward pass. Nodes are only ever
//! appended, so node ids are a topological order and [`Graph::backward`] can
//! walk them once in reverse.

use super::tensor::{matmul_at_raw, matmul_bt_raw, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How the right operand of an elementwise binary op is broadcast against the
/// left one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bcast {
    Same,
    /// `1 × c` against `n × c`.
    Row,
    /// `n × 1` against `n × c`.
    Col,
    Scalar,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var, Bcast),
    Sub(Var, Var, Bcast),
    Mul(Var, Var, Bcast),
    Div(Var, Var, Bcast),
    MatMul(Var, Var),
    Transpose(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    RowL2Norm(Var),
    RowSoftmax(Var),
    LogSoftmax(Var),
    Sigmoid(Var),
    Softplus(Var),
    Mean(Var),
    Sum(Var),
    SumRows(Var),
    StopGradient,
    ConcatRows(Vec<Var>),
    Clamp(Var, f64, f64),
    GradReverse(Var, f64),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// The tape. One graph per forward pass; not shared between threads.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

fn bcast_kind(op: &'static str, lhs: &Tensor, rhs: &Tensor) -> Result<Bcast> {
    if lhs.shape() == rhs.shape() {
        return Ok(Bcast::Same);
    }
    if rhs.len() == 1 {
        return Ok(Bcast::Scalar);
    }
    let (n, c) = lhs.dims2();
    let (rn, rc) = rhs.dims2();
    if lhs.len() == rhs.len() && n == rn && c == rc {
        return Ok(Bcast::Same);
    }
    if rn == 1 && rc == c {
        return Ok(Bcast::Row);
    }
    if rc == 1 && rn == n {
        return Ok(Bcast::Col);
    }
    Err(Error::shape(
        op,
        format!("cannot broadcast {:?} against {:?}", rhs.shape(), lhs.shape()),
    ))
}

#[inline]
fn bcast_index(kind: Bcast, idx: usize, cols: usize) -> usize {
    match kind {
        Bcast::Same => idx,
        Bcast::Row => idx % cols,
        Bcast::Col => idx / cols,
        Bcast::Scalar => 0,
    }
}

fn binary_forward(
    lhs: &Tensor,
    rhs: &Tensor,
    kind: Bcast,
    f: impl Fn(f64, f64) -> f64,
) -> Tensor {
    let cols = lhs.cols().max(1);
    let r = rhs.data();
    let data = lhs
        .data()
        .iter()
        .enumerate()
        .map(|(i, &a)| f(a, r[bcast_index(kind, i, cols)]))
        .collect();
    Tensor::new(lhs.shape().to_vec(), data).expect("shape preserved")
}

fn accumulate(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; len])
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

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric { op: name });
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, true, "param")
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, false, "constant")
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        make: fn(Var, Var, Bcast) -> Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        let kind = bcast_kind(name, self.value(a), self.value(b))?;
        let value = binary_forward(self.value(a), self.value(b), kind, f);
        let rg = self.rg(&[a, b]);
        self.push(value, make(a, b, kind), rg, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, Op::Add, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, Op::Sub, |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, Op::Mul, |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, Op::Div, |x, y| x / y)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        self.push(value, Op::MatMul(a, b), rg, "matmul")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose();
        let rg = self.rg(&[a]);
        self.push(value, Op::Transpose(a), rg, "transpose")
    }

    fn unary(
        &mut self,
        name: &'static str,
        a: Var,
        op: Op,
        f: impl Fn(f64) -> f64,
    ) -> Result<Var> {
        let value = self.value(a).map(f);
        let rg = self.rg(&[a]);
        self.push(value, op, rg, name)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary("scale", a, Op::Scale(a, c), |x| c * x)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary("add_scalar", a, Op::AddScalar(a), |x| x + c)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary("relu", a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary("exp", a, Op::Exp(a), f64::exp)
    }

    /// Natural log. Non-positive inputs produce a numeric error; callers clamp
    /// probabilities first.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary("log", a, Op::Log(a), f64::ln)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary("square", a, Op::Square(a), |x| x * x)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, Op::Sigmoid(a), stable_sigmoid)
    }

    /// `log(1 + exp(x))`, computed without overflow.
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary("softplus", a, Op::Softplus(a), |x| {
            x.max(0.0) + (-x.abs()).exp().ln_1p()
        })
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        if lo > hi {
            return Err(Error::config(format!("clamp bounds {lo} > {hi}")));
        }
        self.unary("clamp", a, Op::Clamp(a, lo, hi), |x| x.clamp(lo, hi))
    }

    pub fn clamp_min(&mut self, a: Var, lo: f64) -> Result<Var> {
        self.clamp(a, lo, f64::INFINITY)
    }

    /// Per-row Euclidean norm, `n × c → n × 1`.
    pub fn row_l2_norm(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (n, _) = x.dims2();
        let data = (0..n)
            .map(|r| x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let value = Tensor::matrix(n, 1, data)?;
        let rg = self.rg(&[a]);
        self.push(value, Op::RowL2Norm(a), rg, "row_l2_norm")
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).softmax_rows();
        let rg = self.rg(&[a]);
        self.push(value, Op::RowSoftmax(a), rg, "softmax_rows")
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (n, c) = x.dims2();
        let mut data = x.data().to_vec();
        for r in 0..n {
            let row = &mut data[r * c..(r + 1) * c];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let value = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.rg(&[a]);
        self.push(value, Op::LogSoftmax(a), rg, "log_softmax_rows")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.is_empty() {
            return Err(Error::shape("mean", "empty tensor"));
        }
        let value = Tensor::scalar(x.data().iter().sum::<f64>() / x.len() as f64);
        let rg = self.rg(&[a]);
        self.push(value, Op::Mean(a), rg, "mean")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        let rg = self.rg(&[a]);
        self.push(value, Op::Sum(a), rg, "sum")
    }

    /// Per-row sum, `n × c → n × 1`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (n, _) = x.dims2();
        let data = (0..n).map(|r| x.row(r).iter().sum()).collect();
        let value = Tensor::matrix(n, 1, data)?;
        let rg = self.rg(&[a]);
        self.push(value, Op::SumRows(a), rg, "sum_rows")
    }

    /// Copies the value and cuts the gradient path.
    pub fn stop_gradient(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).clone();
        self.push(value, Op::StopGradient, false, "stop_gradient")
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(Error::shape("concat_rows", "no inputs"));
        };
        let cols = self.value(*first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(Error::shape(
                    "concat_rows",
                    format!("column count {} vs {}", t.cols(), cols),
                ));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let value = Tensor::matrix(rows, cols, data)?;
        let rg = self.rg(parts);
        self.push(value, Op::ConcatRows(parts.to_vec()), rg, "concat_rows")
    }

    /// Identity on the forward pass; multiplies the incoming gradient by
    /// `-coeff` on the backward pass.
    pub fn grad_reverse(&mut self, a: Var, coeff: f64) -> Result<Var> {
        if coeff < 0.0 {
            return Err(Error::config(format!("grad_reverse coeff {coeff} < 0")));
        }
        let value = self.value(a).clone();
        let rg = self.rg(&[a]);
        self.push(value, Op::GradReverse(a, coeff), rg, "grad_reverse")
    }

    /// Gradient of the scalar `loss` with respect to every node that requires
    /// one.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                grads[id] = None;
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.backward_node(node, &g, &mut grads);
            grads[id] = Some(g);
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.map(|d| Tensor::new(self.nodes[i].value.shape().to_vec(), d).expect("same shape"))
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn backward_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf | Op::StopGradient => {}
            Op::Add(a, b, k) | Op::Sub(a, b, k) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                self.acc_lhs(*a, grads, |i| g[i]);
                self.acc_rhs(*b, *k, y.cols(), y.len(), grads, |i| sign * g[i]);
            }
            Op::Mul(a, b, k) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let cols = y.cols();
                self.acc_lhs(*a, grads, |i| g[i] * bv[bcast_index(*k, i, cols)]);
                self.acc_rhs(*b, *k, cols, y.len(), grads, |i| g[i] * av[i]);
            }
            Op::Div(a, b, k) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let cols = y.cols();
                self.acc_lhs(*a, grads, |i| g[i] / bv[bcast_index(*k, i, cols)]);
                self.acc_rhs(*b, *k, cols, y.len(), grads, |i| {
                    let d = bv[bcast_index(*k, i, cols)];
                    -g[i] * av[i] / (d * d)
                });
            }
            Op::MatMul(a, b) => {
                let (at, bt) = (self.value(*a), self.value(*b));
                let (n, k) = at.dims2();
                let m = bt.cols();
                if self.requires_grad(*a) {
                    let ga = matmul_bt_raw(g, bt.data(), n, m, k);
                    add_into(accumulate(&mut grads[a.0], n * k), &ga);
                }
                if self.requires_grad(*b) {
                    let gb = matmul_at_raw(at.data(), g, n, k, m);
                    add_into(accumulate(&mut grads[b.0], k * m), &gb);
                }
            }
            Op::Transpose(a) => {
                let (r, c) = y.dims2();
                self.acc_lhs(*a, grads, |i| {
                    // input (c × r) index i = (ci, ri) maps to output (ri, ci)
                    let (ci, ri) = (i / r, i % r);
                    g[ri * c + ci]
                });
            }
            Op::Scale(a, c) => self.acc_lhs(*a, grads, |i| c * g[i]),
            Op::AddScalar(a) => self.acc_lhs(*a, grads, |i| g[i]),
            Op::Relu(a) => {
                let x = self.value(*a).data();
                self.acc_lhs(*a, grads, |i| if x[i] > 0.0 { g[i] } else { 0.0 });
            }
            Op::Exp(a) => self.acc_lhs(*a, grads, |i| g[i] * y.data()[i]),
            Op::Log(a) => {
                let x = self.value(*a).data();
                self.acc_lhs(*a, grads, |i| g[i] / x[i]);
            }
            Op::Square(a) => {
                let x = self.value(*a).data();
                self.acc_lhs(*a, grads, |i| 2.0 * x[i] * g[i]);
            }
            Op::Sigmoid(a) => {
                let s = y.data();
                self.acc_lhs(*a, grads, |i| g[i] * s[i] * (1.0 - s[i]));
            }
            Op::Softplus(a) => {
                let x = self.value(*a).data();
                self.acc_lhs(*a, grads, |i| g[i] * stable_sigmoid(x[i]));
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.value(*a).data();
                self.acc_lhs(*a, grads, |i| {
                    if x[i] >= *lo && x[i] <= *hi {
                        g[i]
                    } else {
                        0.0
                    }
                });
            }
            Op::GradReverse(a, c) => self.acc_lhs(*a, grads, |i| -c * g[i]),
            Op::RowL2Norm(a) => {
                let x = self.value(*a);
                let c = x.cols();
                let norms = y.data();
                self.acc_lhs(*a, grads, |i| {
                    let r = i / c;
                    if norms[r] > 0.0 {
                        g[r] * x.data()[i] / norms[r]
                    } else {
                        0.0
                    }
                });
            }
            Op::RowSoftmax(a) => {
                let (n, c) = y.dims2();
                let s = y.data();
                let dots: Vec<f64> = (0..n)
                    .map(|r| (0..c).map(|j| g[r * c + j] * s[r * c + j]).sum())
                    .collect();
                self.acc_lhs(*a, grads, |i| s[i] * (g[i] - dots[i / c]));
            }
            Op::LogSoftmax(a) => {
                let (n, c) = y.dims2();
                let ls = y.data();
                let gsum: Vec<f64> = (0..n).map(|r| g[r * c..(r + 1) * c].iter().sum()).collect();
                self.acc_lhs(*a, grads, |i| g[i] - ls[i].exp() * gsum[i / c]);
            }
            Op::Mean(a) => {
                let n = self.value(*a).len() as f64;
                self.acc_lhs(*a, grads, |_| g[0] / n);
            }
            Op::Sum(a) => self.acc_lhs(*a, grads, |_| g[0]),
            Op::SumRows(a) => {
                let c = self.value(*a).cols();
                self.acc_lhs(*a, grads, |i| g[i / c]);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if self.requires_grad(p) {
                        let slot = accumulate(&mut grads[p.0], len);
                        add_into(slot, &g[offset..offset + len]);
                    }
                    offset += len;
                }
            }
        }
    }

    fn acc_lhs(&self, a: Var, grads: &mut [Option<Vec<f64>>], f: impl Fn(usize) -> f64) {
        if !self.requires_grad(a) {
            return;
        }
        let len = self.value(a).len();
        let slot = accumulate(&mut grads[a.0], len);
        for (i, s) in slot.iter_mut().enumerate() {
            *s += f(i);
        }
    }

    /// Accumulates into a possibly broadcast right operand; `f` is indexed by
    /// output element, `out_len` is the output length.
    fn acc_rhs(
        &self,
        b: Var,
        kind: Bcast,
        cols: usize,
        out_len: usize,
        grads: &mut [Option<Vec<f64>>],
        f: impl Fn(usize) -> f64,
    ) {
        if !self.requires_grad(b) {
            return;
        }
        let blen = self.value(b).len();
        let slot = accumulate(&mut grads[b.0], blen);
        for i in 0..out_len {
            slot[bcast_index(kind, i, cols)] += f(i);
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

