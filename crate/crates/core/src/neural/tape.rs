//! Reverse-mode differentiation over a flat operation record.
//!
//! Every operation is appended to the [`Tape`] together with its forward
//! value, so node indices are already a topological order. [`Tape::backward`]
//! walks that order in reverse, visiting each node once and accumulating
//! vector-Jacobian products additively at fan-out. The tape itself is not
//! modified by a backward pass, so it can be differentiated repeatedly.

use std::fmt;
use std::sync::Arc;

use super::tensor::Tensor;
use crate::Error;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A fused primitive with a hand-written vector-Jacobian product.
pub trait CustomOp: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Gradients with respect to each input, given the gradient of the output.
    fn vjp(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>>;
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MatMul(Var, Var),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Sin(Var),
    Cos(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Sum(Var),
    SumRows(Var),
    SumCols(Var),
    Gather(Var, Arc<[usize]>),
    Concat(Vec<Var>),
    Reshape(Var),
    StraightThrough(Var),
    Custom(Arc<dyn CustomOp>, Vec<Var>),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, zeros shaped like `like` when `v` got none.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.rows(), like.cols()))
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn check_same(&self, a: Var, b: Var, what: &str) {
        assert_eq!(
            self.value(a).shape(),
            self.value(b).shape(),
            "{what}: operand shapes differ"
        );
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.check_same(a, b, "add");
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(&[a, b]);
        self.push(v, Op::Add(a, b), rg)
    }

    /// Adds a `1 x n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (m, n) = self.value(a).shape();
        assert_eq!(self.value(row).shape(), (1, n), "add_row: bias shape");
        let r = self.value(row).data().to_vec();
        let mut v = self.value(a).clone();
        for i in 0..m {
            for (x, b) in v.data_mut()[i * n..(i + 1) * n].iter_mut().zip(&r) {
                *x += b;
            }
        }
        let rg = self.rg(&[a, row]);
        self.push(v, Op::AddRow(a, row), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.check_same(a, b, "sub");
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(&[a, b]);
        self.push(v, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.check_same(a, b, "mul");
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(&[a, b]);
        self.push(v, Op::Mul(a, b), rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        let rg = self.rg(&[a, b]);
        self.push(v, Op::MatMul(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x * c);
        let rg = self.rg(&[a]);
        self.push(v, Op::Scale(a, c), rg)
    }

    /// Multiplies `a` by the scalar node `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Var {
        let c = self.value(s).item();
        let v = self.value(a).map(|x| x * c);
        let rg = self.rg(&[a, s]);
        self.push(v, Op::ScaleBy(a, s), rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        let rg = self.rg(&[a]);
        self.push(v, Op::AddScalar(a), rg)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let v = self.value(a).map(f);
        let rg = self.rg(&[a]);
        self.push(v, op, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.unary(a, f64::sin, Op::Sin(a))
    }

    pub fn cos(&mut self, a: Var) -> Var {
        self.unary(a, f64::cos, Op::Cos(a))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let v = row_softmax(self.value(a));
        let rg = self.rg(&[a]);
        self.push(v, Op::Softmax(a), rg)
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let v = row_log_softmax(self.value(a));
        let rg = self.rg(&[a]);
        self.push(v, Op::LogSoftmax(a), rg)
    }

    /// Sum of all entries, as a scalar node.
    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(&[a]);
        self.push(v, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Column sums, `m x n -> 1 x n`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (m, n) = t.shape();
        let mut out = vec![0.0; n];
        for i in 0..m {
            for (o, x) in out.iter_mut().zip(t.row_slice(i)) {
                *o += x;
            }
        }
        let rg = self.rg(&[a]);
        self.push(Tensor::new(1, n, out), Op::SumRows(a), rg)
    }

    /// Row sums, `m x n -> m x 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let out = (0..t.rows()).map(|i| t.row_slice(i).iter().sum()).collect();
        let rg = self.rg(&[a]);
        self.push(Tensor::column(out), Op::SumCols(a), rg)
    }

    /// Selects columns: `out[r][j] = a[r][idx[j]]`. Indices may repeat.
    pub fn gather(&mut self, a: Var, idx: impl Into<Arc<[usize]>>) -> Var {
        let idx: Arc<[usize]> = idx.into();
        let t = self.value(a);
        let (m, n) = t.shape();
        assert!(idx.iter().all(|&j| j < n), "gather index out of range");
        let mut out = Vec::with_capacity(m * idx.len());
        for i in 0..m {
            let row = t.row_slice(i);
            out.extend(idx.iter().map(|&j| row[j]));
        }
        let rg = self.rg(&[a]);
        let k = idx.len();
        self.push(Tensor::new(m, k, out), Op::Gather(a, idx), rg)
    }

    pub fn columns(&mut self, a: Var, range: std::ops::Range<usize>) -> Var {
        let idx: Vec<usize> = range.collect();
        self.gather(a, idx)
    }

    /// Concatenates along columns; all parts must have the same row count.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let m = self.value(parts[0]).rows();
        assert!(
            parts.iter().all(|&p| self.value(p).rows() == m),
            "concat: row counts differ"
        );
        let n: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for &p in parts {
                out.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        let rg = self.rg(parts);
        self.push(Tensor::new(m, n, out), Op::Concat(parts.to_vec()), rg)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let v = self.value(a).clone().reshaped(rows, cols);
        let rg = self.rg(&[a]);
        self.push(v, Op::Reshape(a), rg)
    }

    /// Forward value `hard`, gradient routed unchanged to `soft`.
    pub fn straight_through(&mut self, hard: Tensor, soft: Var) -> Var {
        assert_eq!(hard.shape(), self.value(soft).shape(), "straight-through shapes");
        let rg = self.rg(&[soft]);
        self.push(hard, Op::StraightThrough(soft), rg)
    }

    pub fn custom(&mut self, op: Arc<dyn CustomOp>, inputs: &[Var], value: Tensor) -> Var {
        let rg = self.rg(inputs);
        self.push(value, Op::Custom(op, inputs.to_vec()), rg)
    }

    /// Reverse pass from a scalar `loss` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients, Error> {
        let node = self
            .nodes
            .get(loss.0)
            .ok_or_else(|| Error::InvalidArgument(format!("node {} is not on the tape", loss.0)))?;
        if node.value.len() != 1 {
            return Err(Error::Shape(format!(
                "loss must be scalar, got {:?}",
                node.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, t: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                let (m, n) = g.shape();
                let mut s = vec![0.0; n];
                for i in 0..m {
                    for (o, x) in s.iter_mut().zip(g.row_slice(i)) {
                        *o += x;
                    }
                }
                acc(*row, Tensor::new(1, n, s));
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip_map(val(*b), |x, y| x * y));
                acc(*b, g.zip_map(val(*a), |x, y| x * y));
            }
            Op::MatMul(a, b) => {
                if self.nodes[a.0].requires_grad {
                    acc(*a, g.matmul_t(val(*b)));
                }
                if self.nodes[b.0].requires_grad {
                    acc(*b, val(*a).t_matmul(g));
                }
            }
            Op::Scale(a, c) => acc(*a, g.map(|x| x * c)),
            Op::ScaleBy(a, s) => {
                let c = val(*s).item();
                acc(*a, g.map(|x| x * c));
                let ds: f64 = g.data().iter().zip(val(*a).data()).map(|(x, y)| x * y).sum();
                acc(*s, Tensor::scalar(ds));
            }
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::Sigmoid(a) => acc(*a, g.zip_map(y, |g, y| g * y * (1.0 - y))),
            Op::Tanh(a) => acc(*a, g.zip_map(y, |g, y| g * (1.0 - y * y))),
            Op::Exp(a) => acc(*a, g.zip_map(y, |g, y| g * y)),
            Op::Log(a) => acc(*a, g.zip_map(val(*a), |g, x| g / x)),
            Op::Sin(a) => acc(*a, g.zip_map(val(*a), |g, x| g * x.cos())),
            Op::Cos(a) => acc(*a, g.zip_map(val(*a), |g, x| -g * x.sin())),
            Op::Softmax(a) => {
                let (m, n) = y.shape();
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    let yr = y.row_slice(i);
                    let gr = g.row_slice(i);
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        out[i * n + j] = yr[j] * (gr[j] - dot);
                    }
                }
                acc(*a, Tensor::new(m, n, out));
            }
            Op::LogSoftmax(a) => {
                let (m, n) = y.shape();
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    let yr = y.row_slice(i);
                    let gr = g.row_slice(i);
                    let total: f64 = gr.iter().sum();
                    for j in 0..n {
                        out[i * n + j] = gr[j] - yr[j].exp() * total;
                    }
                }
                acc(*a, Tensor::new(m, n, out));
            }
            Op::Sum(a) => {
                let (m, n) = val(*a).shape();
                acc(*a, Tensor::filled(m, n, g.item()));
            }
            Op::SumRows(a) => {
                let (m, n) = val(*a).shape();
                let mut out = Vec::with_capacity(m * n);
                for _ in 0..m {
                    out.extend_from_slice(g.data());
                }
                acc(*a, Tensor::new(m, n, out));
            }
            Op::SumCols(a) => {
                let (m, n) = val(*a).shape();
                let mut out = Vec::with_capacity(m * n);
                for i in 0..m {
                    out.extend(std::iter::repeat_n(g.data()[i], n));
                }
                acc(*a, Tensor::new(m, n, out));
            }
            Op::Gather(a, idx) => {
                let (m, n) = val(*a).shape();
                let k = idx.len();
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    for (j, &src) in idx.iter().enumerate() {
                        out[i * n + src] += g.data()[i * k + j];
                    }
                }
                acc(*a, Tensor::new(m, n, out));
            }
            Op::Concat(parts) => {
                let m = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).cols();
                    let mut out = Vec::with_capacity(m * w);
                    for i in 0..m {
                        out.extend_from_slice(&g.row_slice(i)[offset..offset + w]);
                    }
                    acc(p, Tensor::new(m, w, out));
                    offset += w;
                }
            }
            Op::Reshape(a) => {
                let (m, n) = val(*a).shape();
                acc(*a, g.clone().reshaped(m, n));
            }
            Op::StraightThrough(soft) => acc(*soft, g.clone()),
            Op::Custom(op, inputs) => {
                let vals: Vec<&Tensor> = inputs.iter().map(|&v| val(v)).collect();
                let gs = op.vjp(&vals, y, g);
                debug_assert_eq!(gs.len(), inputs.len(), "{} returned wrong arity", op.name());
                for (&v, gi) in inputs.iter().zip(gs) {
                    if let Some(gi) = gi {
                        acc(v, gi);
                    }
                }
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn row_softmax(t: &Tensor) -> Tensor {
    let mut out = row_log_softmax(t);
    out.data_mut().iter_mut().for_each(|x| *x = x.exp());
    out
}

pub fn row_log_softmax(t: &Tensor) -> Tensor {
    let (m, n) = t.shape();
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let r = t.row_slice(i);
        let lse = log_sum_exp(r);
        out.extend(r.iter().map(|x| x - lse));
    }
    Tensor::new(m, n, out)
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
