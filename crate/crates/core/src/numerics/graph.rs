//! Reverse-mode differentiation over a linear tape.
//!
//! Nodes are appended in evaluation order, so the tape is already a
//! topological order and `backward` is a single reverse sweep that visits
//! each node once. Parameters are borrowed from a [`ParamStore`] rather than
//! copied into the tape.

use super::gemm::{gemm, Layout};
use super::params::{Gradients, ParamId, ParamStore};
use super::rng::Rng;
use super::{NumericsError, Tensor};

/// Layer-norm epsilon used throughout the model.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul { a: Var, b: Var, trans_b: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow { x: Var, bias: Var },
    Scale { x: Var, c: f64 },
    Square(Var),
    Sigmoid(Var),
    Softplus(Var),
    Glu(Var),
    Conv1d { x: Var, w: Var, kernel: usize, cols: Vec<f64> },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    SoftmaxRows(Var),
    GaussianBias { sigma: Var },
    GatherRows { table: Var, index: Vec<usize> },
    ConcatCols(Vec<Var>),
    GroupRows { x: Var, factor: usize },
    Reshape(Var),
    SliceRows(Var),
    Dropout { x: Var, mask: Vec<f64> },
    AbsDiffSum { pred: Var, target: Var, scale: f64 },
    Sum(Var),
}

struct Node {
    value: Option<Tensor>,
    op: Op,
    needs_grad: bool,
}

pub struct Graph<'p> {
    params: Option<&'p ParamStore>,
    param_vars: Vec<Option<Var>>,
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> NumericsError {
    NumericsError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of softplus, for initializing a positive parameter exactly.
pub fn softplus_inverse(y: f64) -> f64 {
    assert!(y > 0.0, "softplus inverse needs y > 0");
    // ln(e^y - 1) = y + ln(1 - e^-y)
    y + (-(-y).exp()).ln_1p()
}

pub fn softplus_value(x: f64) -> f64 {
    softplus(x)
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Self {
            params: None,
            param_vars: Vec::new(),
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn with_params(params: &'p ParamStore) -> Self {
        Self {
            params: Some(params),
            param_vars: vec![None; params.len()],
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.op, &node.value) {
            (Op::Param(id), _) => self.params.expect("param graph").get(*id),
            (_, Some(t)) => t,
            _ => unreachable!("node without value"),
        }
    }

    /// Untracked input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Tracked input whose gradient is kept after `backward`.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    // ---- linear algebra ------------------------------------------------

    /// `a × b` for `a: [m×k]`, `b: [k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.matmul_impl(a, b, false)
    }

    /// `a × bᵀ` for `a: [m×k]`, `b: [n×k]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var, NumericsError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 {
            return Err(mismatch("matmul", ta, tb));
        }
        let (m, k) = (ta.shape()[0], ta.shape()[1]);
        let (kb, n) = if trans_b {
            (tb.shape()[1], tb.shape()[0])
        } else {
            (tb.shape()[0], tb.shape()[1])
        };
        if k != kb {
            return Err(mismatch("matmul", ta, tb));
        }
        let mut out = vec![0.0; m * n];
        let lb = if trans_b { Layout::Trans } else { Layout::Normal };
        gemm(m, k, n, ta.data(), Layout::Normal, tb.data(), lb, &mut out, 0.0);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(
            Tensor::new(&[m, n], out)?,
            Op::MatMul { a, b, trans_b },
            needs,
        ))
    }

    // ---- elementwise -----------------------------------------------------

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, NumericsError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(name, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(ta.shape(), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, op, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a length-`C` vector to every row of `x: [T×C]`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var, NumericsError> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let c = tx.cols();
        if tb.len() != c || tx.shape().len() != 2 {
            return Err(mismatch("add_row", tx, tb));
        }
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(c) {
            add_into(row, tb.data());
        }
        let value = Tensor::new(tx.shape(), data)?;
        let needs = self.needs(x) || self.needs(bias);
        Ok(self.push(value, Op::AddRow { x, bias }, needs))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|v| v * c).collect();
        let value = Tensor::new(tx.shape(), data).expect("same shape");
        let needs = self.needs(x);
        self.push(value, Op::Scale { x, c }, needs)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(tx.shape(), data).expect("same shape");
        let needs = self.needs(x);
        self.push(value, op, needs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, softplus, Op::Softplus(x))
    }

    /// Gated linear unit over the column axis: `[A | B] -> A ⊗ sigmoid(B)`.
    pub fn glu(&mut self, x: Var) -> Result<Var, NumericsError> {
        let tx = self.value(x);
        let c2 = tx.cols();
        if c2 % 2 != 0 || tx.shape().len() != 2 {
            return Err(NumericsError::OddGluWidth(c2));
        }
        let c = c2 / 2;
        let rows = tx.rows();
        let mut out = Vec::with_capacity(rows * c);
        for r in 0..rows {
            let row = tx.row(r);
            out.extend((0..c).map(|j| row[j] * sigmoid(row[c + j])));
        }
        let value = Tensor::new(&[rows, c], out)?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::Glu(x), needs))
    }

    // ---- structured layers ---------------------------------------------------

    /// Centered ("same") 1-D convolution along rows with zero padding.
    ///
    /// `x: [T×C_in]`, `w: [k×C_in×C_out]` with odd `k`; output `[T×C_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var) -> Result<Var, NumericsError> {
        let (tx, tw) = (self.value(x), self.value(w));
        if tw.shape().len() != 3 || tx.shape().len() != 2 || tw.shape()[1] != tx.cols() {
            return Err(mismatch("conv1d", tx, tw));
        }
        let (kernel, c_in, c_out) = (tw.shape()[0], tw.shape()[1], tw.shape()[2]);
        if kernel % 2 == 0 {
            return Err(NumericsError::EvenKernel(kernel));
        }
        let t = tx.rows();
        let half = kernel / 2;
        let width = kernel * c_in;
        let mut cols = vec![0.0; t * width];
        for row in 0..t {
            for tap in 0..kernel {
                let src = row as isize + tap as isize - half as isize;
                if src < 0 || src >= t as isize {
                    continue;
                }
                let dst = row * width + tap * c_in;
                cols[dst..dst + c_in].copy_from_slice(tx.row(src as usize));
            }
        }
        let mut out = vec![0.0; t * c_out];
        gemm(t, width, c_out, &cols, Layout::Normal, tw.data(), Layout::Normal, &mut out, 0.0);
        let needs = self.needs(x) || self.needs(w);
        Ok(self.push(
            Tensor::new(&[t, c_out], out)?,
            Op::Conv1d { x, w, kernel, cols },
            needs,
        ))
    }

    /// Per-row normalization to zero mean and unit population variance,
    /// followed by the affine `gain`/`bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var, NumericsError> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let c = tx.cols();
        if tg.len() != c || tb.len() != c {
            return Err(mismatch("layer_norm", tx, tg));
        }
        let rows = tx.rows();
        let mut xhat = vec![0.0; rows * c];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; rows * c];
        for r in 0..rows {
            let row = tx.row(r);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let s = 1.0 / (var + eps).sqrt();
            rstd[r] = s;
            for j in 0..c {
                let h = (row[j] - mean) * s;
                xhat[r * c + j] = h;
                out[r * c + j] = h * tg.data()[j] + tb.data()[j];
            }
        }
        let value = Tensor::new(tx.shape(), out)?;
        let needs = self.needs(x) || self.needs(gain) || self.needs(bias);
        Ok(self.push(value, Op::LayerNorm { x, gain, bias, xhat, rstd }, needs))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let c = tx.cols();
        let mut out = tx.data().to_vec();
        for row in out.chunks_mut(c) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let value = Tensor::new(tx.shape(), out).expect("same shape");
        let needs = self.needs(x);
        self.push(value, Op::SoftmaxRows(x), needs)
    }

    /// `M[j,k] = -(j-k)² / (2σ²)` for a scalar `sigma` node, `T×T`.
    pub fn gaussian_bias(&mut self, sigma: Var, len: usize) -> Result<Var, NumericsError> {
        let ts = self.value(sigma);
        if ts.len() != 1 || len == 0 {
            return Err(NumericsError::InvalidShape(vec![len]));
        }
        let s = ts.item();
        let denom = 2.0 * s * s;
        let mut out = vec![0.0; len * len];
        for j in 0..len {
            for k in 0..len {
                let d = j as f64 - k as f64;
                out[j * len + k] = if j == k { 0.0 } else { -(d * d) / denom };
            }
        }
        let needs = self.needs(sigma);
        Ok(self.push(Tensor::new(&[len, len], out)?, Op::GaussianBias { sigma }, needs))
    }

    /// Row lookup: embedding tables and state repetition.
    pub fn gather_rows(&mut self, table: Var, index: &[usize]) -> Result<Var, NumericsError> {
        let tt = self.value(table);
        let (rows, c) = (tt.rows(), tt.cols());
        if index.is_empty() {
            return Err(NumericsError::InvalidShape(vec![0, c]));
        }
        let mut out = Vec::with_capacity(index.len() * c);
        for &i in index {
            if i >= rows {
                return Err(NumericsError::IndexOutOfRange { index: i, len: rows });
            }
            out.extend_from_slice(tt.row(i));
        }
        let value = Tensor::new(&[index.len(), c], out)?;
        let needs = self.needs(table);
        Ok(self.push(
            value,
            Op::GatherRows {
                table,
                index: index.to_vec(),
            },
            needs,
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let first = self.value(parts[0]);
        let rows = first.rows();
        let mut total = 0;
        for &p in parts {
            let tp = self.value(p);
            if tp.rows() != rows || tp.shape().len() != 2 {
                return Err(mismatch("concat_cols", first, tp));
            }
            total += tp.cols();
        }
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            Tensor::new(&[rows, total], out)?,
            Op::ConcatCols(parts.to_vec()),
            needs,
        ))
    }

    /// Mean of each consecutive group of `factor` rows. The row count is
    /// padded up to a multiple of `factor` by repeating the last row.
    pub fn group_rows(&mut self, x: Var, factor: usize) -> Result<Var, NumericsError> {
        if factor == 0 {
            return Err(NumericsError::InvalidFactor(factor));
        }
        let tx = self.value(x);
        let (t, c) = (tx.rows(), tx.cols());
        let groups = t.div_ceil(factor);
        let mut out = vec![0.0; groups * c];
        for g in 0..groups {
            let dst = &mut out[g * c..(g + 1) * c];
            for i in 0..factor {
                let src = (g * factor + i).min(t - 1);
                add_into(dst, tx.row(src));
            }
            for v in dst.iter_mut() {
                *v /= factor as f64;
            }
        }
        let needs = self.needs(x);
        Ok(self.push(Tensor::new(&[groups, c], out)?, Op::GroupRows { x, factor }, needs))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, NumericsError> {
        let value = self.value(x).clone().reshaped(shape)?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::Reshape(x), needs))
    }

    /// First `n` rows of a matrix.
    pub fn slice_rows(&mut self, x: Var, n: usize) -> Result<Var, NumericsError> {
        let tx = self.value(x);
        if n == 0 || n > tx.rows() {
            return Err(NumericsError::IndexOutOfRange { index: n, len: tx.rows() });
        }
        let c = tx.cols();
        let value = Tensor::new(&[n, c], tx.data()[..n * c].to_vec())?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::SliceRows(x), needs))
    }

    /// Inverted dropout. Identity in eval mode or when `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64, mode: Mode, rng: &mut Rng) -> Result<Var, NumericsError> {
        if !(0.0..1.0).contains(&p) {
            return Err(NumericsError::InvalidProbability(p));
        }
        if mode == Mode::Eval || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let tx = self.value(x);
        let mask: Vec<f64> = (0..tx.len())
            .map(|_| if rng.uniform() < p { 0.0 } else { keep })
            .collect();
        let data = tx.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(tx.shape(), data)?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::Dropout { x, mask }, needs))
    }

    // ---- reductions ------------------------------------------------------

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(total), Op::Sum(x), needs)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// `scale · Σ|pred − target|`. The subgradient at zero is 0.
    pub fn abs_diff_sum(&mut self, pred: Var, target: Var, scale: f64) -> Result<Var, NumericsError> {
        let (tp, tt) = (self.value(pred), self.value(target));
        if tp.shape() != tt.shape() {
            return Err(mismatch("abs_diff_sum", tp, tt));
        }
        let total: f64 = tp.data().iter().zip(tt.data()).map(|(a, b)| (a - b).abs()).sum();
        let needs = self.needs(pred) || self.needs(target);
        Ok(self.push(
            Tensor::scalar(scale * total),
            Op::AbsDiffSum { pred, target, scale },
            needs,
        ))
    }

    /// Mean absolute error over all elements.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var, NumericsError> {
        let n = self.value(pred).len() as f64;
        self.abs_diff_sum(pred, target, 1.0 / n)
    }

    // ---- backward --------------------------------------------------------

    /// Reverse sweep from a scalar output. Gradients of leaves and
    /// parameters remain available afterwards; intermediate buffers are freed.
    pub fn backward(&mut self, output: Var) -> Result<(), NumericsError> {
        let out_value = self.value(output);
        if out_value.len() != 1 {
            return Err(NumericsError::NonScalarOutput(out_value.shape().to_vec()));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[output.0] = Some(vec![1.0]);
        for i in (0..=output.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            let keep = matches!(self.nodes[i].op, Op::Leaf | Op::Param(_));
            self.propagate(i, &g);
            if keep {
                self.grads[i] = Some(g);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, contribution: Vec<f64>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(existing) => add_into(existing, &contribution),
            slot @ None => *slot = Some(contribution),
        }
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        let out = self.nodes[i].value.as_ref();
        let mut pending: Vec<(Var, Vec<f64>)> = Vec::new();
        match &self.nodes[i].op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul { a, b, trans_b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = out.expect("value").shape()[1];
                if self.needs(*a) {
                    let mut da = vec![0.0; m * k];
                    // dA = dC·Bᵀ, or dC·B when B is stored transposed.
                    let lb = if *trans_b { Layout::Normal } else { Layout::Trans };
                    gemm(m, n, k, g, Layout::Normal, tb.data(), lb, &mut da, 0.0);
                    pending.push((*a, da));
                }
                if self.needs(*b) {
                    let mut db = vec![0.0; k * n];
                    if *trans_b {
                        // B: [n×k], dB = dCᵀ·A
                        gemm(n, m, k, g, Layout::Trans, ta.data(), Layout::Normal, &mut db, 0.0);
                    } else {
                        gemm(k, m, n, ta.data(), Layout::Trans, g, Layout::Normal, &mut db, 0.0);
                    }
                    pending.push((*b, db));
                }
            }
            Op::Add(a, b) => {
                pending.push((*a, g.to_vec()));
                pending.push((*b, g.to_vec()));
            }
            Op::Sub(a, b) => {
                pending.push((*a, g.to_vec()));
                pending.push((*b, g.iter().map(|v| -v).collect()));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                pending.push((*a, g.iter().zip(tb.data()).map(|(g, y)| g * y).collect()));
                pending.push((*b, g.iter().zip(ta.data()).map(|(g, x)| g * x).collect()));
            }
            Op::AddRow { x, bias } => {
                pending.push((*x, g.to_vec()));
                if self.needs(*bias) {
                    let c = self.value(*bias).len();
                    let mut db = vec![0.0; c];
                    for row in g.chunks(c) {
                        add_into(&mut db, row);
                    }
                    pending.push((*bias, db));
                }
            }
            Op::Scale { x, c } => pending.push((*x, g.iter().map(|v| v * c).collect())),
            Op::Square(x) => {
                let tx = self.value(*x);
                pending.push((*x, g.iter().zip(tx.data()).map(|(g, v)| 2.0 * g * v).collect()));
            }
            Op::Sigmoid(x) => {
                let y = out.expect("value").data();
                pending.push((*x, g.iter().zip(y).map(|(g, s)| g * s * (1.0 - s)).collect()));
            }
            Op::Softplus(x) => {
                let tx = self.value(*x);
                pending.push((*x, g.iter().zip(tx.data()).map(|(g, v)| g * sigmoid(*v)).collect()));
            }
            Op::Glu(x) => {
                let tx = self.value(*x);
                let c = tx.cols() / 2;
                let mut dx = vec![0.0; tx.len()];
                for r in 0..tx.rows() {
                    let row = tx.row(r);
                    for j in 0..c {
                        let s = sigmoid(row[c + j]);
                        let gy = g[r * c + j];
                        dx[r * 2 * c + j] = gy * s;
                        dx[r * 2 * c + c + j] = gy * row[j] * s * (1.0 - s);
                    }
                }
                pending.push((*x, dx));
            }
            Op::Conv1d { x, w, kernel, cols } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let (t, c_in) = (tx.rows(), tx.cols());
                let c_out = tw.shape()[2];
                let width = kernel * c_in;
                if self.needs(*w) {
                    let mut dw = vec![0.0; width * c_out];
                    gemm(width, t, c_out, cols, Layout::Trans, g, Layout::Normal, &mut dw, 0.0);
                    pending.push((*w, dw));
                }
                if self.needs(*x) {
                    let mut dcols = vec![0.0; t * width];
                    gemm(t, c_out, width, g, Layout::Normal, tw.data(), Layout::Trans, &mut dcols, 0.0);
                    let half = kernel / 2;
                    let mut dx = vec![0.0; t * c_in];
                    for row in 0..t {
                        for tap in 0..*kernel {
                            let src = row as isize + tap as isize - half as isize;
                            if src < 0 || src >= t as isize {
                                continue;
                            }
                            let s = src as usize;
                            let from = row * width + tap * c_in;
                            add_into(&mut dx[s * c_in..(s + 1) * c_in], &dcols[from..from + c_in]);
                        }
                    }
                    pending.push((*x, dx));
                }
            }
            Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                let tg = self.value(*gain);
                let c = tg.len();
                let rows = rstd.len();
                if self.needs(*gain) || self.needs(*bias) {
                    let mut dg = vec![0.0; c];
                    let mut db = vec![0.0; c];
                    for r in 0..rows {
                        for j in 0..c {
                            dg[j] += g[r * c + j] * xhat[r * c + j];
                            db[j] += g[r * c + j];
                        }
                    }
                    pending.push((*gain, dg));
                    pending.push((*bias, db));
                }
                if self.needs(*x) {
                    let mut dx = vec![0.0; rows * c];
                    for r in 0..rows {
                        let h = &xhat[r * c..(r + 1) * c];
                        let dh: Vec<f64> = (0..c).map(|j| g[r * c + j] * tg.data()[j]).collect();
                        let mean_dh = dh.iter().sum::<f64>() / c as f64;
                        let mean_dh_h = dh.iter().zip(h).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                        for j in 0..c {
                            dx[r * c + j] = rstd[r] * (dh[j] - mean_dh - h[j] * mean_dh_h);
                        }
                    }
                    pending.push((*x, dx));
                }
            }
            Op::SoftmaxRows(x) => {
                let y = out.expect("value");
                let c = y.cols();
                let mut dx = vec![0.0; y.len()];
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let gr = &g[r * c..(r + 1) * c];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        dx[r * c + j] = yr[j] * (gr[j] - dot);
                    }
                }
                pending.push((*x, dx));
            }
            Op::GaussianBias { sigma } => {
                let s = self.value(*sigma).item();
                let len = out.expect("value").rows();
                let mut ds = 0.0;
                for j in 0..len {
                    for k in 0..len {
                        let d = j as f64 - k as f64;
                        ds += g[j * len + k] * d * d / (s * s * s);
                    }
                }
                pending.push((*sigma, vec![ds]));
            }
            Op::GatherRows { table, index } => {
                let tt = self.value(*table);
                let c = tt.cols();
                let mut dt = vec![0.0; tt.len()];
                for (r, &src) in index.iter().enumerate() {
                    add_into(&mut dt[src * c..(src + 1) * c], &g[r * c..(r + 1) * c]);
                }
                pending.push((*table, dt));
            }
            Op::ConcatCols(parts) => {
                let total = out.expect("value").cols();
                let rows = out.expect("value").rows();
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    if self.needs(p) {
                        let mut dp = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            dp.extend_from_slice(&g[r * total + offset..r * total + offset + c]);
                        }
                        pending.push((p, dp));
                    }
                    offset += c;
                }
            }
            Op::GroupRows { x, factor } => {
                let tx = self.value(*x);
                let (t, c) = (tx.rows(), tx.cols());
                let mut dx = vec![0.0; t * c];
                let groups = t.div_ceil(*factor);
                for grp in 0..groups {
                    for i in 0..*factor {
                        let src = (grp * factor + i).min(t - 1);
                        for j in 0..c {
                            dx[src * c + j] += g[grp * c + j] / *factor as f64;
                        }
                    }
                }
                pending.push((*x, dx));
            }
            Op::Reshape(x) => pending.push((*x, g.to_vec())),
            Op::SliceRows(x) => {
                let mut dx = vec![0.0; self.value(*x).len()];
                dx[..g.len()].copy_from_slice(g);
                pending.push((*x, dx));
            }
            Op::Dropout { x, mask } => {
                pending.push((*x, g.iter().zip(mask).map(|(g, m)| g * m).collect()));
            }
            Op::AbsDiffSum { pred, target, scale } => {
                let (tp, tt) = (self.value(*pred), self.value(*target));
                let gs = g[0] * scale;
                let d: Vec<f64> = tp
                    .data()
                    .iter()
                    .zip(tt.data())
                    .map(|(a, b)| {
                        let diff = a - b;
                        if diff > 0.0 {
                            gs
                        } else if diff < 0.0 {
                            -gs
                        } else {
                            0.0
                        }
                    })
                    .collect();
                if self.needs(*target) {
                    pending.push((*target, d.iter().map(|v| -v).collect()));
                }
                pending.push((*pred, d));
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                pending.push((*x, vec![g[0]; n]));
            }
        }
        for (v, contribution) in pending {
            self.accumulate(v, contribution);
        }
    }

    /// Gradient of a tracked leaf or parameter node after `backward`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn param_grad(&self, id: ParamId) -> Option<&[f64]> {
        self.param_vars.get(id.0).copied().flatten().and_then(|v| self.grad(v))
    }

    /// Adds every parameter gradient from this graph into `into`.
    pub fn accumulate_param_grads(&self, into: &mut Gradients) {
        for (pid, var) in self.param_vars.iter().enumerate() {
            if let Some(g) = var.and_then(|v| self.grad(v)) {
                add_into(into.get_mut(ParamId(pid)), g);
            }
        }
    }
}
