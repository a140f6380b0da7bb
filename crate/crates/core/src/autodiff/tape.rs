use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::Tensor;
use crate::error::{Error, Result};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    idx: usize,
    tape: u64,
}

/// Constant sparse matrix used to combine rows: output row `i` is
/// `sum_k weights[k] * input[cols[k]]` for `k` in `offsets[i]..offsets[i+1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
}

impl SparseRows {
    pub fn new() -> Self {
        SparseRows {
            offsets: vec![0],
            cols: Vec::new(),
            weights: Vec::new(),
        }
    }

    /// Uniform mean over each group of input rows; empty groups give zeros.
    pub fn mean_of(groups: &[Vec<usize>]) -> Self {
        let mut s = SparseRows::new();
        for g in groups {
            let w = if g.is_empty() { 0.0 } else { 1.0 / g.len() as f64 };
            s.push_row(g.iter().map(|&c| (c, w)));
        }
        s
    }

    pub fn push_row(&mut self, entries: impl IntoIterator<Item = (usize, f64)>) {
        for (c, w) in entries {
            self.cols.push(c);
            self.weights.push(w);
        }
        self.offsets.push(self.cols.len());
    }

    pub fn num_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.weights[r].iter().copied())
    }

    fn max_col(&self) -> Option<usize> {
        self.cols.iter().copied().max()
    }
}

impl Default for SparseRows {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a * b^T`
    MatMulT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    LogSigmoid(Var),
    Softmax(Var),
    SegmentSoftmax(Var, Rc<[usize]>),
    SparseMix(Var, Rc<SparseRows>),
    Pool(Var, Var, Option<(Var, Rc<[usize]>)>, Rc<SparseRows>, Rc<SparseRows>),
    GatherRows(Var, Rc<[usize]>),
    RowDot(Var, Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Broadcast kind of the right operand of an elementwise op.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Broadcast {
    Same,
    Row,
    Column,
}

/// Append-only record of tensor operations supporting reverse-mode
/// differentiation.
///
/// Backward visits nodes in exact reverse recording order. Gradients land on
/// leaves and accumulate across calls until [`Tape::zero_grads`].
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Vec<f64>>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn check_finite(op: &'static str, data: &[f64]) -> Result<()> {
    // non-short-circuiting so the scan vectorizes
    if !data.iter().fold(false, |bad, x| bad | !x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(op))
    }
}

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(sigmoid(x))` without overflow or underflow to `-inf`.
#[inline]
pub(crate) fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            leaf_grads: Vec::new(),
        }
    }

    /// Drops every recorded node. Existing [`Var`]s become invalid.
    pub fn reset(&mut self) {
        *self = Tape::new();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, v: Var) -> Result<&Node> {
        if v.tape != self.id {
            return Err(Error::Autodiff("variable belongs to another or a reset tape".into()));
        }
        self.nodes
            .get(v.idx)
            .ok_or_else(|| Error::Autodiff("variable index out of range".into()))
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.leaf_grads.push(None);
        Var {
            idx: self.nodes.len() - 1,
            tape: self.id,
        }
    }

    fn emit(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        check_finite(name, value.data())?;
        let rg = inputs.iter().any(|v| self.nodes[v.idx].requires_grad);
        Ok(self.push(value, op, rg))
    }

    /// Records a copy of `t`; its `requires_grad` flag decides whether
    /// gradients are collected for it.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        let rg = t.requires_grad();
        let value = Tensor::from_parts(t.rows(), t.cols(), t.data().to_vec());
        self.push(value, Op::Leaf, rg)
    }

    /// Records `t` as a constant (no gradient).
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t.with_requires_grad(false), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.check(v).expect("invalid variable").value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    /// Gradient accumulated on a leaf by [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.check(v).ok()?;
        self.leaf_grads[v.idx].as_deref()
    }

    pub fn zero_grads(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    // ---- ops ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.check(a)?.value, &self.check(b)?.value);
        if ta.cols() != tb.rows() {
            return Err(shape_err("matmul", format!("{:?} x {:?}", ta.shape(), tb.shape())));
        }
        let out = matmul_nn(ta, tb);
        self.emit("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    /// `a * b^T` without materializing the transpose.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.check(a)?.value, &self.check(b)?.value);
        if ta.cols() != tb.cols() {
            return Err(shape_err("matmul_t", format!("{:?} x {:?}^T", ta.shape(), tb.shape())));
        }
        let out = matmul_nt(ta, tb);
        self.emit("matmul_t", out, Op::MatMulT(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.check(a)?.value.transpose();
        self.emit("transpose", out, Op::Transpose(a), &[a])
    }

    fn broadcast(&self, op: &'static str, a: Var, b: Var, allow_column: bool) -> Result<Broadcast> {
        let (sa, sb) = (self.check(a)?.value.shape(), self.check(b)?.value.shape());
        if sa == sb {
            Ok(Broadcast::Same)
        } else if sb.0 == 1 && sb.1 == sa.1 {
            Ok(Broadcast::Row)
        } else if allow_column && sb.1 == 1 && sb.0 == sa.0 {
            Ok(Broadcast::Column)
        } else {
            Err(shape_err(op, format!("{sa:?} with {sb:?}")))
        }
    }

    fn elementwise(&self, a: Var, b: Var, kind: Broadcast, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (&self.nodes[a.idx].value, &self.nodes[b.idx].value);
        let cols = ta.cols();
        let mut data = Vec::with_capacity(ta.len());
        match kind {
            Broadcast::Same => data.extend(ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y))),
            Broadcast::Row => {
                for r in 0..ta.rows() {
                    data.extend(ta.row(r).iter().zip(tb.data()).map(|(&x, &y)| f(x, y)));
                }
            }
            Broadcast::Column => {
                for r in 0..ta.rows() {
                    let y = tb.data()[r];
                    data.extend(ta.row(r).iter().map(|&x| f(x, y)));
                }
            }
        }
        Tensor::from_parts(ta.rows(), cols, data)
    }

    /// `a + b`, where `b` may be a `1 x cols` row broadcast over `a`'s rows.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let kind = self.broadcast("add", a, b, false)?;
        let out = self.elementwise(a, b, kind, |x, y| x + y);
        self.emit("add", out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let nb = self.neg(b)?;
        self.add(a, nb)
    }

    /// Elementwise product; `b` may be a `1 x cols` row or an `rows x 1`
    /// column broadcast over `a`.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let kind = self.broadcast("mul", a, b, true)?;
        let out = self.elementwise(a, b, kind, |x, y| x * y);
        self.emit("mul", out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let t = &self.check(a)?.value;
        let out = Tensor::from_parts(t.rows(), t.cols(), t.data().iter().map(|x| x * c).collect());
        self.emit("scale", out, Op::Scale(a, c), &[a])
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    fn map(&mut self, a: Var, name: &'static str, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let t = &self.check(a)?.value;
        let out = Tensor::from_parts(t.rows(), t.cols(), t.data().iter().map(|&x| f(x)).collect());
        self.emit(name, out, op, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map(a, "relu", Op::Relu(a), |x| x.max(0.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map(a, "sigmoid", Op::Sigmoid(a), sigmoid)
    }

    pub fn log_sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map(a, "log_sigmoid", Op::LogSigmoid(a), log_sigmoid)
    }

    /// Softmax over every entry of a vector.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let t = &self.check(a)?.value;
        if t.rows() != 1 && t.cols() != 1 {
            return Err(shape_err("softmax", format!("expected a vector, got {:?}", t.shape())));
        }
        let mut data = t.data().to_vec();
        softmax_in_place(&mut data);
        let out = Tensor::from_parts(t.rows(), t.cols(), data);
        self.emit("softmax", out, Op::Softmax(a), &[a])
    }

    /// Softmax within consecutive row segments of an `n x 1` column:
    /// segment `i` covers rows `offsets[i]..offsets[i+1]`.
    pub fn segment_softmax(&mut self, a: Var, offsets: Rc<[usize]>) -> Result<Var> {
        let t = &self.check(a)?.value;
        if t.cols() != 1 || offsets.first() != Some(&0) || offsets.last() != Some(&t.rows()) {
            return Err(shape_err(
                "segment_softmax",
                format!("{:?} with segments ending at {:?}", t.shape(), offsets.last()),
            ));
        }
        let mut data = t.data().to_vec();
        for w in offsets.windows(2) {
            softmax_in_place(&mut data[w[0]..w[1]]);
        }
        let out = Tensor::from_parts(t.rows(), 1, data);
        self.emit("segment_softmax", out, Op::SegmentSoftmax(a, offsets), &[a])
    }

    /// Weighted row combination with a constant sparse matrix.
    pub fn sparse_mix(&mut self, a: Var, mix: Rc<SparseRows>) -> Result<Var> {
        let t = &self.check(a)?.value;
        if mix.max_col().is_some_and(|c| c >= t.rows()) {
            return Err(shape_err("sparse_mix", format!("row index beyond {}", t.rows())));
        }
        let cols = t.cols();
        let mut data = vec![0.0; mix.num_rows() * cols];
        for (i, out) in data.chunks_exact_mut(cols.max(1)).enumerate().take(mix.num_rows()) {
            for (c, w) in mix.row(i) {
                for (o, x) in out.iter_mut().zip(t.row(c)) {
                    *o += w * x;
                }
            }
        }
        let out = Tensor::from_parts(mix.num_rows(), cols, data);
        self.emit("sparse_mix", out, Op::SparseMix(a, mix), &[a])
    }

    /// Two-level row combination. Middle row `w` is
    /// `weight[w] * gate[slot[w]] * sum inner.row(w)` over rows of `a` (the
    /// gate product is elementwise and skipped when `gate` is `None`), and
    /// output row `i` mixes middle rows with `outer.row(i)`. Middle rows are
    /// never stored.
    pub fn pool(
        &mut self,
        a: Var,
        weight: Var,
        gate: Option<(Var, Rc<[usize]>)>,
        inner: Rc<SparseRows>,
        outer: Rc<SparseRows>,
    ) -> Result<Var> {
        let (t, wt) = (&self.check(a)?.value, &self.check(weight)?.value);
        let cols = t.cols();
        if wt.shape() != (inner.num_rows(), 1) {
            return Err(shape_err("pool", format!("weights {:?} for {} rows", wt.shape(), inner.num_rows())));
        }
        let gt = match &gate {
            Some((gv, slot)) => {
                let gt = &self.check(*gv)?.value;
                if gt.cols() != cols || slot.len() != inner.num_rows() || slot.iter().any(|&s| s >= gt.rows()) {
                    return Err(shape_err("pool", format!("gates {:?} do not fit", gt.shape())));
                }
                Some((gt, slot))
            }
            None => None,
        };
        if inner.max_col().is_some_and(|x| x >= t.rows()) || outer.max_col().is_some_and(|x| x >= inner.num_rows()) {
            return Err(shape_err("pool", "row index out of range".into()));
        }
        let mut data = vec![0.0; outer.num_rows() * cols];
        let mut mid = vec![0.0; cols];
        for (i, out) in data.chunks_exact_mut(cols.max(1)).enumerate().take(outer.num_rows()) {
            for (w, beta) in outer.row(i) {
                inner_sum(&inner, w, t, &mut mid);
                let s = beta * wt.data()[w];
                match gt {
                    Some((gt, slot)) => {
                        for ((o, m), x) in out.iter_mut().zip(&mid).zip(gt.row(slot[w])) {
                            *o += s * x * m;
                        }
                    }
                    None => axpy(s, &mid, out),
                }
            }
        }
        let out = Tensor::from_parts(outer.num_rows(), cols, data);
        let mut inputs = vec![a, weight];
        inputs.extend(gate.as_ref().map(|g| g.0));
        self.emit("pool", out, Op::Pool(a, weight, gate, inner, outer), &inputs)
    }

    /// Mean over each listed set of rows.
    pub fn mean_rows(&mut self, a: Var, groups: &[Vec<usize>]) -> Result<Var> {
        self.sparse_mix(a, Rc::new(SparseRows::mean_of(groups)))
    }

    /// Embedding lookup; the backward pass scatter-adds into the source rows.
    pub fn gather_rows(&mut self, a: Var, rows: Rc<[usize]>) -> Result<Var> {
        let t = &self.check(a)?.value;
        if let Some(&bad) = rows.iter().find(|&&r| r >= t.rows()) {
            return Err(shape_err("gather_rows", format!("row {bad} of {}", t.rows())));
        }
        let out = t.select_rows(&rows);
        self.emit("gather_rows", out, Op::GatherRows(a, rows), &[a])
    }

    /// Row-wise dot products of two equally shaped matrices, as a column.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.check(a)?.value, &self.check(b)?.value);
        if ta.shape() != tb.shape() {
            return Err(shape_err("row_dot", format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = (0..ta.rows())
            .map(|r| ta.row(r).iter().zip(tb.row(r)).map(|(x, y)| x * y).sum())
            .collect();
        let out = Tensor::from_parts(ta.rows(), 1, data);
        self.emit("row_dot", out, Op::RowDot(a, b), &[a, b])
    }

    /// Dot product of two vectors as a scalar.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.row_dot(a, b)?;
        self.sum(d)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = compensated_sum(self.check(a)?.value.data());
        self.emit("sum", Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.check(a)?.value.len();
        if n == 0 {
            return Err(shape_err("mean", "empty tensor".into()));
        }
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    // ---- backward ----

    /// Accumulates `d loss / d leaf` into every leaf that requires gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.check(loss)?.value.shape();
        if shape != (1, 1) {
            return Err(Error::Autodiff(format!("loss must be scalar, got {shape:?}")));
        }
        if !self.nodes[loss.idx].requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.idx + 1];
        grads[loss.idx] = Some(vec![1.0]);
        for i in (0..=loss.idx).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                check_finite("backward", &g)?;
                match &mut self.leaf_grads[i] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let out = &nodes[i].value;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[v.idx].requires_grad {
                return;
            }
            let len = nodes[v.idx].value.len();
            let slot = grads[v.idx].get_or_insert_with(|| vec![0.0; len]);
            f(slot);
        };
        match &nodes[i].op {
            Op::Leaf => unreachable!(),
            Op::MatMul(a, b) => {
                let (ta, tb) = (&nodes[a.idx].value, &nodes[b.idx].value);
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                acc(*a, &mut |ga| {
                    // dA = G B^T
                    for r in 0..m {
                        let gr = &g[r * n..(r + 1) * n];
                        for c in 0..k {
                            ga[r * k + c] += dot(gr, tb.row(c));
                        }
                    }
                });
                acc(*b, &mut |gb| {
                    // dB = A^T G
                    for r in 0..m {
                        let gr = &g[r * n..(r + 1) * n];
                        for c in 0..k {
                            let x = ta.get(r, c);
                            if x != 0.0 {
                                axpy(x, gr, &mut gb[c * n..(c + 1) * n]);
                            }
                        }
                    }
                });
            }
            Op::MatMulT(a, b) => {
                // C = A B^T with A: m x k, B: n x k
                let (ta, tb) = (&nodes[a.idx].value, &nodes[b.idx].value);
                let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
                acc(*a, &mut |ga| {
                    for r in 0..m {
                        for j in 0..n {
                            let x = g[r * n + j];
                            if x != 0.0 {
                                axpy(x, tb.row(j), &mut ga[r * k..(r + 1) * k]);
                            }
                        }
                    }
                });
                acc(*b, &mut |gb| {
                    for r in 0..m {
                        for j in 0..n {
                            let x = g[r * n + j];
                            if x != 0.0 {
                                axpy(x, ta.row(r), &mut gb[j * k..(j + 1) * k]);
                            }
                        }
                    }
                });
            }
            Op::Transpose(a) => {
                let (r, c) = nodes[a.idx].value.shape();
                acc(*a, &mut |ga| {
                    for x in 0..r {
                        for y in 0..c {
                            ga[x * c + y] += g[y * r + x];
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                let same = nodes[b.idx].value.shape() == out.shape();
                let cols = out.cols().max(1);
                acc(*b, &mut |gb| {
                    if same {
                        gb.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                    } else {
                        for gr in g.chunks_exact(cols) {
                            gb.iter_mut().zip(gr).for_each(|(x, y)| *x += y);
                        }
                    }
                });
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (&nodes[a.idx].value, &nodes[b.idx].value);
                let cols = ta.cols().max(1);
                let kind = if tb.shape() == ta.shape() {
                    Broadcast::Same
                } else if tb.rows() == 1 && tb.cols() == ta.cols() {
                    Broadcast::Row
                } else {
                    Broadcast::Column
                };
                acc(*a, &mut |ga| match kind {
                    Broadcast::Same => {
                        for ((x, y), w) in ga.iter_mut().zip(g).zip(tb.data()) {
                            *x += y * w;
                        }
                    }
                    Broadcast::Row => {
                        for (gar, gr) in ga.chunks_exact_mut(cols).zip(g.chunks_exact(cols)) {
                            for ((x, y), w) in gar.iter_mut().zip(gr).zip(tb.data()) {
                                *x += y * w;
                            }
                        }
                    }
                    Broadcast::Column => {
                        for ((gar, gr), w) in ga.chunks_exact_mut(cols).zip(g.chunks_exact(cols)).zip(tb.data()) {
                            for (x, y) in gar.iter_mut().zip(gr) {
                                *x += y * w;
                            }
                        }
                    }
                });
                acc(*b, &mut |gb| match kind {
                    Broadcast::Same => {
                        for ((x, y), w) in gb.iter_mut().zip(g).zip(ta.data()) {
                            *x += y * w;
                        }
                    }
                    Broadcast::Row => {
                        for (gr, ar) in g.chunks_exact(cols).zip(ta.data().chunks_exact(cols)) {
                            for ((x, y), w) in gb.iter_mut().zip(gr).zip(ar) {
                                *x += y * w;
                            }
                        }
                    }
                    Broadcast::Column => {
                        for ((x, gr), ar) in gb.iter_mut().zip(g.chunks_exact(cols)).zip(ta.data().chunks_exact(cols)) {
                            *x += dot(gr, ar);
                        }
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += c * y)),
            Op::Relu(a) => {
                let ta = &nodes[a.idx].value;
                acc(*a, &mut |ga| {
                    for ((x, y), v) in ga.iter_mut().zip(g).zip(ta.data()) {
                        if *v > 0.0 {
                            *x += y;
                        }
                    }
                });
            }
            Op::Sigmoid(a) => acc(*a, &mut |ga| {
                for ((x, y), s) in ga.iter_mut().zip(g).zip(out.data()) {
                    *x += y * s * (1.0 - s);
                }
            }),
            Op::LogSigmoid(a) => {
                let ta = &nodes[a.idx].value;
                acc(*a, &mut |ga| {
                    for ((x, y), v) in ga.iter_mut().zip(g).zip(ta.data()) {
                        *x += y * sigmoid(-v);
                    }
                });
            }
            Op::Softmax(a) => acc(*a, &mut |ga| softmax_backward(out.data(), g, ga)),
            Op::SegmentSoftmax(a, offsets) => acc(*a, &mut |ga| {
                for w in offsets.windows(2) {
                    let r = w[0]..w[1];
                    softmax_backward(&out.data()[r.clone()], &g[r.clone()], &mut ga[r]);
                }
            }),
            Op::SparseMix(a, mix) => {
                let cols = out.cols();
                acc(*a, &mut |ga| {
                    for i in 0..mix.num_rows() {
                        let gr = &g[i * cols..(i + 1) * cols];
                        for (c, w) in mix.row(i) {
                            axpy(w, gr, &mut ga[c * cols..(c + 1) * cols]);
                        }
                    }
                });
            }
            Op::Pool(a, weight, gate, inner, outer) => {
                let cols = out.cols();
                let (ta, tw) = (&nodes[a.idx].value, &nodes[weight.idx].value);
                let gt = gate.as_ref().map(|(v, slot)| (&nodes[v.idx].value, slot));
                // g_i scaled by the gate of walk w
                let gated = |i: usize, w: usize, buf: &mut [f64]| {
                    let gr = &g[i * cols..(i + 1) * cols];
                    match gt {
                        Some((gt, slot)) => {
                            for ((b, y), x) in buf.iter_mut().zip(gr).zip(gt.row(slot[w])) {
                                *b = y * x;
                            }
                        }
                        None => buf.copy_from_slice(gr),
                    }
                };
                let mut buf = vec![0.0; cols];
                let mut mid = vec![0.0; cols];
                acc(*a, &mut |ga| {
                    for i in 0..outer.num_rows() {
                        for (w, beta) in outer.row(i) {
                            gated(i, w, &mut buf);
                            let s = beta * tw.data()[w];
                            for (p, alpha) in inner.row(w) {
                                axpy(s * alpha, &buf, &mut ga[p * cols..(p + 1) * cols]);
                            }
                        }
                    }
                });
                acc(*weight, &mut |gw| {
                    for i in 0..outer.num_rows() {
                        for (w, beta) in outer.row(i) {
                            gated(i, w, &mut buf);
                            inner_sum(inner, w, ta, &mut mid);
                            gw[w] += beta * dot(&buf, &mid);
                        }
                    }
                });
                if let Some((gv, slot)) = gate {
                    acc(*gv, &mut |gg| {
                        for i in 0..outer.num_rows() {
                            let gr = &g[i * cols..(i + 1) * cols];
                            for (w, beta) in outer.row(i) {
                                inner_sum(inner, w, ta, &mut mid);
                                let s = beta * tw.data()[w];
                                let r = slot[w];
                                for ((x, y), m) in gg[r * cols..(r + 1) * cols].iter_mut().zip(gr).zip(&mid) {
                                    *x += s * y * m;
                                }
                            }
                        }
                    });
                }
            }
            Op::GatherRows(a, rows) => {
                let cols = out.cols();
                acc(*a, &mut |ga| {
                    for (i, &r) in rows.iter().enumerate() {
                        axpy(1.0, &g[i * cols..(i + 1) * cols], &mut ga[r * cols..(r + 1) * cols]);
                    }
                });
            }
            Op::RowDot(a, b) => {
                let (ta, tb) = (&nodes[a.idx].value, &nodes[b.idx].value);
                let cols = ta.cols();
                acc(*a, &mut |ga| {
                    for (r, &y) in g.iter().enumerate() {
                        axpy(y, tb.row(r), &mut ga[r * cols..(r + 1) * cols]);
                    }
                });
                acc(*b, &mut |gb| {
                    for (r, &y) in g.iter().enumerate() {
                        axpy(y, ta.row(r), &mut gb[r * cols..(r + 1) * cols]);
                    }
                });
            }
            Op::Sum(a) => acc(*a, &mut |ga| ga.iter_mut().for_each(|x| *x += g[0])),
        }
    }
}

/// Neumaier summation; keeps reductions of long loss vectors accurate to a
/// few ulps, which the finite-difference checks rely on.
fn compensated_sum(xs: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `out = sum alpha * t[p]` over `inner.row(w)`.
fn inner_sum(inner: &SparseRows, w: usize, t: &Tensor, out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for (p, alpha) in inner.row(w) {
        axpy(alpha, t.row(p), out);
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in x.iter_mut() {
        *v /= total;
    }
}

fn softmax_backward(y: &[f64], g: &[f64], ga: &mut [f64]) {
    let inner = dot(y, g);
    for ((x, yi), gi) in ga.iter_mut().zip(y).zip(g) {
        *x += yi * (gi - inner);
    }
}

fn matmul_nn(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; m * n];
    for r in 0..m {
        let row = &mut out[r * n..(r + 1) * n];
        for c in 0..k {
            let x = a.get(r, c);
            if x != 0.0 {
                axpy(x, b.row(c), row);
            }
        }
    }
    Tensor::from_parts(m, n, out)
}

fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, n) = (a.rows(), b.rows());
    let mut out = vec![0.0; m * n];
    for r in 0..m {
        for j in 0..n {
            out[r * n + j] = dot(a.row(r), b.row(j));
        }
    }
    Tensor::from_parts(m, n, out)
}
