//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Every operation appends a node to an arena, so node indices are already a
//! topological order: inputs always precede the nodes that consume them.
//! [`Graph::backward`] walks the arena once in reverse.

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// rhs is a single row repeated over every row of lhs
    Row,
    Scalar,
}

impl Broadcast {
    fn resolve(op: &'static str, lhs: &Tensor, rhs: &Tensor) -> Result<Self> {
        if lhs.shape() == rhs.shape() {
            return Ok(Broadcast::Same);
        }
        if rhs.len() == 1 {
            return Ok(Broadcast::Scalar);
        }
        let row_like = rhs.rank() == 1 || (rhs.rank() == 2 && rhs.shape()[0] == 1);
        if lhs.rank() == 2 && row_like && rhs.len() == lhs.cols() {
            return Ok(Broadcast::Row);
        }
        Err(shape_err(op, &[lhs, rhs]))
    }

    #[inline]
    fn index(self, i: usize, cols: usize) -> usize {
        match self {
            Broadcast::Same => i,
            Broadcast::Row => i % cols,
            Broadcast::Scalar => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Binary(Binary, Var, Var, Broadcast),
    Scale(Var, f64),
    Abs(Var),
    Relu(Var),
    Exp(Var),
    Softmax(Var, usize),
    Concat(Vec<Var>, usize),
    SliceCols(Var, usize, usize),
    GatherRows(Var, Vec<usize>),
    /// `argmax[k * d + c]` is the source row chosen for segment `k`, column `c`.
    MaxPoolSegments(Var, Vec<usize>),
    /// Per-row negative log-likelihood; keeps the softmax for backward.
    CrossEntropy(Var, Vec<usize>, Vec<f64>),
    Sum(Var),
    LayerNorm(Var, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Arena of tensors and the operations that produced them.
///
/// A graph is single-threaded; build one per training instance.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, tensors: &[&Tensor]) -> TensorError {
    TensorError::Shape {
        op,
        shapes: tensors.iter().map(|t| t.shape().to_vec()).collect(),
    }
}

/// Lanes of a softmax reduction: (start, stride, length, count).
fn lanes(t: &Tensor, axis: usize) -> Result<(usize, usize, usize, usize)> {
    match (t.rank(), axis) {
        (0, 0) => Ok((0, 1, 1, 1)),
        (1, 0) => Ok((0, 1, t.len(), 1)),
        (2, 1) => Ok((t.shape()[1], 1, t.shape()[1], t.shape()[0])),
        (2, 0) => Ok((1, t.shape()[1], t.shape()[0], t.shape()[1])),
        _ => Err(shape_err("softmax", &[t])),
    }
}

/// Offset of element `i` of lane `lane` given the layout from [`lanes`].
#[inline]
fn lane_offset(axis_rank: (usize, usize), cols: usize, lane: usize, i: usize) -> usize {
    match axis_rank {
        (2, 1) => lane * cols + i,
        (2, 0) => i * cols + lane,
        _ => i,
    }
}

fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let out_row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * m..(p + 1) * m];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

fn transpose_data(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient, present after a backward pass reached `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(shape_err("matmul", &[ta, tb]));
        }
        let (n, k, m) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; n * m];
        matmul_into(ta.data(), tb.data(), &mut out, n, k, m);
        let value = Tensor::new(vec![n, m], out)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if ta.rank() != 2 {
            return Err(shape_err("transpose", &[ta]));
        }
        let (r, c) = (ta.shape()[0], ta.shape()[1]);
        let value = Tensor::new(vec![c, r], transpose_data(ta.data(), r, c))?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Transpose(a), rg))
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let name = match kind {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
        };
        let (ta, tb) = (self.value(a), self.value(b));
        let bc = Broadcast::resolve(name, ta, tb)?;
        let cols = ta.cols();
        let rhs = tb.data();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = rhs[bc.index(i, cols)];
                match kind {
                    Binary::Add => x + y,
                    Binary::Sub => x - y,
                    Binary::Mul => x * y,
                }
            })
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Binary(kind, a, b, bc), rg))
    }

    /// Element-wise sum; `b` may also be a row vector or a single value.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| x * factor).collect();
        let value = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        let rg = self.needs(&[a]);
        self.push(value, Op::Scale(a, factor), rg)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        let rg = self.needs(&[a]);
        self.push(value, op, rg)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    /// Softmax along `axis`. Entries equal to `-inf` get exactly zero weight;
    /// each lane needs at least one finite entry.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let ta = self.value(a);
        let (_, _, len, count) = lanes(ta, axis)?;
        let key = (ta.rank(), axis);
        let cols = ta.cols();
        let src = ta.data();
        let mut out = vec![0.0; ta.len()];
        for lane in 0..count {
            let mut max = f64::NEG_INFINITY;
            for i in 0..len {
                max = max.max(src[lane_offset(key, cols, lane, i)]);
            }
            let mut total = 0.0;
            for i in 0..len {
                let o = lane_offset(key, cols, lane, i);
                let e = (src[o] - max).exp();
                out[o] = e;
                total += e;
            }
            for i in 0..len {
                out[lane_offset(key, cols, lane, i)] /= total;
            }
        }
        let value = Tensor::new(ta.shape().to_vec(), out)?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Softmax(a, axis), rg))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = match parts.first() {
            Some(v) => self.value(*v),
            None => {
                return Err(TensorError::Shape {
                    op: "concat",
                    shapes: vec![],
                })
            }
        };
        let all: Vec<&Tensor> = parts.iter().map(|v| self.value(*v)).collect();
        let rank = first.rank();
        if all.iter().any(|t| t.rank() != rank) {
            return Err(shape_err("concat", &all));
        }
        let value = match (rank, axis) {
            (1, 0) => {
                let data: Vec<f64> = all.iter().flat_map(|t| t.data().iter().copied()).collect();
                Tensor::vector(data)
            }
            (2, 0) => {
                let cols = first.shape()[1];
                if all.iter().any(|t| t.shape()[1] != cols) {
                    return Err(shape_err("concat", &all));
                }
                let rows = all.iter().map(|t| t.shape()[0]).sum();
                let data = all.iter().flat_map(|t| t.data().iter().copied()).collect();
                Tensor::new(vec![rows, cols], data)?
            }
            (2, 1) => {
                let rows = first.shape()[0];
                if all.iter().any(|t| t.shape()[0] != rows) {
                    return Err(shape_err("concat", &all));
                }
                let cols: usize = all.iter().map(|t| t.shape()[1]).sum();
                let mut data = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    for t in &all {
                        data.extend_from_slice(t.row(r));
                    }
                }
                Tensor::new(vec![rows, cols], data)?
            }
            _ => return Err(shape_err("concat", &all)),
        };
        let rg = self.needs(parts);
        Ok(self.push(value, Op::Concat(parts.to_vec(), axis), rg))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let ta = self.value(a);
        if ta.rank() != 2 || start >= end || end > ta.shape()[1] {
            return Err(shape_err("slice_cols", &[ta]));
        }
        let rows = ta.shape()[0];
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&ta.row(r)[start..end]);
        }
        let value = Tensor::new(vec![rows, end - start], data)?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::SliceCols(a, start, end), rg))
    }

    /// Row lookup (embedding tables, token→utterance broadcast).
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tt = self.value(table);
        if tt.rank() != 2 {
            return Err(shape_err("gather_rows", &[tt]));
        }
        let (rows, cols) = (tt.shape()[0], tt.shape()[1]);
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(TensorError::Index {
                    op: "gather_rows",
                    index: id,
                    bound: rows,
                });
            }
            data.extend_from_slice(tt.row(id));
        }
        let value = Tensor::new(vec![ids.len(), cols], data)?;
        let rg = self.needs(&[table]);
        Ok(self.push(value, Op::GatherRows(table, ids.to_vec()), rg))
    }

    /// Per-column max over the rows belonging to each segment.
    ///
    /// Output row `k` pools the rows `t` with `segment_ids[t] == k`. Ties go to
    /// the lowest row index; gradient flows only to the selected rows.
    pub fn max_pool_segments(
        &mut self,
        x: Var,
        segment_ids: &[usize],
        num_segments: usize,
    ) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 2 || tx.shape()[0] != segment_ids.len() {
            return Err(TensorError::Shape {
                op: "max_pool_segments",
                shapes: vec![tx.shape().to_vec(), vec![segment_ids.len()]],
            });
        }
        let d = tx.shape()[1];
        let mut best = vec![f64::NEG_INFINITY; num_segments * d];
        let mut argmax = vec![usize::MAX; num_segments * d];
        for (t, &k) in segment_ids.iter().enumerate() {
            if k >= num_segments {
                return Err(TensorError::Index {
                    op: "max_pool_segments",
                    index: k,
                    bound: num_segments,
                });
            }
            for (c, &v) in tx.row(t).iter().enumerate() {
                let slot = k * d + c;
                if argmax[slot] == usize::MAX || v > best[slot] {
                    best[slot] = v;
                    argmax[slot] = t;
                }
            }
        }
        if let Some(slot) = argmax.iter().position(|&a| a == usize::MAX) {
            return Err(TensorError::EmptySegment(slot / d.max(1)));
        }
        if d == 0 {
            if let Some(k) = (0..num_segments).find(|k| !segment_ids.contains(k)) {
                return Err(TensorError::EmptySegment(k));
            }
        }
        let value = Tensor::new(vec![num_segments, d], best)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::MaxPoolSegments(x, argmax), rg))
    }

    /// Negative log-likelihood of `targets[r]` under `softmax(logits[r])`,
    /// one value per row.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let tl = self.value(logits);
        if tl.rank() != 2 || tl.shape()[0] != targets.len() {
            return Err(TensorError::Shape {
                op: "cross_entropy",
                shapes: vec![tl.shape().to_vec(), vec![targets.len()]],
            });
        }
        let classes = tl.shape()[1];
        let mut probs = vec![0.0; tl.len()];
        let mut losses = Vec::with_capacity(targets.len());
        for (r, &y) in targets.iter().enumerate() {
            if y >= classes {
                return Err(TensorError::Index {
                    op: "cross_entropy",
                    index: y,
                    bound: classes,
                });
            }
            let row = tl.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let log_z = max + total.ln();
            for (c, v) in row.iter().enumerate() {
                probs[r * classes + c] = (v - log_z).exp();
            }
            losses.push(log_z - row[y]);
        }
        let value = Tensor::vector(losses);
        let rg = self.needs(&[logits]);
        Ok(self.push(value, Op::CrossEntropy(logits, targets.to_vec(), probs), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().sum();
        let rg = self.needs(&[a]);
        self.push(Tensor::scalar(total), Op::Sum(a), rg)
    }

    /// Normalizes each row to zero mean and unit variance (no affine terms).
    pub fn layer_norm(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 2 {
            return Err(shape_err("layer_norm", &[tx]));
        }
        let (rows, cols) = (tx.shape()[0], tx.shape()[1]);
        let mut out = Vec::with_capacity(tx.len());
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = tx.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(is);
            out.extend(row.iter().map(|v| (v - mean) * is));
        }
        let value = Tensor::new(vec![rows, cols], out)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::LayerNorm(x, inv_std), rg))
    }

    /// Reverse pass from a one-element `loss`. Gradients are added to whatever
    /// earlier backward passes left behind; call [`Graph::zero_grad`] to reset.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(idx, &g, &mut grads);
            let node = &mut self.nodes[idx];
            match &mut node.grad {
                Some(acc) => {
                    for (a, v) in acc.data_mut().iter_mut().zip(&g) {
                        *a += v;
                    }
                }
                None => {
                    node.grad = Some(Tensor::new(node.value.shape().to_vec(), g)?);
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (n, k, m) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                acc(*a, &mut |ga| {
                    let bt = transpose_data(tb.data(), k, m);
                    matmul_into(g, &bt, ga, n, m, k);
                });
                acc(*b, &mut |gb| {
                    let at = transpose_data(ta.data(), n, k);
                    matmul_into(&at, g, gb, k, n, m);
                });
            }
            Op::Transpose(a) => {
                let (r, c) = (out.shape()[0], out.shape()[1]);
                let gt = transpose_data(g, r, c);
                acc(*a, &mut |ga| {
                    for (x, v) in ga.iter_mut().zip(&gt) {
                        *x += v;
                    }
                });
            }
            Op::Binary(kind, a, b, bc) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let cols = ta.cols();
                let (da, db) = (ta.data(), tb.data());
                acc(*a, &mut |ga| {
                    for (i, x) in ga.iter_mut().enumerate() {
                        *x += match kind {
                            Binary::Add | Binary::Sub => g[i],
                            Binary::Mul => g[i] * db[bc.index(i, cols)],
                        };
                    }
                });
                acc(*b, &mut |gb| {
                    for (i, gi) in g.iter().enumerate() {
                        gb[bc.index(i, cols)] += match kind {
                            Binary::Add => *gi,
                            Binary::Sub => -gi,
                            Binary::Mul => gi * da[i],
                        };
                    }
                });
            }
            Op::Scale(a, factor) => acc(*a, &mut |ga| {
                for (x, v) in ga.iter_mut().zip(g) {
                    *x += v * factor;
                }
            }),
            Op::Abs(a) => {
                let da = self.value(*a).data();
                acc(*a, &mut |ga| {
                    for (i, x) in ga.iter_mut().enumerate() {
                        let s = if da[i] > 0.0 {
                            1.0
                        } else if da[i] < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        *x += g[i] * s;
                    }
                })
            }
            Op::Relu(a) => {
                let da = self.value(*a).data();
                acc(*a, &mut |ga| {
                    for (i, x) in ga.iter_mut().enumerate() {
                        if da[i] > 0.0 {
                            *x += g[i];
                        }
                    }
                })
            }
            Op::Exp(a) => acc(*a, &mut |ga| {
                for (i, x) in ga.iter_mut().enumerate() {
                    *x += g[i] * out.data()[i];
                }
            }),
            Op::Softmax(a, axis) => {
                let (_, _, len, count) = lanes(out, *axis).expect("validated in forward");
                let key = (out.rank(), *axis);
                let cols = out.cols();
                let y = out.data();
                acc(*a, &mut |ga| {
                    for lane in 0..count {
                        let mut dot = 0.0;
                        for i in 0..len {
                            let o = lane_offset(key, cols, lane, i);
                            dot += g[o] * y[o];
                        }
                        for i in 0..len {
                            let o = lane_offset(key, cols, lane, i);
                            ga[o] += y[o] * (g[o] - dot);
                        }
                    }
                })
            }
            Op::Concat(parts, axis) => {
                let mut offset = 0;
                for part in parts {
                    let tp = self.value(*part);
                    match (out.rank(), axis) {
                        (2, 1) => {
                            let (rows, pc, oc) = (tp.shape()[0], tp.shape()[1], out.shape()[1]);
                            acc(*part, &mut |gp| {
                                for r in 0..rows {
                                    for c in 0..pc {
                                        gp[r * pc + c] += g[r * oc + offset + c];
                                    }
                                }
                            });
                            offset += pc;
                        }
                        _ => {
                            let n = tp.len();
                            acc(*part, &mut |gp| {
                                for (x, v) in gp.iter_mut().zip(&g[offset..offset + n]) {
                                    *x += v;
                                }
                            });
                            offset += n;
                        }
                    }
                }
            }
            Op::SliceCols(a, start, end) => {
                let ta = self.value(*a);
                let (rows, cols, w) = (ta.shape()[0], ta.shape()[1], end - start);
                acc(*a, &mut |ga| {
                    for r in 0..rows {
                        for c in 0..w {
                            ga[r * cols + start + c] += g[r * w + c];
                        }
                    }
                })
            }
            Op::GatherRows(table, ids) => {
                let cols = out.cols();
                acc(*table, &mut |gt| {
                    for (r, &id) in ids.iter().enumerate() {
                        for c in 0..cols {
                            gt[id * cols + c] += g[r * cols + c];
                        }
                    }
                })
            }
            Op::MaxPoolSegments(x, argmax) => {
                let d = out.cols();
                acc(*x, &mut |gx| {
                    for (slot, &t) in argmax.iter().enumerate() {
                        gx[t * d + slot % d] += g[slot];
                    }
                })
            }
            Op::CrossEntropy(logits, targets, probs) => {
                let classes = self.value(*logits).cols();
                acc(*logits, &mut |gl| {
                    for (r, &y) in targets.iter().enumerate() {
                        for c in 0..classes {
                            let onehot = if c == y { 1.0 } else { 0.0 };
                            gl[r * classes + c] += g[r] * (probs[r * classes + c] - onehot);
                        }
                    }
                })
            }
            Op::Sum(a) => acc(*a, &mut |ga| {
                for x in ga.iter_mut() {
                    *x += g[0];
                }
            }),
            Op::LayerNorm(x, inv_std) => {
                let (rows, cols) = (out.shape()[0], out.shape()[1]);
                let xhat = out.data();
                acc(*x, &mut |gx| {
                    for r in 0..rows {
                        let gr = &g[r * cols..(r + 1) * cols];
                        let xr = &xhat[r * cols..(r + 1) * cols];
                        let mean_g = gr.iter().sum::<f64>() / cols as f64;
                        let mean_gx =
                            gr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() / cols as f64;
                        for c in 0..cols {
                            gx[r * cols + c] += inv_std[r] * (gr[c] - mean_g - xr[c] * mean_gx);
                        }
                    }
                })
            }
        }
    }
}
