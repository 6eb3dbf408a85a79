//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! A [`Tape`] records every operation of a forward pass as a node holding
//! its output value and the inputs it needs for the backward pass. Nodes are
//! appended in execution order, which is a topological order, so
//! [`Tape::backward`] visits them in exact reverse. A node consumed by
//! several later nodes receives the sum of their contributions.
//!
//! Parameters live outside the tape in a [`ParamStore`]; the tape borrows it
//! read-only, so independent tapes over the same store can run on separate
//! threads and their [`Gradients`] merged afterwards.

use rand::Rng;

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{shape_err, Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    GatherParam { param: ParamId, rows: Vec<usize> },
    GatherRows { src: Var, rows: Vec<usize> },
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    OneMinus(Var),
    Concat(Vec<Var>),
    SliceCols { src: Var, start: usize },
    StackRows(Vec<Var>),
    Transpose(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    MaskedSoftmax(Var),
    Dropout { src: Var, keep: Vec<f64> },
    GatherCols { src: Var, index: Vec<usize> },
    ScatterCols { src: Var, index: Vec<usize> },
    MeanRows { src: Var, start: usize, end: usize },
    Sum(Var),
    SumSquares(Var),
    CrossEntropy { logits: Var, target: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Record of one forward pass.
pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
}

/// Result of [`Tape::backward`].
pub struct Backward {
    nodes: Vec<Option<Vec<f64>>>,
    params: Gradients,
}

impl Backward {
    /// Gradient of the loss with respect to `v`, if `v` influenced it.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].as_deref()
    }

    pub fn params(&self) -> &Gradients {
        &self.params
    }

    pub fn into_params(self) -> Gradients {
        self.params
    }
}

/// `rhs` may equal `lhs` in shape or match its trailing dimensions.
fn broadcastable(op: &'static str, lhs: &Tensor, rhs: &Tensor) -> Result<()> {
    let (ls, rs) = (lhs.shape(), rhs.shape());
    if rs.len() <= ls.len() && ls[ls.len() - rs.len()..] == *rs {
        Ok(())
    } else {
        Err(shape_err(
            op,
            format!("cannot broadcast {rs:?} over {ls:?}"),
        ))
    }
}

/// `out[m×n] += a[m×k] · b[k×n]`
fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m×k] += g[m×n] · bᵀ` where `b` is `k×n`.
fn matmul_bt_acc(g: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut s = 0.0;
            for (x, y) in grow.iter().zip(brow) {
                s += x * y;
            }
            out[i * k + p] += s;
        }
    }
}

/// `out[k×n] += aᵀ · g` where `a` is `m×k`, `g` is `m×n`.
fn matmul_at_acc(a: &[f64], g: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
}

/// Row-wise softmax over unmasked entries; masked entries and fully masked
/// rows are exactly zero.
pub fn masked_softmax_rows(values: &[f64], mask: &[bool], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for (r, row) in values.chunks(cols).enumerate() {
        let m = &mask[r * cols..(r + 1) * cols];
        let max = row
            .iter()
            .zip(m)
            .filter(|(_, &k)| k)
            .map(|(v, _)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            continue;
        }
        let o = &mut out[r * cols..(r + 1) * cols];
        let mut sum = 0.0;
        for ((o, &v), &k) in o.iter_mut().zip(row).zip(m) {
            if k {
                *o = (v - max).exp();
                sum += *o;
            }
        }
        for o in o.iter_mut() {
            *o /= sum;
        }
    }
    out
}

fn slot<'g>(grads: &'g mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'g mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()])
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect()).unwrap()
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Leaf holding a fixed input.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant)
    }

    /// Leaf reading a parameter's current value.
    pub fn param(&mut self, id: ParamId) -> Var {
        let value = self.store.value(id).clone();
        self.push(value, Op::Param(id))
    }

    /// Rows of a parameter table, `[rows.len(), cols]`; the backward pass
    /// scatters into only the selected rows.
    pub fn embedding(&mut self, id: ParamId, rows: &[usize]) -> Result<Var> {
        let table = self.store.value(id);
        let (n_rows, cols) = (table.rows(), table.cols());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            if r >= n_rows {
                return Err(Error::OutOfRange {
                    what: "embedding row",
                    id: r,
                    size: n_rows,
                });
            }
            data.extend_from_slice(table.row(r));
        }
        let value = Tensor::matrix(rows.len(), cols, data)?;
        Ok(self.push(
            value,
            Op::GatherParam {
                param: id,
                rows: rows.to_vec(),
            },
        ))
    }

    /// Rows of a tape value, `[rows.len(), cols]`.
    pub fn embedding_lookup(&mut self, table: Var, rows: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (n_rows, cols) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            if r >= n_rows {
                return Err(Error::OutOfRange {
                    what: "lookup row",
                    id: r,
                    size: n_rows,
                });
            }
            data.extend_from_slice(t.row(r));
        }
        let value = Tensor::matrix(rows.len(), cols, data)?;
        Ok(self.push(
            value,
            Op::GatherRows {
                src: table,
                rows: rows.to_vec(),
            },
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape().len() != 2 || bv.shape().len() != 2 || av.cols() != bv.rows() {
            return Err(shape_err(
                "matmul",
                format!("{:?} · {:?}", av.shape(), bv.shape()),
            ));
        }
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        let mut out = vec![0.0; m * n];
        matmul_acc(av.data(), bv.data(), &mut out, m, k, n);
        let value = Tensor::matrix(m, n, out)?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (av, bv) = (self.value(a), self.value(b));
        broadcastable(name, av, bv)?;
        let bl = bv.len();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, bv.data()[i % bl]))
            .collect();
        Tensor::new(av.shape().to_vec(), data)
    }

    /// `a + b`, with `b` broadcast over leading dimensions of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    /// Elementwise product, `b` broadcast as in [`add`](Self::add).
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = map(self.value(a), |x| x * c);
        self.push(v, Op::Scale(a, c))
    }

    /// `a · s` for a one-element tensor `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        let sv = self.value(s);
        if sv.len() != 1 {
            return Err(shape_err("scale_by", format!("scalar expected, got {:?}", sv.shape())));
        }
        let c = sv.item();
        let v = map(self.value(a), |x| x * c);
        Ok(self.push(v, Op::ScaleBy(a, s)))
    }

    /// `1 - a`
    pub fn one_minus(&mut self, a: Var) -> Var {
        let v = map(self.value(a), |x| 1.0 - x);
        self.push(v, Op::OneMinus(a))
    }

    /// Concatenation along the last dimension.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.value(*parts.first().ok_or_else(|| shape_err("concat", "no inputs"))?);
        let rows = first.rows();
        let lead = first.shape()[..first.shape().len() - 1].to_vec();
        let mut total = 0;
        for &p in parts {
            let t = self.value(p);
            if t.shape()[..t.shape().len() - 1] != lead[..] {
                return Err(shape_err(
                    "concat",
                    format!("{:?} vs {:?}", first.shape(), t.shape()),
                ));
            }
            total += t.cols();
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let mut shape = lead;
        shape.push(total);
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Concat(parts.to_vec())))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        if start >= end || end > t.cols() {
            return Err(shape_err(
                "slice_cols",
                format!("{start}..{end} of {:?}", t.shape()),
            ));
        }
        let rows = t.rows();
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&t.row(r)[start..end]);
        }
        let value = Tensor::matrix(rows, end - start, data)?;
        Ok(self.push(value, Op::SliceCols { src: a, start }))
    }

    /// Row `i` as a `[1, cols]` matrix.
    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        self.embedding_lookup(a, &[i])
    }

    /// Vertical stacking of matrices with equal column counts.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self
            .value(*parts.first().ok_or_else(|| shape_err("stack_rows", "no inputs"))?)
            .cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(shape_err("stack_rows", format!("{} vs {} columns", cols, t.cols())));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let value = Tensor::matrix(rows, cols, data)?;
        Ok(self.push(value, Op::StackRows(parts.to_vec())))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.shape().len() != 2 {
            return Err(shape_err("transpose", format!("matrix expected, got {:?}", t.shape())));
        }
        let (r, c) = (t.rows(), t.cols());
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = t.data()[i * c + j];
            }
        }
        let value = Tensor::matrix(c, r, data)?;
        Ok(self.push(value, Op::Transpose(a)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = map(self.value(a), sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = map(self.value(a), f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = map(self.value(a), |x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = map(self.value(a), f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = map(self.value(a), f64::ln);
        self.push(v, Op::Log(a))
    }

    /// Row-wise softmax restricted to entries where `mask` is true. Masked
    /// entries are exactly zero whatever their score; a fully masked row is
    /// all zeros.
    pub fn masked_softmax(&mut self, scores: Var, mask: &[bool]) -> Result<Var> {
        let t = self.value(scores);
        if mask.len() != t.len() {
            return Err(shape_err(
                "masked_softmax",
                format!("mask of {} for scores {:?}", mask.len(), t.shape()),
            ));
        }
        let data = masked_softmax_rows(t.data(), mask, t.cols());
        let value = Tensor::new(t.shape().to_vec(), data)?;
        Ok(self.push(value, Op::MaskedSoftmax(scores)))
    }

    /// Inverted dropout: in training each entry is zeroed with probability
    /// `p` and survivors are scaled by `1 / (1 - p)`. Identity otherwise.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        p: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "dropout probability {p} outside [0, 1)"
            )));
        }
        if !training || p == 0.0 {
            return Ok(a);
        }
        let scale = 1.0 / (1.0 - p);
        let t = self.value(a);
        let keep: Vec<f64> = (0..t.len())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { scale })
            .collect();
        let data = t.data().iter().zip(&keep).map(|(x, k)| x * k).collect();
        let value = Tensor::new(t.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Dropout { src: a, keep }))
    }

    /// `out[i][j] = src[i][index[i * m + j]]`, producing `[rows, m]`.
    pub fn gather_cols(&mut self, src: Var, index: &[usize], m: usize) -> Result<Var> {
        let t = self.value(src);
        let (rows, cols) = (t.rows(), t.cols());
        if index.len() != rows * m {
            return Err(shape_err(
                "gather_cols",
                format!("index of {} for {} rows × {}", index.len(), rows, m),
            ));
        }
        let mut data = Vec::with_capacity(rows * m);
        for i in 0..rows {
            for j in 0..m {
                let c = index[i * m + j];
                if c >= cols {
                    return Err(Error::OutOfRange {
                        what: "gather column",
                        id: c,
                        size: cols,
                    });
                }
                data.push(t.data()[i * cols + c]);
            }
        }
        let value = Tensor::matrix(rows, m, data)?;
        Ok(self.push(
            value,
            Op::GatherCols {
                src,
                index: index.to_vec(),
            },
        ))
    }

    /// `out[i][index[i * m + j]] += src[i][j]`, producing `[rows, width]`.
    pub fn scatter_cols(&mut self, src: Var, index: &[usize], width: usize) -> Result<Var> {
        let t = self.value(src);
        let (rows, m) = (t.rows(), t.cols());
        if index.len() != rows * m {
            return Err(shape_err(
                "scatter_cols",
                format!("index of {} for {:?}", index.len(), t.shape()),
            ));
        }
        let mut data = vec![0.0; rows * width];
        for i in 0..rows {
            for j in 0..m {
                let c = index[i * m + j];
                if c >= width {
                    return Err(Error::OutOfRange {
                        what: "scatter column",
                        id: c,
                        size: width,
                    });
                }
                data[i * width + c] += t.data()[i * m + j];
            }
        }
        let value = Tensor::matrix(rows, width, data)?;
        Ok(self.push(
            value,
            Op::ScatterCols {
                src,
                index: index.to_vec(),
            },
        ))
    }

    /// Mean of rows `start..end`, as `[1, cols]`.
    pub fn mean_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        if start >= end || end > t.rows() {
            return Err(shape_err(
                "mean_rows",
                format!("rows {start}..{end} of {:?}", t.shape()),
            ));
        }
        let cols = t.cols();
        let mut data = vec![0.0; cols];
        for r in start..end {
            for (d, v) in data.iter_mut().zip(t.row(r)) {
                *d += v;
            }
        }
        let k = (end - start) as f64;
        for d in &mut data {
            *d /= k;
        }
        let value = Tensor::matrix(1, cols, data)?;
        Ok(self.push(value, Op::MeanRows { src: a, start, end }))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let s = self.value(a).sum_squares();
        self.push(Tensor::scalar(s), Op::SumSquares(a))
    }

    /// `-log softmax(logits)[target]` for a single row of logits.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let t = self.value(logits);
        if t.rows() != 1 || target >= t.cols() {
            return Err(shape_err(
                "cross_entropy",
                format!("target {target} for logits {:?}", t.shape()),
            ));
        }
        let x = t.data();
        let top = (0..x.len()).fold(0, |b, i| if x[i] > x[b] { i } else { b });
        // ln_1p keeps full relative precision when the top logit dominates
        let rest: f64 = (0..x.len()).filter(|&i| i != top).map(|i| (x[i] - x[top]).exp()).sum();
        let loss = rest.ln_1p() + (x[top] - x[target]);
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy { logits, target }))
    }

    /// Sum of several scalars.
    pub fn add_all(&mut self, parts: &[Var]) -> Result<Var> {
        let mut it = parts.iter();
        let mut acc = *it.next().ok_or_else(|| shape_err("add_all", "no inputs"))?;
        for &p in it {
            acc = self.add(acc, p)?;
        }
        Ok(acc)
    }

    /// Reverse pass from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Backward> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(shape_err("backward", format!("scalar loss expected, got {:?}", lv.shape())));
        }
        if !lv.item().is_finite() {
            return Err(Error::NonFinite(format!("loss is {}", lv.item())));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        let mut params = Gradients::new(self.store);
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            self.backprop(node, &g, &mut grads, &mut params);
            grads[idx] = Some(g);
        }
        Ok(Backward {
            nodes: grads,
            params,
        })
    }

    fn backprop(
        &self,
        node: &Node,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
        params: &mut Gradients,
    ) {
        let nodes = &self.nodes;
        let len = |v: Var| nodes[v.0].value.len();
        macro_rules! acc {
            ($v:expr) => {
                slot(grads, nodes, $v)
            };
        }
        match &node.op {
            Op::Constant => {}
            Op::Param(id) => {
                let p = self.store.get(*id);
                if p.trainable {
                    for (a, b) in params.slot(*id, p.value.shape()).iter_mut().zip(g) {
                        *a += b;
                    }
                }
            }
            Op::GatherParam { param, rows } => {
                let p = self.store.get(*param);
                if p.trainable {
                    let cols = p.value.cols();
                    let dst = params.slot(*param, p.value.shape());
                    for (k, &r) in rows.iter().enumerate() {
                        for c in 0..cols {
                            dst[r * cols + c] += g[k * cols + c];
                        }
                    }
                }
            }
            Op::GatherRows { src, rows } => {
                let cols = nodes[src.0].value.cols();
                let dst = acc!(*src);
                for (k, &r) in rows.iter().enumerate() {
                    for c in 0..cols {
                        dst[r * cols + c] += g[k * cols + c];
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                matmul_bt_acc(g, bv.data(), acc!(*a), m, k, n);
                matmul_at_acc(av.data(), g, acc!(*b), m, k, n);
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                for (d, x) in acc!(*a).iter_mut().zip(g) {
                    *d += x;
                }
                let bl = len(*b);
                let db = acc!(*b);
                for (i, x) in g.iter().enumerate() {
                    db[i % bl] += sign * x;
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                let bl = bv.len();
                let da = acc!(*a);
                for (i, x) in g.iter().enumerate() {
                    da[i] += x * bv[i % bl];
                }
                let db = acc!(*b);
                for (i, x) in g.iter().enumerate() {
                    db[i % bl] += x * av[i];
                }
            }
            Op::Scale(a, c) => {
                for (d, x) in acc!(*a).iter_mut().zip(g) {
                    *d += c * x;
                }
            }
            Op::ScaleBy(a, s) => {
                let c = nodes[s.0].value.item();
                let av = nodes[a.0].value.data();
                let ds: f64 = g.iter().zip(av).map(|(x, y)| x * y).sum();
                for (d, x) in acc!(*a).iter_mut().zip(g) {
                    *d += c * x;
                }
                acc!(*s)[0] += ds;
            }
            Op::OneMinus(a) => {
                for (d, x) in acc!(*a).iter_mut().zip(g) {
                    *d -= x;
                }
            }
            Op::Concat(parts) => {
                let total = node.value.cols();
                let rows = node.value.rows();
                let mut offset = 0;
                for &p in parts {
                    let c = nodes[p.0].value.cols();
                    let dst = acc!(p);
                    for r in 0..rows {
                        for j in 0..c {
                            dst[r * c + j] += g[r * total + offset + j];
                        }
                    }
                    offset += c;
                }
            }
            Op::SliceCols { src, start } => {
                let cols = nodes[src.0].value.cols();
                let w = node.value.cols();
                let rows = node.value.rows();
                let dst = acc!(*src);
                for r in 0..rows {
                    for j in 0..w {
                        dst[r * cols + start + j] += g[r * w + j];
                    }
                }
            }
            Op::StackRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let l = len(p);
                    for (d, x) in acc!(p).iter_mut().zip(&g[offset..offset + l]) {
                        *d += x;
                    }
                    offset += l;
                }
            }
            Op::Transpose(a) => {
                let (r, c) = (nodes[a.0].value.rows(), nodes[a.0].value.cols());
                let dst = acc!(*a);
                for i in 0..r {
                    for j in 0..c {
                        dst[i * c + j] += g[j * r + i];
                    }
                }
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                for ((d, x), y) in acc!(*a).iter_mut().zip(g).zip(y) {
                    *d += x * y * (1.0 - y);
                }
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                for ((d, x), y) in acc!(*a).iter_mut().zip(g).zip(y) {
                    *d += x * (1.0 - y * y);
                }
            }
            Op::Relu(a) => {
                let xin = nodes[a.0].value.data();
                for ((d, x), v) in acc!(*a).iter_mut().zip(g).zip(xin) {
                    if *v > 0.0 {
                        *d += x;
                    }
                }
            }
            Op::Exp(a) => {
                let y = node.value.data();
                for ((d, x), y) in acc!(*a).iter_mut().zip(g).zip(y) {
                    *d += x * y;
                }
            }
            Op::Log(a) => {
                let xin = nodes[a.0].value.data();
                for ((d, x), v) in acc!(*a).iter_mut().zip(g).zip(xin) {
                    *d += x / v;
                }
            }
            Op::MaskedSoftmax(a) => {
                let y = node.value.data();
                let cols = node.value.cols();
                let dst = acc!(*a);
                for r in 0..node.value.rows() {
                    let yr = &y[r * cols..(r + 1) * cols];
                    let gr = &g[r * cols..(r + 1) * cols];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..cols {
                        dst[r * cols + j] += yr[j] * (gr[j] - dot);
                    }
                }
            }
            Op::Dropout { src, keep } => {
                for ((d, x), k) in acc!(*src).iter_mut().zip(g).zip(keep) {
                    *d += x * k;
                }
            }
            Op::GatherCols { src, index } => {
                let cols = nodes[src.0].value.cols();
                let m = node.value.cols();
                let dst = acc!(*src);
                for (k, (&c, x)) in index.iter().zip(g).enumerate() {
                    dst[(k / m) * cols + c] += x;
                }
            }
            Op::ScatterCols { src, index } => {
                let m = nodes[src.0].value.cols();
                let width = node.value.cols();
                let dst = acc!(*src);
                for (k, &c) in index.iter().enumerate() {
                    dst[k] += g[(k / m) * width + c];
                }
            }
            Op::MeanRows { src, start, end } => {
                let cols = node.value.cols();
                let k = (end - start) as f64;
                let dst = acc!(*src);
                for r in *start..*end {
                    for c in 0..cols {
                        dst[r * cols + c] += g[c] / k;
                    }
                }
            }
            Op::Sum(a) => {
                for d in acc!(*a).iter_mut() {
                    *d += g[0];
                }
            }
            Op::SumSquares(a) => {
                let xin = nodes[a.0].value.data();
                for (d, v) in acc!(*a).iter_mut().zip(xin) {
                    *d += 2.0 * v * g[0];
                }
            }
            Op::CrossEntropy { logits, target } => {
                let z = nodes[logits.0].value.data();
                let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
                let dst = acc!(*logits);
                for (j, v) in z.iter().enumerate() {
                    let p = (v - max).exp() / sum;
                    let t = if j == *target { 1.0 } else { 0.0 };
                    dst[j] += g[0] * (p - t);
                }
            }
        }
    }
}
