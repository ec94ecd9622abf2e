//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] is an append-only list of nodes. Every node stores its value
//! and the operation that produced it; inputs always precede the node, so
//! the list is a topological order. [`Tape::backward`] walks it once in
//! reverse, accumulating vector-Jacobian products, and returns gradients
//! aligned with the [`ParameterStore`] the parameters were read from.

use super::matrix::{self, sigmoid, softplus, Matrix};
use super::params::{Gradients, ParamId, ParameterStore};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    AddGathered(NodeId, NodeId, Vec<usize>),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Offset(NodeId),
    Relu(NodeId),
    Softplus(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    Sin(NodeId),
    Cos(NodeId),
    Square(NodeId),
    Concat(NodeId, NodeId),
    Gather(NodeId, Vec<usize>),
    Slice(NodeId, usize),
    SumRows(NodeId),
    SumAll(NodeId),
    CumsumExclusive(NodeId),
    Reshape(NodeId),
    MulCol(NodeId, NodeId),
    Outer(NodeId, NodeId),
    WeightedSamples(NodeId, NodeId),
    Cross(NodeId, NodeId),
    NormalizeRows(NodeId, f64),
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn unary(&mut self, a: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let v = self.value(a).map(f);
        let ng = self.needs(a);
        self.push(v, op, ng)
    }

    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Constant, false)
    }

    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> NodeId {
        let p = store.get(id);
        let value =
            Matrix::from_vec(p.rows, p.cols, p.data.clone()).expect("store shapes are consistent");
        self.push(value, Op::Param(id), true)
    }

    /// Parameter read without gradient tracking (frozen weights).
    pub fn frozen_param(&mut self, store: &ParameterStore, id: ParamId) -> NodeId {
        let p = store.get(id);
        let value =
            Matrix::from_vec(p.rows, p.cols, p.data.clone()).expect("store shapes are consistent");
        self.constant(value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = matrix::matmul(self.value(a), self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::MatMul(a, b), ng)
    }

    /// `x + bias` with a `1×m` bias broadcast over rows.
    pub fn add_row(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let v = matrix::add_row(self.value(x), self.value(bias));
        let ng = self.needs(x) || self.needs(bias);
        self.push(v, Op::AddRow(x, bias), ng)
    }

    /// `x[i] + table[idx[i]]`.
    pub fn add_gathered(&mut self, x: NodeId, table: NodeId, idx: Vec<usize>) -> NodeId {
        let v = matrix::add_gathered(self.value(x), self.value(table), &idx);
        let ng = self.needs(x) || self.needs(table);
        self.push(v, Op::AddGathered(x, table, idx), ng)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = matrix::zip_with(self.value(a), self.value(b), |x, y| x + y);
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = matrix::zip_with(self.value(a), self.value(b), |x, y| x - y);
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = matrix::zip_with(self.value(a), self.value(b), |x, y| x * y);
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Mul(a, b), ng)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.unary(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.scale(a, -1.0)
    }

    /// `a + c` for a scalar constant `c`.
    pub fn offset(&mut self, a: NodeId, c: f64) -> NodeId {
        self.unary(a, Op::Offset(a), |x| x + c)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Relu(a), matrix::relu)
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Softplus(a), softplus)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Sin(a), f64::sin)
    }

    pub fn cos(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Cos(a), f64::cos)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    /// Column-wise concatenation `[a | b]`.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.rows(), vb.rows(), "concat rows");
        let mut data = Vec::with_capacity(va.rows() * (va.cols() + vb.cols()));
        for r in 0..va.rows() {
            data.extend_from_slice(va.row_slice(r));
            data.extend_from_slice(vb.row_slice(r));
        }
        let v = Matrix::from_vec(va.rows(), va.cols() + vb.cols(), data).unwrap();
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Concat(a, b), ng)
    }

    /// Rows `idx` of `table`.
    pub fn gather(&mut self, table: NodeId, idx: Vec<usize>) -> NodeId {
        let t = self.value(table);
        let mut data = Vec::with_capacity(idx.len() * t.cols());
        for &i in &idx {
            data.extend_from_slice(t.row_slice(i));
        }
        let v = Matrix::from_vec(idx.len(), t.cols(), data).unwrap();
        let ng = self.needs(table);
        self.push(v, Op::Gather(table, idx), ng)
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let va = self.value(a);
        assert!(start + len <= va.cols(), "slice out of range");
        let mut data = Vec::with_capacity(va.rows() * len);
        for r in 0..va.rows() {
            data.extend_from_slice(&va.row_slice(r)[start..start + len]);
        }
        let v = Matrix::from_vec(va.rows(), len, data).unwrap();
        let ng = self.needs(a);
        self.push(v, Op::Slice(a, start), ng)
    }

    /// Row sums as an `n×1` column.
    pub fn sum_rows(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        let data = (0..va.rows())
            .map(|r| va.row_slice(r).iter().sum())
            .collect();
        let v = Matrix::from_vec(va.rows(), 1, data).unwrap();
        let ng = self.needs(a);
        self.push(v, Op::SumRows(a), ng)
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).data().iter().sum();
        let ng = self.needs(a);
        self.push(Matrix::scalar(s), Op::SumAll(a), ng)
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).data().len().max(1) as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// Exclusive prefix sum along each row: `y[r, j] = Σ_{k<j} x[r, k]`.
    pub fn cumsum_exclusive(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        let mut v = Matrix::zeros(va.rows(), va.cols());
        let cols = va.cols();
        for (src, dst) in va
            .data()
            .chunks_exact(cols.max(1))
            .zip(v.data_mut().chunks_exact_mut(cols.max(1)))
        {
            let mut acc = 0.0;
            for (x, y) in src.iter().zip(dst.iter_mut()) {
                *y = acc;
                acc += x;
            }
        }
        let ng = self.needs(a);
        self.push(v, Op::CumsumExclusive(a), ng)
    }

    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> NodeId {
        let v = self.value(a).clone().reshaped(rows, cols);
        let ng = self.needs(a);
        self.push(v, Op::Reshape(a), ng)
    }

    /// `a ⊙ col` with an `n×1` column broadcast across columns.
    pub fn mul_col(&mut self, a: NodeId, col: NodeId) -> NodeId {
        let (va, vc) = (self.value(a), self.value(col));
        assert_eq!(vc.shape(), (va.rows(), 1), "mul_col shapes");
        let mut v = va.clone();
        let cols = va.cols();
        for (row, c) in v.data_mut().chunks_exact_mut(cols.max(1)).zip(vc.data()) {
            row.iter_mut().for_each(|x| *x *= c);
        }
        let ng = self.needs(a) || self.needs(col);
        self.push(v, Op::MulCol(a, col), ng)
    }

    /// Outer product of an `n×1` column and a `1×m` row.
    pub fn outer(&mut self, col: NodeId, row: NodeId) -> NodeId {
        let (vc, vr) = (self.value(col), self.value(row));
        assert_eq!(vc.cols(), 1);
        assert_eq!(vr.rows(), 1);
        let mut data = Vec::with_capacity(vc.rows() * vr.cols());
        for &c in vc.data() {
            data.extend(vr.data().iter().map(|r| c * r));
        }
        let v = Matrix::from_vec(vc.rows(), vr.cols(), data).unwrap();
        let ng = self.needs(col) || self.needs(row);
        self.push(v, Op::Outer(col, row), ng)
    }

    /// Per-ray weighted sum of per-sample rows: `weights` is `R×S`, `values`
    /// is `(R·S)×C` with the samples of ray `r` at rows `r·S..(r+1)·S`.
    pub fn weighted_samples(&mut self, weights: NodeId, values: NodeId) -> NodeId {
        let (w, c) = (self.value(weights), self.value(values));
        let (r, s) = w.shape();
        assert_eq!(c.rows(), r * s, "weighted_samples rows");
        let ch = c.cols();
        let mut v = Matrix::zeros(r, ch);
        for ray in 0..r {
            let out = &mut v.data_mut()[ray * ch..(ray + 1) * ch];
            for j in 0..s {
                let wj = w.get(ray, j);
                for (o, x) in out.iter_mut().zip(c.row_slice(ray * s + j)) {
                    *o += wj * x;
                }
            }
        }
        let ng = self.needs(weights) || self.needs(values);
        self.push(v, Op::WeightedSamples(weights, values), ng)
    }

    /// Row-wise cross product of two `n×3` matrices.
    pub fn cross(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape());
        assert_eq!(va.cols(), 3);
        let mut data = Vec::with_capacity(va.rows() * 3);
        for r in 0..va.rows() {
            data.extend_from_slice(&cross3(va.row_slice(r), vb.row_slice(r)));
        }
        let v = Matrix::from_vec(va.rows(), 3, data).unwrap();
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Cross(a, b), ng)
    }

    /// Row-wise `x / sqrt(|x|² + eps)`.
    pub fn normalize_rows(&mut self, a: NodeId, eps: f64) -> NodeId {
        let va = self.value(a);
        let mut v = va.clone();
        let cols = va.cols();
        for row in v.data_mut().chunks_exact_mut(cols.max(1)) {
            let n = (row.iter().map(|x| x * x).sum::<f64>() + eps).sqrt();
            row.iter_mut().for_each(|x| *x /= n);
        }
        let ng = self.needs(a);
        self.push(v, Op::NormalizeRows(a, eps), ng)
    }

    /// Gradients of the scalar `loss` with respect to every parameter read
    /// through [`Tape::param`]. Parameters that did not take part receive
    /// zeros.
    pub fn backward(&self, loss: NodeId, store: &ParameterStore) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::ShapeMismatch(format!(
                "backward needs a scalar loss, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut out = Gradients::zeros_like(store);
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads, &mut out);
        }
        Ok(out)
    }

    fn propagate(
        &self,
        node: &Node,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
        out: &mut Gradients,
    ) {
        let nodes = &self.nodes;
        // Accumulates into the lazily allocated gradient buffer of an input
        // that needs one. Inputs may repeat (e.g. `mul(a, a)`); each use is a
        // separate block.
        macro_rules! acc {
            ($id:expr, |$buf:ident| $body:block) => {{
                let id: NodeId = $id;
                if nodes[id.0].needs_grad {
                    let len = nodes[id.0].value.data().len();
                    let $buf: &mut Vec<f64> = grads[id.0].get_or_insert_with(|| vec![0.0; len]);
                    $body
                }
            }};
        }
        let val = |id: NodeId| &nodes[id.0].value;
        let y = &node.value;

        match &node.op {
            Op::Constant => {}
            Op::Param(pid) => {
                for (o, x) in out.get_mut(*pid).iter_mut().zip(g) {
                    *o += x;
                }
            }
            Op::MatMul(a, b) => {
                let gm = Matrix::from_vec(y.rows(), y.cols(), g.to_vec()).unwrap();
                acc!(*a, |buf| { matrix::matmul_nt_acc(&gm, val(*b), buf) });
                acc!(*b, |buf| { matrix::matmul_tn_acc(val(*a), &gm, buf) });
            }
            Op::AddRow(x, bias) => {
                acc!(*x, |buf| { add_into(buf, g) });
                acc!(*bias, |buf| {
                    for row in g.chunks_exact(y.cols()) {
                        add_into(buf, row);
                    }
                });
            }
            Op::AddGathered(x, table, idx) => {
                acc!(*x, |buf| { add_into(buf, g) });
                acc!(*table, |buf| {
                    let c = y.cols();
                    for (row, &t) in g.chunks_exact(c).zip(idx) {
                        add_into(&mut buf[t * c..(t + 1) * c], row);
                    }
                });
            }
            Op::Add(a, b) => {
                acc!(*a, |buf| { add_into(buf, g) });
                acc!(*b, |buf| { add_into(buf, g) });
            }
            Op::Sub(a, b) => {
                acc!(*a, |buf| { add_into(buf, g) });
                acc!(*b, |buf| {
                    buf.iter_mut().zip(g).for_each(|(o, x)| *o -= x);
                });
            }
            Op::Mul(a, b) => {
                acc!(*a, |buf| {
                    for ((o, x), w) in buf.iter_mut().zip(g).zip(val(*b).data()) {
                        *o += x * w;
                    }
                });
                acc!(*b, |buf| {
                    for ((o, x), w) in buf.iter_mut().zip(g).zip(val(*a).data()) {
                        *o += x * w;
                    }
                });
            }
            Op::Scale(a, c) => acc!(*a, |buf| {
                buf.iter_mut().zip(g).for_each(|(o, x)| *o += c * x);
            }),
            Op::Offset(a) => acc!(*a, |buf| { add_into(buf, g) }),
            Op::Relu(a) => acc!(*a, |buf| {
                for ((o, x), v) in buf.iter_mut().zip(g).zip(val(*a).data()) {
                    if *v > 0.0 {
                        *o += x;
                    }
                }
            }),
            Op::Softplus(a) => acc!(*a, |buf| {
                for ((o, x), v) in buf.iter_mut().zip(g).zip(val(*a).data()) {
                    *o += x * sigmoid(*v);
                }
            }),
            Op::Sigmoid(a) => acc!(*a, |buf| {
                for ((o, x), s) in buf.iter_mut().zip(g).zip(y.data()) {
                    *o += x * s * (1.0 - s);
                }
            }),
            Op::Exp(a) => acc!(*a, |buf| {
                for ((o, x), e) in buf.iter_mut().zip(g).zip(y.data()) {
                    *o += x * e;
                }
            }),
            Op::Sin(a) => acc!(*a, |buf| {
                for ((o, x), v) in buf.iter_mut().zip(g).zip(val(*a).data()) {
                    *o += x * v.cos();
                }
            }),
            Op::Cos(a) => acc!(*a, |buf| {
                for ((o, x), v) in buf.iter_mut().zip(g).zip(val(*a).data()) {
                    *o -= x * v.sin();
                }
            }),
            Op::Square(a) => acc!(*a, |buf| {
                for ((o, x), v) in buf.iter_mut().zip(g).zip(val(*a).data()) {
                    *o += 2.0 * v * x;
                }
            }),
            Op::Concat(a, b) => {
                let ca = val(*a).cols();
                let cb = val(*b).cols();
                acc!(*a, |buf| {
                    for (dst, row) in buf.chunks_exact_mut(ca.max(1)).zip(g.chunks_exact(ca + cb)) {
                        add_into(dst, &row[..ca]);
                    }
                });
                acc!(*b, |buf| {
                    for (dst, row) in buf.chunks_exact_mut(cb.max(1)).zip(g.chunks_exact(ca + cb)) {
                        add_into(dst, &row[ca..]);
                    }
                });
            }
            Op::Gather(table, idx) => acc!(*table, |buf| {
                let c = y.cols();
                for (row, &t) in g.chunks_exact(c.max(1)).zip(idx) {
                    add_into(&mut buf[t * c..(t + 1) * c], row);
                }
            }),
            Op::Slice(a, start) => acc!(*a, |buf| {
                let ca = val(*a).cols();
                let len = y.cols();
                for (dst, row) in buf.chunks_exact_mut(ca).zip(g.chunks_exact(len.max(1))) {
                    add_into(&mut dst[*start..start + len], row);
                }
            }),
            Op::SumRows(a) => acc!(*a, |buf| {
                let ca = val(*a).cols();
                for (dst, x) in buf.chunks_exact_mut(ca.max(1)).zip(g) {
                    dst.iter_mut().for_each(|o| *o += x);
                }
            }),
            Op::SumAll(a) => acc!(*a, |buf| {
                buf.iter_mut().for_each(|o| *o += g[0]);
            }),
            Op::CumsumExclusive(a) => acc!(*a, |buf| {
                let c = y.cols();
                for (dst, row) in buf.chunks_exact_mut(c.max(1)).zip(g.chunks_exact(c.max(1))) {
                    let mut acc = 0.0;
                    for k in (0..c).rev() {
                        dst[k] += acc;
                        acc += row[k];
                    }
                }
            }),
            Op::Reshape(a) => acc!(*a, |buf| { add_into(buf, g) }),
            Op::MulCol(a, col) => {
                let c = y.cols();
                acc!(*a, |buf| {
                    for ((dst, row), s) in buf
                        .chunks_exact_mut(c.max(1))
                        .zip(g.chunks_exact(c.max(1)))
                        .zip(val(*col).data())
                    {
                        dst.iter_mut().zip(row).for_each(|(o, x)| *o += x * s);
                    }
                });
                acc!(*col, |buf| {
                    for ((o, row), arow) in buf
                        .iter_mut()
                        .zip(g.chunks_exact(c.max(1)))
                        .zip(val(*a).data().chunks_exact(c.max(1)))
                    {
                        *o += row.iter().zip(arow).map(|(x, v)| x * v).sum::<f64>();
                    }
                });
            }
            Op::Outer(col, row) => {
                let c = y.cols();
                acc!(*col, |buf| {
                    for (o, grow) in buf.iter_mut().zip(g.chunks_exact(c.max(1))) {
                        *o += grow
                            .iter()
                            .zip(val(*row).data())
                            .map(|(x, r)| x * r)
                            .sum::<f64>();
                    }
                });
                acc!(*row, |buf| {
                    for (grow, cv) in g.chunks_exact(c.max(1)).zip(val(*col).data()) {
                        buf.iter_mut().zip(grow).for_each(|(o, x)| *o += x * cv);
                    }
                });
            }
            Op::WeightedSamples(w, v) => {
                let (r, s) = val(*w).shape();
                let ch = y.cols();
                acc!(*w, |buf| {
                    for ray in 0..r {
                        let grow = &g[ray * ch..(ray + 1) * ch];
                        for j in 0..s {
                            let vrow = val(*v).row_slice(ray * s + j);
                            buf[ray * s + j] +=
                                grow.iter().zip(vrow).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                });
                acc!(*v, |buf| {
                    for ray in 0..r {
                        let grow = &g[ray * ch..(ray + 1) * ch];
                        for j in 0..s {
                            let wj = val(*w).get(ray, j);
                            let dst = &mut buf[(ray * s + j) * ch..(ray * s + j + 1) * ch];
                            dst.iter_mut().zip(grow).for_each(|(o, x)| *o += wj * x);
                        }
                    }
                });
            }
            Op::Cross(a, b) => {
                // d(a×b)ᵀg: ∂/∂a = b × g, ∂/∂b = g × a.
                acc!(*a, |buf| {
                    for (r, dst) in buf.chunks_exact_mut(3).enumerate() {
                        let d = cross3(val(*b).row_slice(r), &g[3 * r..3 * r + 3]);
                        add_into(dst, &d);
                    }
                });
                acc!(*b, |buf| {
                    for (r, dst) in buf.chunks_exact_mut(3).enumerate() {
                        let d = cross3(&g[3 * r..3 * r + 3], val(*a).row_slice(r));
                        add_into(dst, &d);
                    }
                });
            }
            Op::NormalizeRows(a, eps) => acc!(*a, |buf| {
                let c = y.cols();
                for (r, dst) in buf.chunks_exact_mut(c.max(1)).enumerate() {
                    let x = val(*a).row_slice(r);
                    let gr = &g[r * c..(r + 1) * c];
                    let n2 = x.iter().map(|v| v * v).sum::<f64>() + eps;
                    let n = n2.sqrt();
                    let xg: f64 = x.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for k in 0..c {
                        dst[k] += gr[k] / n - x[k] * xg / (n2 * n);
                    }
                }
            }),
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (o, x) in dst.iter_mut().zip(src) {
        *o += x;
    }
}

pub(crate) fn cross3(a: &[f64], b: &[f64]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Parameters with random values away from relu kinks.
    fn store(shapes: &[(usize, usize)], seed: u64) -> (ParameterStore, Vec<ParamId>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParameterStore::new();
        let ids = shapes
            .iter()
            .enumerate()
            .map(|(i, &(r, c))| {
                let data = (0..r * c)
                    .map(|_| {
                        let v: f64 = rng.random_range(0.1..1.0);
                        if rng.random::<bool>() {
                            v
                        } else {
                            -v
                        }
                    })
                    .collect();
                s.add(&format!("p{i}"), r, c, data).unwrap()
            })
            .collect();
        (s, ids)
    }

    /// Reduces an arbitrary output to a scalar through fixed random weights,
    /// so the check covers the whole Jacobian rather than its column sums.
    fn project(tape: &mut Tape, y: NodeId) -> NodeId {
        let (r, c) = tape.value(y).shape();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let w = Matrix::from_vec(
            r,
            c,
            (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let w = tape.constant(w);
        let p = tape.mul(y, w);
        tape.sum_all(p)
    }

    fn check(shapes: &[(usize, usize)], build: impl Fn(&mut Tape, &[NodeId]) -> NodeId) {
        let (mut s, ids) = store(shapes, shapes.len() as u64 * 31 + 5);
        let eval = |s: &ParameterStore| {
            let mut t = Tape::new();
            let nodes: Vec<_> = ids.iter().map(|&id| t.param(s, id)).collect();
            let y = build(&mut t, &nodes);
            let loss = project(&mut t, y);
            (t, loss)
        };
        let (t, loss) = eval(&s);
        let grads = t.backward(loss, &s).unwrap();
        let h = 1e-6;
        for &id in &ids {
            for k in 0..s.get(id).data.len() {
                let orig = s.get(id).data[k];
                s.data_mut(id)[k] = orig + h;
                let (t1, l1) = eval(&s);
                s.data_mut(id)[k] = orig - h;
                let (t2, l2) = eval(&s);
                s.data_mut(id)[k] = orig;
                let fd = (t1.value(l1).get(0, 0) - t2.value(l2).get(0, 0)) / (2.0 * h);
                let an = grads.get(id)[k];
                let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1.0);
                assert!(
                    err < 1e-6,
                    "param {:?}[{k}]: analytic {an} vs numeric {fd}",
                    id
                );
            }
        }
    }

    #[test]
    fn square_of_three() {
        let mut s = ParameterStore::new();
        let id = s.add("x", 1, 1, vec![3.0]).unwrap();
        let mut t = Tape::new();
        let x = t.param(&s, id);
        let y = t.square(x);
        assert_eq!(t.backward(y, &s).unwrap().get(id), &[6.0]);
    }

    #[test]
    fn inactive_relu_has_zero_gradient() {
        let mut s = ParameterStore::new();
        let id = s.add("x", 1, 1, vec![-2.0]).unwrap();
        let mut t = Tape::new();
        let x = t.param(&s, id);
        let y = t.relu(x);
        assert_eq!(t.backward(y, &s).unwrap().get(id), &[0.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let (s, ids) = store(&[(2, 2)], 1);
        let mut t = Tape::new();
        let x = t.param(&s, ids[0]);
        assert!(matches!(t.backward(x, &s), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn untouched_parameters_get_zero() {
        let (s, ids) = store(&[(1, 3), (2, 2)], 2);
        let mut t = Tape::new();
        let x = t.param(&s, ids[0]);
        let y = t.sum_all(x);
        let g = t.backward(y, &s).unwrap();
        assert_eq!(g.get(ids[1]), &[0.0; 4]);
        assert_eq!(g.get(ids[0]), &[1.0; 3]);
    }

    #[test]
    fn frozen_parameters_get_zero() {
        let (s, ids) = store(&[(1, 3)], 3);
        let mut t = Tape::new();
        let x = t.frozen_param(&s, ids[0]);
        let y = t.sum_all(x);
        assert_eq!(t.backward(y, &s).unwrap().get(ids[0]), &[0.0; 3]);
    }

    #[test]
    fn fd_matmul() {
        check(&[(3, 4), (4, 2)], |t, p| t.matmul(p[0], p[1]));
    }

    #[test]
    fn fd_add_row_and_gathered() {
        check(&[(4, 3), (1, 3)], |t, p| t.add_row(p[0], p[1]));
        check(&[(5, 3), (2, 3)], |t, p| {
            t.add_gathered(p[0], p[1], vec![1, 0, 1, 1, 0])
        });
    }

    #[test]
    fn fd_elementwise_binary() {
        check(&[(2, 3), (2, 3)], |t, p| t.add(p[0], p[1]));
        check(&[(2, 3), (2, 3)], |t, p| t.sub(p[0], p[1]));
        check(&[(2, 3), (2, 3)], |t, p| t.mul(p[0], p[1]));
        check(&[(2, 3)], |t, p| t.mul(p[0], p[0]));
    }

    #[test]
    fn fd_elementwise_unary() {
        check(&[(2, 3)], |t, p| t.scale(p[0], -2.5));
        check(&[(2, 3)], |t, p| t.neg(p[0]));
        check(&[(2, 3)], |t, p| t.offset(p[0], 0.7));
        check(&[(2, 3)], |t, p| t.relu(p[0]));
        check(&[(2, 3)], |t, p| t.softplus(p[0]));
        check(&[(2, 3)], |t, p| t.sigmoid(p[0]));
        check(&[(2, 3)], |t, p| t.exp(p[0]));
        check(&[(2, 3)], |t, p| t.sin(p[0]));
        check(&[(2, 3)], |t, p| t.cos(p[0]));
        check(&[(2, 3)], |t, p| t.square(p[0]));
    }

    #[test]
    fn fd_structural() {
        check(&[(3, 2), (3, 4)], |t, p| t.concat(p[0], p[1]));
        check(&[(3, 2)], |t, p| t.gather(p[0], vec![2, 0, 2, 1]));
        check(&[(3, 5)], |t, p| t.slice_cols(p[0], 1, 3));
        check(&[(3, 4)], |t, p| t.reshape(p[0], 2, 6));
    }

    #[test]
    fn fd_reductions() {
        check(&[(3, 4)], |t, p| t.sum_rows(p[0]));
        check(&[(3, 4)], |t, p| t.sum_all(p[0]));
        check(&[(3, 4)], |t, p| t.mean_all(p[0]));
        check(&[(3, 4)], |t, p| t.cumsum_exclusive(p[0]));
    }

    #[test]
    fn fd_broadcasts() {
        check(&[(3, 4), (3, 1)], |t, p| t.mul_col(p[0], p[1]));
        check(&[(3, 1), (1, 4)], |t, p| t.outer(p[0], p[1]));
        check(&[(2, 3), (6, 3)], |t, p| t.weighted_samples(p[0], p[1]));
    }

    #[test]
    fn fd_geometry() {
        check(&[(4, 3), (4, 3)], |t, p| t.cross(p[0], p[1]));
        check(&[(4, 3)], |t, p| t.normalize_rows(p[0], 1e-9));
    }

    #[test]
    fn fd_two_layer_mlp() {
        // x·W1 + b1 → relu → ·W2 + b2 → squared mean; checked at the
        // acceptance tolerance with a coarser step too.
        let shapes = [(5, 4), (4, 8), (1, 8), (8, 2), (1, 2)];
        let build = |t: &mut Tape, p: &[NodeId]| {
            let h = t.matmul(p[0], p[1]);
            let h = t.add_row(h, p[2]);
            let h = t.relu(h);
            let o = t.matmul(h, p[3]);
            let o = t.add_row(o, p[4]);
            let o = t.square(o);
            t.mean_all(o)
        };
        check(&shapes, build);
        let (mut s, ids) = store(&shapes, 8);
        let loss_of = |s: &ParameterStore| {
            let mut t = Tape::new();
            let nodes: Vec<_> = ids.iter().map(|&id| t.param(s, id)).collect();
            let l = build(&mut t, &nodes);
            (t.value(l).get(0, 0), t.backward(l, s).unwrap())
        };
        let (_, g) = loss_of(&s);
        for &id in &ids {
            for k in 0..s.get(id).data.len() {
                let orig = s.get(id).data[k];
                s.data_mut(id)[k] = orig + 1e-4;
                let lp = loss_of(&s).0;
                s.data_mut(id)[k] = orig - 1e-4;
                let lm = loss_of(&s).0;
                s.data_mut(id)[k] = orig;
                let fd = (lp - lm) / 2e-4;
                let an = g.get(id)[k];
                assert!(
                    (fd - an).abs() <= 1e-3 * fd.abs().max(an.abs()).max(1e-3),
                    "{fd} vs {an}"
                );
            }
        }
    }
}
