//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! Every primitive applied through a [`Tape`] appends one node holding its
//! output value and the operand handles. [`Tape::backward`] walks the nodes
//! once in reverse order, so operands always precede their consumers.

use std::sync::Arc;

use crate::error::{contract, Error, Result};
use crate::tensor::{dot, gemm, CsrMatrix, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// The primitive kinds addressable through [`Tape::apply`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Primitive {
    MatMul,
    Add,
    Relu,
    RowL2Normalize,
    ScalarMul(f64),
    Exp,
    Log,
    Sum,
    Mean,
}

/// Weighted row-pair inner products scattered into an output column:
/// `out[seg[e]] += weight[e] * <lhs[lhs_rows[e]], rhs[rhs_rows[e]]>`.
#[derive(Clone, Debug, Default)]
pub struct PairDotSpec {
    pub lhs_rows: Vec<u32>,
    pub rhs_rows: Vec<u32>,
    pub weights: Vec<f64>,
    pub segments: Vec<u32>,
    pub out_len: usize,
}

impl PairDotSpec {
    pub fn push(&mut self, lhs: usize, rhs: usize, weight: f64, segment: usize) {
        self.lhs_rows.push(lhs as u32);
        self.rhs_rows.push(rhs as u32);
        self.weights.push(weight);
        self.segments.push(segment as u32);
    }

    pub fn len(&self) -> usize {
        self.lhs_rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lhs_rows.is_empty()
    }
}

/// Group assignment for the entries of a column vector.
#[derive(Clone, Debug)]
pub struct Segments {
    pub group: Vec<u32>,
    pub n_groups: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    SparseMatMul(Arc<CsrMatrix>, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    ScalarMul(Var, f64),
    Relu(Var),
    RowL2Normalize(Var),
    Exp(Var),
    Log(Var),
    Sum(Var),
    Mean(Var),
    GatherRows(Var, Arc<Vec<usize>>),
    PairDot(Var, Var, Arc<PairDotSpec>),
    SegmentLogSumExp(Var, Arc<Segments>),
    SoftmaxCrossEntropy(Var, Arc<Vec<(usize, usize)>>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of primitive applications.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by one backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`; zeros when `v` was unreachable.
    pub fn wrt(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        self.grads[v.0].take().unwrap_or_else(|| {
            let (r, c) = self.shapes[v.0];
            Tensor::zeros(r, c)
        })
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension {
            op,
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    Ok(())
}

fn column(op: &'static str, a: &Tensor) -> Result<()> {
    if a.cols() != 1 {
        return Err(Error::Dimension {
            op,
            lhs: a.shape(),
            rhs: (a.rows(), 1),
        });
    }
    Ok(())
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op: &'static str, value: Tensor, kind: Op, operands: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op });
        }
        let requires_grad = operands.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op: kind,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Dispatches one of the named primitive kinds.
    pub fn apply(&mut self, kind: Primitive, operands: &[Var]) -> Result<Var> {
        let arity = match kind {
            Primitive::MatMul | Primitive::Add => 2,
            _ => 1,
        };
        if operands.len() != arity {
            return contract(format!(
                "{kind:?} takes {arity} operand(s), got {}",
                operands.len()
            ));
        }
        let a = operands[0];
        match kind {
            Primitive::MatMul => self.matmul(a, operands[1]),
            Primitive::Add => self.add(a, operands[1]),
            Primitive::Relu => self.relu(a),
            Primitive::RowL2Normalize => self.row_l2_normalize(a),
            Primitive::ScalarMul(c) => self.scalar_mul(a, c),
            Primitive::Exp => self.exp(a),
            Primitive::Log => self.log(a),
            Primitive::Sum => self.sum(a),
            Primitive::Mean => self.mean(a),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    pub fn sparse_matmul(&mut self, m: Arc<CsrMatrix>, x: Var) -> Result<Var> {
        let out = m.matmul(self.value(x))?;
        self.push("sparse_matmul", out, Op::SparseMatMul(m, x), &[x])
    }

    /// Elementwise sum; `b` may also be a single row broadcast over `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.broadcast_binary("add", a, b, |x, y| x + y)?;
        self.push("add", out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.broadcast_binary("sub", a, b, |x, y| x - y)?;
        self.push("sub", out, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape("mul", va, vb)?;
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::from_vec(va.rows(), va.cols(), data)?;
        self.push("mul", out, Op::Mul(a, b), &[a, b])
    }

    fn broadcast_binary(
        &self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() == vb.shape() {
            let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
            return Tensor::from_vec(va.rows(), va.cols(), data);
        }
        if vb.rows() == 1 && vb.cols() == va.cols() {
            let mut out = va.clone();
            for r in 0..out.rows() {
                for (x, &y) in out.row_mut(r).iter_mut().zip(vb.data()) {
                    *x = f(*x, y);
                }
            }
            return Ok(out);
        }
        Err(Error::Dimension {
            op,
            lhs: va.shape(),
            rhs: vb.shape(),
        })
    }

    pub fn scalar_mul(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).map(|x| c * x);
        self.push("scalar_mul", out, Op::ScalarMul(a, c), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push("relu", out, Op::Relu(a), &[a])
    }

    /// Scales each row to unit L2 norm. Zero rows map to zero rows.
    pub fn row_l2_normalize(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).row_normalized();
        self.push("row_l2_normalize", out, Op::RowL2Normalize(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::exp);
        self.push("exp", out, Op::Exp(a), &[a])
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::ln);
        self.push("log", out, Op::Log(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        if v.is_empty() {
            return contract("mean of an empty tensor");
        }
        let m = v.data().iter().sum::<f64>() / v.len() as f64;
        self.push("mean", Tensor::scalar(m), Op::Mean(a), &[a])
    }

    pub fn gather_rows(&mut self, a: Var, idx: Arc<Vec<usize>>) -> Result<Var> {
        let v = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= v.rows()) {
            return contract(format!("gather_rows index {bad} out of {} rows", v.rows()));
        }
        let out = v.gather_rows(&idx);
        self.push("gather_rows", out, Op::GatherRows(a, idx), &[a])
    }

    /// See [`PairDotSpec`]. Output is `out_len x 1`.
    pub fn pair_dot(&mut self, a: Var, b: Var, spec: Arc<PairDotSpec>) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.cols() {
            return Err(Error::Dimension {
                op: "pair_dot",
                lhs: va.shape(),
                rhs: vb.shape(),
            });
        }
        let n = spec.len();
        if spec.rhs_rows.len() != n || spec.weights.len() != n || spec.segments.len() != n {
            return contract("pair_dot spec columns differ in length");
        }
        let mut out = Tensor::zeros(spec.out_len, 1);
        for e in 0..n {
            let (i, j, s) = (
                spec.lhs_rows[e] as usize,
                spec.rhs_rows[e] as usize,
                spec.segments[e] as usize,
            );
            if i >= va.rows() || j >= vb.rows() || s >= spec.out_len {
                return contract(format!("pair_dot entry {e} out of range"));
            }
            out.data_mut()[s] += spec.weights[e] * dot(va.row(i), vb.row(j));
        }
        self.push("pair_dot", out, Op::PairDot(a, b, spec), &[a, b])
    }

    /// Numerically stable log-sum-exp of a column vector within groups.
    pub fn segment_logsumexp(&mut self, a: Var, seg: Arc<Segments>) -> Result<Var> {
        let v = self.value(a);
        column("segment_logsumexp", v)?;
        if seg.group.len() != v.rows() {
            return contract("segment_logsumexp group vector length differs from input");
        }
        let mut max = vec![f64::NEG_INFINITY; seg.n_groups];
        for (i, &g) in seg.group.iter().enumerate() {
            let g = g as usize;
            if g >= seg.n_groups {
                return contract(format!("segment id {g} out of {} groups", seg.n_groups));
            }
            max[g] = max[g].max(v.data()[i]);
        }
        if max.iter().any(|m| *m == f64::NEG_INFINITY) {
            return contract("segment_logsumexp has an empty group");
        }
        let mut acc = vec![0.0; seg.n_groups];
        for (i, &g) in seg.group.iter().enumerate() {
            acc[g as usize] += (v.data()[i] - max[g as usize]).exp();
        }
        let data = acc.iter().zip(&max).map(|(s, m)| m + s.ln()).collect();
        let out = Tensor::from_vec(seg.n_groups, 1, data)?;
        self.push("segment_logsumexp", out, Op::SegmentLogSumExp(a, seg), &[a])
    }

    /// Mean cross-entropy of softmax(logits[row]) against `class`.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        targets: Arc<Vec<(usize, usize)>>,
    ) -> Result<Var> {
        let v = self.value(logits);
        if targets.is_empty() {
            return contract("cross entropy over an empty target set");
        }
        let mut total = 0.0;
        for &(r, c) in targets.iter() {
            if r >= v.rows() || c >= v.cols() {
                return contract(format!("cross entropy target ({r}, {c}) out of range"));
            }
            total += logsumexp(v.row(r)) - v.get(r, c);
        }
        let out = Tensor::scalar(total / targets.len() as f64);
        self.push(
            "softmax_cross_entropy",
            out,
            Op::SoftmaxCrossEntropy(logits, targets),
            &[logits],
        )
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shapes: Vec<_> = self.nodes.iter().map(|n| n.value.shape()).collect();
        if shapes[loss.0] != (1, 1) {
            return contract(format!(
                "backward needs a 1x1 loss, got {:?}",
                shapes[loss.0]
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        for (i, g) in grads.iter_mut().enumerate() {
            if !self.nodes[i].requires_grad {
                *g = None;
            } else if let Some(t) = g {
                if !t.is_finite() {
                    return Err(Error::NonFinite { op: "backward" });
                }
            }
        }
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let rg = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if rg(*a) {
                    let mut ga = Tensor::zeros(va.rows(), va.cols());
                    gemm(g, false, vb, true, &mut ga, 0.0);
                    accumulate(grads, *a, ga);
                }
                if rg(*b) {
                    let mut gb = Tensor::zeros(vb.rows(), vb.cols());
                    gemm(va, true, g, false, &mut gb, 0.0);
                    accumulate(grads, *b, gb);
                }
            }
            Op::SparseMatMul(m, x) => {
                if rg(*x) {
                    accumulate(grads, *x, m.matmul_transposed(g));
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if rg(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if rg(*b) {
                    let vb = self.value(*b);
                    let gb = if vb.shape() == g.shape() {
                        g.map(|x| sign * x)
                    } else {
                        let mut colsum = Tensor::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            for (s, x) in colsum.data_mut().iter_mut().zip(g.row(r)) {
                                *s += sign * x;
                            }
                        }
                        colsum
                    };
                    accumulate(grads, *b, gb);
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if rg(*a) {
                    accumulate(grads, *a, zip_map(g, vb, |x, y| x * y));
                }
                if rg(*b) {
                    accumulate(grads, *b, zip_map(g, va, |x, y| x * y));
                }
            }
            Op::ScalarMul(a, c) => {
                if rg(*a) {
                    accumulate(grads, *a, g.map(|x| c * x));
                }
            }
            Op::Relu(a) => {
                if rg(*a) {
                    let ga = zip_map(g, self.value(*a), |x, y| if y > 0.0 { x } else { 0.0 });
                    accumulate(grads, *a, ga);
                }
            }
            Op::RowL2Normalize(a) => {
                if rg(*a) {
                    let va = self.value(*a);
                    let y = &node.value;
                    let mut ga = Tensor::zeros(va.rows(), va.cols());
                    for r in 0..va.rows() {
                        let norm = dot(va.row(r), va.row(r)).sqrt();
                        if norm == 0.0 {
                            continue;
                        }
                        let proj = dot(y.row(r), g.row(r));
                        for ((d, &gy), &yy) in ga.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                            *d = (gy - yy * proj) / norm;
                        }
                    }
                    accumulate(grads, *a, ga);
                }
            }
            Op::Exp(a) => {
                if rg(*a) {
                    accumulate(grads, *a, zip_map(g, &node.value, |x, y| x * y));
                }
            }
            Op::Log(a) => {
                if rg(*a) {
                    accumulate(grads, *a, zip_map(g, self.value(*a), |x, y| x / y));
                }
            }
            Op::Sum(a) | Op::Mean(a) => {
                if rg(*a) {
                    let va = self.value(*a);
                    let scale = if matches!(node.op, Op::Mean(_)) {
                        g.item() / va.len() as f64
                    } else {
                        g.item()
                    };
                    accumulate(grads, *a, Tensor::filled(va.rows(), va.cols(), scale));
                }
            }
            Op::GatherRows(a, idx) => {
                if rg(*a) {
                    let va = self.value(*a);
                    let mut ga = Tensor::zeros(va.rows(), va.cols());
                    for (k, &i) in idx.iter().enumerate() {
                        for (d, s) in ga.row_mut(i).iter_mut().zip(g.row(k)) {
                            *d += s;
                        }
                    }
                    accumulate(grads, *a, ga);
                }
            }
            Op::PairDot(a, b, spec) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let mut ga = rg(*a).then(|| Tensor::zeros(va.rows(), va.cols()));
                let mut gb = rg(*b).then(|| Tensor::zeros(vb.rows(), vb.cols()));
                for e in 0..spec.len() {
                    let scale = spec.weights[e] * g.data()[spec.segments[e] as usize];
                    if scale == 0.0 {
                        continue;
                    }
                    let (i, j) = (spec.lhs_rows[e] as usize, spec.rhs_rows[e] as usize);
                    if let Some(ga) = ga.as_mut() {
                        for (d, s) in ga.row_mut(i).iter_mut().zip(vb.row(j)) {
                            *d += scale * s;
                        }
                    }
                    if let Some(gb) = gb.as_mut() {
                        for (d, s) in gb.row_mut(j).iter_mut().zip(va.row(i)) {
                            *d += scale * s;
                        }
                    }
                }
                if let Some(ga) = ga {
                    accumulate(grads, *a, ga);
                }
                if let Some(gb) = gb {
                    accumulate(grads, *b, gb);
                }
            }
            Op::SegmentLogSumExp(a, seg) => {
                if rg(*a) {
                    let va = self.value(*a);
                    let out = node.value.data();
                    let data = seg
                        .group
                        .iter()
                        .enumerate()
                        .map(|(i, &k)| {
                            let k = k as usize;
                            g.data()[k] * (va.data()[i] - out[k]).exp()
                        })
                        .collect();
                    let ga = Tensor::from_vec(va.rows(), 1, data).expect("column shape");
                    accumulate(grads, *a, ga);
                }
            }
            Op::SoftmaxCrossEntropy(logits, targets) => {
                if rg(*logits) {
                    let v = self.value(*logits);
                    let scale = g.item() / targets.len() as f64;
                    let mut gl = Tensor::zeros(v.rows(), v.cols());
                    for &(r, c) in targets.iter() {
                        let lse = logsumexp(v.row(r));
                        for (d, &x) in gl.row_mut(r).iter_mut().zip(v.row(r)) {
                            *d += scale * (x - lse).exp();
                        }
                        let cur = gl.get(r, c);
                        gl.set(r, c, cur - scale);
                    }
                    accumulate(grads, *logits, gl);
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, t: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (d, s) in existing.data_mut().iter_mut().zip(t.data()) {
                *d += s;
            }
        }
        slot @ None => *slot = Some(t),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

pub(crate) fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
