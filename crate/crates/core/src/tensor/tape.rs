//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every forward operation as a node holding its value and
//! the ids of its inputs. [`Tape::backward`] walks the nodes in reverse and
//! accumulates adjoints into every leaf created with [`Tape::param`]. A tape is
//! single-use: after one backward pass it is consumed.
//!
//! Broadcasting is limited to adding or subtracting a `1 x c` row vector to an
//! `n x c` matrix. Every other shape mismatch is an error.

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use super::{matmul, matmul_a_bt, matmul_at_b, Matrix, SparseMatrix, TensorError};

#[derive(Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    MatMulBt(usize, usize),
    Transpose(usize),
    Spmm(Rc<SparseMatrix>, usize),
    BasisSpmm {
        mats: Rc<Vec<SparseMatrix>>,
        coeffs: usize,
        products: Vec<usize>,
    },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    ScalarMul(usize, usize),
    RowL2Normalize(usize),
    Prelu(usize, usize),
    Sigmoid(usize),
    SoftmaxRow(usize),
    LogSoftmaxRow(usize),
    MeanRows(usize),
    Bilinear(usize, usize, usize),
    GatherRows(usize, Rc<Vec<usize>>),
    PickPerRow(usize, Rc<Vec<usize>>),
    LogClamped(usize, f64, f64),
    Sum(usize),
    Mean(usize),
}

struct Node {
    value: Rc<Matrix>,
    op: Op,
    requires_grad: bool,
    grad: Option<Matrix>,
}

/// Recording of one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Tensor<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Tensor<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor#{} {:?}", self.id, self.value())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed.get()
    }

    /// Trainable leaf: receives a gradient on backward.
    pub fn param(&self, value: Matrix) -> Tensor<'_> {
        self.push_leaf(value, true)
    }

    /// Constant leaf: no gradient is tracked.
    pub fn constant(&self, value: Matrix) -> Tensor<'_> {
        self.push_leaf(value, false)
    }

    pub fn leaf(&self, value: Matrix, requires_grad: bool) -> Tensor<'_> {
        self.push_leaf(value, requires_grad)
    }

    fn push_leaf(&self, value: Matrix, requires_grad: bool) -> Tensor<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Tensor {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn push(
        &self,
        op_name: &'static str,
        value: Matrix,
        op: Op,
        inputs: &[usize],
    ) -> Result<Tensor<'_>, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: op_name });
        }
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = inputs.iter().any(|&i| nodes[i].requires_grad);
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
            grad: None,
        });
        Ok(Tensor {
            tape: self,
            id: nodes.len() - 1,
        })
    }

    fn value_of(&self, id: usize) -> Rc<Matrix> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Gradient accumulated into `t` by the last backward pass.
    pub fn grad(&self, t: Tensor<'_>) -> Option<Matrix> {
        self.nodes.borrow()[t.id].grad.clone()
    }

    /// Runs the backward pass from a `1 x 1` loss and consumes the tape.
    pub fn backward(&self, loss: Tensor<'_>) -> Result<(), TensorError> {
        if self.consumed.get() {
            return Err(TensorError::TapeConsumed);
        }
        let shape = loss.shape();
        if shape != (1, 1) {
            return Err(TensorError::NonScalarLoss { shape });
        }
        self.consumed.set(true);

        let mut nodes = self.nodes.borrow_mut();
        let mut grads: Vec<Option<Matrix>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Matrix::scalar(1.0));

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
                continue;
            }
            backprop(&nodes, id, &g, &mut grads);
        }

        for (node, g) in nodes.iter_mut().zip(grads) {
            if matches!(node.op, Op::Leaf) && node.requires_grad {
                node.grad = g;
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Matrix>], id: usize, g: Matrix) {
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Sums the rows of `g` into a single row (adjoint of row broadcasting).
fn column_sums(g: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, g.cols());
    for r in 0..g.rows() {
        for (o, v) in out.as_mut_slice().iter_mut().zip(g.row(r)) {
            *o += v;
        }
    }
    out
}

fn broadcast_adjoint(g: &Matrix, target: (usize, usize)) -> Matrix {
    if g.shape() == target {
        g.clone()
    } else {
        column_sums(g)
    }
}

fn backprop(nodes: &[Node], id: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
    let val = |i: usize| -> &Matrix { &nodes[i].value };
    let needs = |i: usize| nodes[i].requires_grad;
    let out = &nodes[id].value;

    match &nodes[id].op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            if needs(*a) {
                accumulate(grads, *a, matmul_a_bt(g, val(*b)));
            }
            if needs(*b) {
                accumulate(grads, *b, matmul_at_b(val(*a), g));
            }
        }
        Op::MatMulBt(a, b) => {
            if needs(*a) {
                accumulate(grads, *a, matmul(g, val(*b)));
            }
            if needs(*b) {
                accumulate(grads, *b, matmul_at_b(g, val(*a)));
            }
        }
        Op::Transpose(a) => accumulate(grads, *a, g.transpose()),
        Op::Spmm(s, b) => {
            if needs(*b) {
                accumulate(grads, *b, s.transpose().spmm(g));
            }
        }
        Op::BasisSpmm {
            mats,
            coeffs,
            products,
        } => {
            let coeff = val(*coeffs);
            let nb = products.len();
            let mut coeff_grad = Matrix::zeros(coeff.rows(), coeff.cols());
            let mut prod_grads: Vec<Matrix> = products
                .iter()
                .map(|&p| Matrix::zeros(val(p).rows(), val(p).cols()))
                .collect();
            for (r, s) in mats.iter().enumerate() {
                for (i, j, v) in s.iter() {
                    let gi = g.row(i);
                    for b in 0..nb {
                        let a_rb = coeff.get(r, b);
                        let pj = val(products[b]).row(j);
                        let dotv: f64 = gi.iter().zip(pj).map(|(x, y)| x * y).sum();
                        coeff_grad.set(r, b, coeff_grad.get(r, b) + v * dotv);
                        let scale = v * a_rb;
                        for (o, x) in prod_grads[b].row_mut(j).iter_mut().zip(gi) {
                            *o += scale * x;
                        }
                    }
                }
            }
            if needs(*coeffs) {
                accumulate(grads, *coeffs, coeff_grad);
            }
            for (&p, pg) in products.iter().zip(prod_grads) {
                if needs(p) {
                    accumulate(grads, p, pg);
                }
            }
        }
        Op::Add(a, b) => {
            if needs(*a) {
                accumulate(grads, *a, g.clone());
            }
            if needs(*b) {
                accumulate(grads, *b, broadcast_adjoint(g, val(*b).shape()));
            }
        }
        Op::Sub(a, b) => {
            if needs(*a) {
                accumulate(grads, *a, g.clone());
            }
            if needs(*b) {
                let mut gb = broadcast_adjoint(g, val(*b).shape());
                gb.scale_inplace(-1.0);
                accumulate(grads, *b, gb);
            }
        }
        Op::Mul(a, b) => {
            if needs(*a) {
                accumulate(grads, *a, zip_broadcast(g, val(*b), |x, y| x * y));
            }
            if needs(*b) {
                accumulate(grads, *b, zip_broadcast(g, val(*a), |x, y| x * y));
            }
        }
        Op::Scale(a, c) => accumulate(grads, *a, g.map(|x| x * c)),
        Op::AddScalar(a) => accumulate(grads, *a, g.clone()),
        Op::ScalarMul(s, a) => {
            let sv = val(*s).item();
            if needs(*s) {
                accumulate(grads, *s, Matrix::scalar(g.dot(val(*a))));
            }
            if needs(*a) {
                accumulate(grads, *a, g.map(|x| x * sv));
            }
        }
        Op::RowL2Normalize(a) => {
            let x = val(*a);
            let mut gx = Matrix::zeros(x.rows(), x.cols());
            for r in 0..x.rows() {
                let norm = x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    continue;
                }
                let y = out.row(r);
                let gr = g.row(r);
                let proj: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                for ((o, &yv), &gv) in gx.row_mut(r).iter_mut().zip(y).zip(gr) {
                    *o = (gv - yv * proj) / norm;
                }
            }
            accumulate(grads, *a, gx);
        }
        Op::Prelu(a, slope) => {
            let x = val(*a);
            let s = val(*slope).item();
            if needs(*a) {
                let mut gx = g.clone();
                for (gv, &xv) in gx.as_mut_slice().iter_mut().zip(x.as_slice()) {
                    if xv <= 0.0 {
                        *gv *= s;
                    }
                }
                accumulate(grads, *a, gx);
            }
            if needs(*slope) {
                let gs: f64 = x
                    .as_slice()
                    .iter()
                    .zip(g.as_slice())
                    .filter(|(xv, _)| **xv <= 0.0)
                    .map(|(xv, gv)| xv * gv)
                    .sum();
                accumulate(grads, *slope, Matrix::scalar(gs));
            }
        }
        Op::Sigmoid(a) => {
            let mut gx = g.clone();
            for (gv, &y) in gx.as_mut_slice().iter_mut().zip(out.as_slice()) {
                *gv *= y * (1.0 - y);
            }
            accumulate(grads, *a, gx);
        }
        Op::SoftmaxRow(a) => {
            let mut gx = Matrix::zeros(out.rows(), out.cols());
            for r in 0..out.rows() {
                let y = out.row(r);
                let gr = g.row(r);
                let dotv: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                for ((o, &yv), &gv) in gx.row_mut(r).iter_mut().zip(y).zip(gr) {
                    *o = yv * (gv - dotv);
                }
            }
            accumulate(grads, *a, gx);
        }
        Op::LogSoftmaxRow(a) => {
            let mut gx = Matrix::zeros(out.rows(), out.cols());
            for r in 0..out.rows() {
                let y = out.row(r);
                let gr = g.row(r);
                let gsum: f64 = gr.iter().sum();
                for ((o, &yv), &gv) in gx.row_mut(r).iter_mut().zip(y).zip(gr) {
                    *o = gv - yv.exp() * gsum;
                }
            }
            accumulate(grads, *a, gx);
        }
        Op::MeanRows(a) => {
            let x = val(*a);
            let n = x.rows() as f64;
            let mut gx = Matrix::zeros(x.rows(), x.cols());
            for r in 0..x.rows() {
                for (o, &gv) in gx.row_mut(r).iter_mut().zip(g.row(0)) {
                    *o = gv / n;
                }
            }
            accumulate(grads, *a, gx);
        }
        Op::Bilinear(h, m, gs) => {
            let (hv, mv, gv) = (val(*h), val(*m), val(*gs));
            let d = mv.rows();
            if needs(*h) {
                // v = M gᵀ
                let v = matmul_a_bt(mv, gv);
                let mut gh = Matrix::zeros(hv.rows(), hv.cols());
                for i in 0..hv.rows() {
                    let gi = g.get(i, 0);
                    for (o, vv) in gh.row_mut(i).iter_mut().zip(v.as_slice()) {
                        *o = gi * vv;
                    }
                }
                accumulate(grads, *h, gh);
            }
            if needs(*m) || needs(*gs) {
                // u = Σ_i G_i h_i
                let mut u = vec![0.0; d];
                for i in 0..hv.rows() {
                    let gi = g.get(i, 0);
                    for (o, x) in u.iter_mut().zip(hv.row(i)) {
                        *o += gi * x;
                    }
                }
                if needs(*m) {
                    let gm = Matrix::from_fn(d, d, |j, k| u[j] * gv.get(0, k));
                    accumulate(grads, *m, gm);
                }
                if needs(*gs) {
                    let gg =
                        Matrix::from_fn(1, d, |_, k| (0..d).map(|j| u[j] * mv.get(j, k)).sum());
                    accumulate(grads, *gs, gg);
                }
            }
        }
        Op::GatherRows(a, idx) => {
            let x = val(*a);
            let mut gx = Matrix::zeros(x.rows(), x.cols());
            for (k, &i) in idx.iter().enumerate() {
                for (o, v) in gx.row_mut(i).iter_mut().zip(g.row(k)) {
                    *o += v;
                }
            }
            accumulate(grads, *a, gx);
        }
        Op::PickPerRow(a, cols) => {
            let x = val(*a);
            let mut gx = Matrix::zeros(x.rows(), x.cols());
            for (r, &c) in cols.iter().enumerate() {
                gx.set(r, c, g.get(r, 0));
            }
            accumulate(grads, *a, gx);
        }
        Op::LogClamped(a, lo, hi) => {
            let x = val(*a);
            let mut gx = g.clone();
            for (gv, &xv) in gx.as_mut_slice().iter_mut().zip(x.as_slice()) {
                *gv = if xv >= *lo && xv <= *hi {
                    *gv / xv
                } else {
                    0.0
                };
            }
            accumulate(grads, *a, gx);
        }
        Op::Sum(a) => {
            let x = val(*a);
            accumulate(grads, *a, Matrix::filled(x.rows(), x.cols(), g.item()));
        }
        Op::Mean(a) => {
            let x = val(*a);
            accumulate(
                grads,
                *a,
                Matrix::filled(x.rows(), x.cols(), g.item() / x.len() as f64),
            );
        }
    }
}

fn check_same(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Result<(), TensorError> {
    if a == b {
        Ok(())
    } else {
        Err(TensorError::ShapeMismatch {
            op,
            left: a,
            right: b,
        })
    }
}

fn check_broadcast(
    op: &'static str,
    a: (usize, usize),
    b: (usize, usize),
) -> Result<(), TensorError> {
    if a == b || (b.0 == 1 && b.1 == a.1) {
        Ok(())
    } else {
        Err(TensorError::ShapeMismatch {
            op,
            left: a,
            right: b,
        })
    }
}

fn check_scalar(op: &'static str, s: (usize, usize)) -> Result<(), TensorError> {
    if s == (1, 1) {
        Ok(())
    } else {
        Err(TensorError::ShapeMismatch {
            op,
            left: s,
            right: (1, 1),
        })
    }
}

fn zip_broadcast(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    if a.shape() == b.shape() {
        let data = a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Matrix::from_vec(a.rows(), a.cols(), data)
    } else {
        let brow = b.row(0);
        Matrix::from_fn(a.rows(), a.cols(), |r, c| f(a.get(r, c), brow[c]))
    }
}

fn row_softmax(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

impl<'t> Tensor<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Current forward value.
    pub fn value(&self) -> Rc<Matrix> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Gradient after backward, if this is a trainable leaf.
    pub fn grad(&self) -> Option<Matrix> {
        self.tape.grad(*self)
    }

    fn same_tape(&self, other: &Tensor<'_>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "tensors belong to different tapes"
        );
    }

    pub fn matmul(self, other: Tensor<'t>) -> Result<Tensor<'t>, TensorError> {
        self.same_tape(&other);
        let (a, b) = (self.value(), other.value());
        if a.cols() != b.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: a.shape(),
                right: b.shape(),
            });
        }
        self.tape.push(
            "matmul",
            matmul(&a, &b),
            Op::MatMul(self.id, other.id),
            &[self.id, other.id],
        )
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(self, other: Tensor<'t>) -> Result<Tensor<'t>, TensorError> {
        self.same_tape(&other);
        let (a, b) = (self.value(), other.value());
        if a.cols() != b.cols() {
            return Err(TensorError::ShapeMismatch {
                op: "matmul_t",
                left: a.shape(),
                right: b.shape(),
            });
        }
        self.tape.push(
            "matmul_t",
            matmul_a_bt(&a, &b),
            Op::MatMulBt(self.id, other.id),
            &[self.id, other.id],
        )
    }

    pub fn transpose(self) -> Result<Tensor<'t>, TensorError> {
        let v = self.value().transpose();
        self.tape
            .push("transpose", v, Op::Transpose(self.id), &[self.id])
    }

    /// `sparse · self`; the sparse operand is a constant.
    pub fn spmm_by(self, sparse: Rc<SparseMatrix>) -> Result<Tensor<'t>, TensorError> {
        let b = self.value();
        if sparse.cols() != b.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "spmm",
                left: sparse.shape(),
                right: b.shape(),
            });
        }
        let v = sparse.spmm(&b);
        self.tape
            .push("spmm", v, Op::Spmm(sparse, self.id), &[self.id])
    }

    pub fn add(self, other: Tensor<'t>) -> Result<Tensor<'t>, TensorError> {
        self.same_tape(&other);
        let (a, b) = (self.value(), other.value());
        check_broadcast("add", a.shape(), b.shape())?;
        self.tape.push(
            "add",
            zip_broadcast(&a, &b, |x, y| x + y),
            Op::Add(self.id, other.id),
            &[self.id, other.id],
        )
    }

    pub fn sub(self, other: Tensor<'t>) -> Result<Tensor<'t>, TensorError> {
        self.same_tape(&other);
        let (a, b) = (self.value(), other.value());
        check_broadcast("sub", a.shape(), b.shape())?;
        self.tape.push(
            "sub",
            zip_broadcast(&a, &b, |x, y| x - y),
            Op::Sub(self.id, other.id),
            &[self.id, other.id],
        )
    }

    /// Elementwise product of two equally shaped tensors.
    pub fn mul(self, other: Tensor<'t>) -> Result<Tensor<'t>, TensorError> {
        self.same_tape(&other);
        let (a, b) = (self.value(), other.value());
        check_same("mul", a.shape(), b.shape())?;
        self.tape.push(
            "mul",
            zip_broadcast(&a, &b, |x, y| x * y),
            Op::Mul(self.id, other.id),
            &[self.id, other.id],
        )
    }

    /// Multiplies by a fixed constant.
    pub fn scale(self, c: f64) -> Result<Tensor<'t>, TensorError> {
        let v = self.value().map(|x| x * c);
        self.tape
            .push("scale", v, Op::Scale(self.id, c), &[self.id])
    }

    /// Adds a fixed constant to every entry.
    pub fn add_scalar(self, c: f64) -> Result<Tensor<'t>, TensorError> {
        let v = self.value().map(|x| x + c);
        self.tape
            .push("add_scalar", v, Op::AddScalar(self.id), &[self.id])
    }

    /// Multiplies by a `1 x 1` (typically learnable) scalar tensor.
    pub fn scalar_mul(self, s: Tensor<'t>) -> Result<Tensor<'t>, TensorError> {
        self.same_tape(&s);
        let sv = s.value();
        check_scalar("scalar_mul", sv.shape())?;
        let c = sv.item();
        let v = self.value().map(|x| x * c);
        self.tape.push(
            "scalar_mul",
            v,
            Op::ScalarMul(s.id, self.id),
            &[s.id, self.id],
        )
    }

    /// Divides each row by its Euclidean norm. All-zero rows pass through unchanged.
    pub fn row_l2_normalize(self) -> Result<Tensor<'t>, TensorError> {
        let mut v = (*self.value()).clone();
        for r in 0..v.rows() {
            let row = v.row_mut(r);
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for x in row.iter_mut() {
                    *x /= norm;
                }
            }
        }
        self.tape.push(
            "row_l2_normalize",
            v,
            Op::RowL2Normalize(self.id),
            &[self.id],
        )
    }

    /// `max(0, x) + a·min(0, x)` with a `1 x 1` slope tensor `a`.
    pub fn prelu(self, slope: Tensor<'t>) -> Result<Tensor<'t>, TensorError> {
        self.same_tape(&slope);
        let sv = slope.value();
        check_scalar("prelu", sv.shape())?;
        let a = sv.item();
        let v = self.value().map(|x| if x > 0.0 { x } else { a * x });
        self.tape.push(
            "prelu",
            v,
            Op::Prelu(self.id, slope.id),
            &[self.id, slope.id],
        )
    }

    pub fn sigmoid(self) -> Result<Tensor<'t>, TensorError> {
        let v = self.value().map(sigmoid);
        self.tape
            .push("sigmoid", v, Op::Sigmoid(self.id), &[self.id])
    }

    pub fn softmax_row(self) -> Result<Tensor<'t>, TensorError> {
        let v = row_softmax(&self.value());
        self.tape
            .push("softmax_row", v, Op::SoftmaxRow(self.id), &[self.id])
    }

    pub fn log_softmax_row(self) -> Result<Tensor<'t>, TensorError> {
        let mut v = (*self.value()).clone();
        for r in 0..v.rows() {
            let row = v.row_mut(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            for x in row.iter_mut() {
                *x -= lse;
            }
        }
        self.tape
            .push("log_softmax_row", v, Op::LogSoftmaxRow(self.id), &[self.id])
    }

    /// Column means, as a `1 x c` row.
    pub fn mean_rows(self) -> Result<Tensor<'t>, TensorError> {
        let x = self.value();
        if x.rows() == 0 {
            return Err(TensorError::Empty { op: "mean_rows" });
        }
        let mut v = column_sums(&x);
        v.scale_inplace(1.0 / x.rows() as f64);
        self.tape
            .push("mean_rows", v, Op::MeanRows(self.id), &[self.id])
    }

    /// Per-row bilinear score `h_i M gᵀ` for `self = H (n x d)`, `m (d x d)`, `g (1 x d)`; returns `n x 1`.
    pub fn bilinear(self, m: Tensor<'t>, g: Tensor<'t>) -> Result<Tensor<'t>, TensorError> {
        self.same_tape(&m);
        self.same_tape(&g);
        let (h, mv, gv) = (self.value(), m.value(), g.value());
        let d = h.cols();
        if mv.shape() != (d, d) {
            return Err(TensorError::ShapeMismatch {
                op: "bilinear",
                left: h.shape(),
                right: mv.shape(),
            });
        }
        if gv.shape() != (1, d) {
            return Err(TensorError::ShapeMismatch {
                op: "bilinear",
                left: mv.shape(),
                right: gv.shape(),
            });
        }
        let mg = matmul_a_bt(&mv, &gv); // d x 1
        let v = matmul(&h, &mg);
        self.tape.push(
            "bilinear",
            v,
            Op::Bilinear(self.id, m.id, g.id),
            &[self.id, m.id, g.id],
        )
    }

    pub fn gather_rows(self, idx: &[usize]) -> Result<Tensor<'t>, TensorError> {
        let x = self.value();
        if let Some(&bad) = idx.iter().find(|&&i| i >= x.rows()) {
            return Err(TensorError::IndexOutOfRange {
                index: bad,
                bound: x.rows(),
            });
        }
        let v = x.select_rows(idx);
        self.tape.push(
            "gather_rows",
            v,
            Op::GatherRows(self.id, Rc::new(idx.to_vec())),
            &[self.id],
        )
    }

    /// Picks entry `(r, cols[r])` from every row; returns `n x 1`.
    pub fn pick_per_row(self, cols: &[usize]) -> Result<Tensor<'t>, TensorError> {
        let x = self.value();
        if cols.len() != x.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "pick_per_row",
                left: x.shape(),
                right: (cols.len(), 1),
            });
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= x.cols()) {
            return Err(TensorError::IndexOutOfRange {
                index: bad,
                bound: x.cols(),
            });
        }
        let v = Matrix::from_fn(x.rows(), 1, |r, _| x.get(r, cols[r]));
        self.tape.push(
            "pick_per_row",
            v,
            Op::PickPerRow(self.id, Rc::new(cols.to_vec())),
            &[self.id],
        )
    }

    /// `ln(clamp(x, lo, hi))`; the gradient vanishes where clamping is active.
    pub fn log_clamped(self, lo: f64, hi: f64) -> Result<Tensor<'t>, TensorError> {
        let v = self.value().map(|x| x.clamp(lo, hi).ln());
        self.tape.push(
            "log_clamped",
            v,
            Op::LogClamped(self.id, lo, hi),
            &[self.id],
        )
    }

    pub fn sum(self) -> Result<Tensor<'t>, TensorError> {
        let v = Matrix::scalar(self.value().sum());
        self.tape.push("sum", v, Op::Sum(self.id), &[self.id])
    }

    pub fn mean(self) -> Result<Tensor<'t>, TensorError> {
        let x = self.value();
        if x.is_empty() {
            return Err(TensorError::Empty { op: "mean" });
        }
        let v = Matrix::scalar(x.sum() / x.len() as f64);
        self.tape.push("mean", v, Op::Mean(self.id), &[self.id])
    }
}

/// `Σ_r mats[r] · (Σ_b coeffs[r, b] · products[b])`.
///
/// This is the relational aggregation with basis-decomposed weights: each
/// `products[b]` holds `H · V_bᵀ`, each `mats[r]` is the constant sparse
/// operator of relation `r`. The per-relation combination is evaluated only
/// at the rows the sparse operator touches.
pub fn basis_spmm<'t>(
    mats: Rc<Vec<SparseMatrix>>,
    coeffs: Tensor<'t>,
    products: &[Tensor<'t>],
) -> Result<Tensor<'t>, TensorError> {
    let tape = coeffs.tape;
    let cv = coeffs.value();
    if cv.rows() != mats.len() || cv.cols() != products.len() {
        return Err(TensorError::ShapeMismatch {
            op: "basis_spmm",
            left: cv.shape(),
            right: (mats.len(), products.len()),
        });
    }
    let Some(first) = products.first() else {
        return Err(TensorError::Empty { op: "basis_spmm" });
    };
    let pshape = first.shape();
    let pvals: Vec<Rc<Matrix>> = products.iter().map(|p| p.value()).collect();
    for p in &pvals {
        check_same("basis_spmm", pshape, p.shape())?;
    }
    let width = pshape.1;
    let out_rows = mats.first().map_or(pshape.0, |s| s.rows());
    let mut out = Matrix::zeros(out_rows, width);
    let mut combined = vec![0.0; width];
    for (r, s) in mats.iter().enumerate() {
        if s.shape() != (out_rows, pshape.0) {
            return Err(TensorError::ShapeMismatch {
                op: "basis_spmm",
                left: s.shape(),
                right: pshape,
            });
        }
        for (i, j, v) in s.iter() {
            combined.iter_mut().for_each(|x| *x = 0.0);
            for (b, p) in pvals.iter().enumerate() {
                let a = cv.get(r, b);
                for (c, x) in combined.iter_mut().zip(p.row(j)) {
                    *c += a * x;
                }
            }
            for (o, c) in out.row_mut(i).iter_mut().zip(&combined) {
                *o += v * c;
            }
        }
    }
    let mut inputs = vec![coeffs.id];
    inputs.extend(products.iter().map(|p| p.id));
    tape.push(
        "basis_spmm",
        out,
        Op::BasisSpmm {
            mats,
            coeffs: coeffs.id,
            products: products.iter().map(|p| p.id).collect(),
        },
        &inputs,
    )
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
