//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation applied to [`Var`] handles. Calling
//! [`Tape::gradients`] on a scalar output replays the record backwards.
//! Shape errors inside a tape are programming errors and panic; the public
//! model functions validate shapes before they start recording.

use std::cell::RefCell;
use std::rc::Rc;

use super::{Mat, Real};

enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    AddRow(usize, usize),
    MulRow(usize, usize),
    Transpose(usize),
    SoftmaxRows(usize),
    LogSoftmaxRows(usize),
    Tanh(usize),
    Gelu(usize),
    Abs(usize),
    NormalizeRows(usize, Vec<T>),
    LayerNormRows(usize, Vec<T>),
    SumAll(usize),
    RowSums(usize),
    ColSums(usize),
    SelectRows(usize, Vec<usize>),
    SelectCols(usize, Vec<usize>),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    FrobNorm(usize),
    Focal {
        logits: usize,
        targets: Mat<T>,
        alpha: T,
        gamma: T,
    },
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::MulRow(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Transpose(a)
            | Op::SoftmaxRows(a)
            | Op::LogSoftmaxRows(a)
            | Op::Tanh(a)
            | Op::Gelu(a)
            | Op::Abs(a)
            | Op::NormalizeRows(a, _)
            | Op::LayerNormRows(a, _)
            | Op::SumAll(a)
            | Op::RowSums(a)
            | Op::ColSums(a)
            | Op::SelectRows(a, _)
            | Op::SelectCols(a, _)
            | Op::FrobNorm(a) => vec![*a],
            Op::ConcatCols(ids) | Op::ConcatRows(ids) => ids.clone(),
            Op::Focal { logits, .. } => vec![*logits],
        }
    }
}

struct Node<T> {
    value: Rc<Mat<T>>,
    op: Op<T>,
    /// False for constants and for anything computed from constants only;
    /// backpropagation never visits such nodes.
    tracked: bool,
}

/// Operation record.
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T> {
    tape: &'t Tape<T>,
    id: usize,
}

/// Gradients of one scalar output with respect to every recorded node.
pub struct Grads<T> {
    grads: Vec<Option<Mat<T>>>,
    shapes: Vec<(usize, usize)>,
}

impl<T: Real> Grads<T> {
    /// Gradient with respect to `v`; zeros when `v` does not influence the output.
    pub fn wrt(&self, v: Var<'_, T>) -> Mat<T> {
        match &self.grads[v.id] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.id];
                Mat::zeros(r, c)
            }
        }
    }
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Mat<T>, op: Op<T>) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        let tracked = op.inputs().iter().any(|&i| nodes[i].tracked);
        nodes.push(Node {
            value: Rc::new(value),
            op,
            tracked,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Records a differentiable leaf.
    pub fn leaf(&self, value: Mat<T>) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op: Op::Leaf,
            tracked: true,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Records a leaf whose gradient is never needed; [`Grads::wrt`] returns zeros for it.
    pub fn constant(&self, value: Mat<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&self, value: T) -> Var<'_, T> {
        self.leaf(Mat::filled(1, 1, value))
    }

    fn value_of(&self, id: usize) -> Rc<Mat<T>> {
        self.nodes.borrow()[id].value.clone()
    }

    /// Sum of several `1×1` (or equally shaped) values.
    pub fn sum_of<'t>(&'t self, parts: &[Var<'t, T>]) -> Var<'t, T> {
        let mut it = parts.iter();
        let first = *it.next().expect("sum_of needs at least one term");
        it.fold(first, |acc, &p| acc.add(p))
    }

    /// Backpropagates from `output`, seeding its adjoint with ones.
    pub fn gradients(&self, output: Var<'_, T>) -> Grads<T> {
        let nodes = self.nodes.borrow();
        let n = output.id + 1;
        let shapes: Vec<_> = nodes.iter().map(|n| n.value.shape()).collect();
        let mut grads: Vec<Option<Mat<T>>> = (0..nodes.len()).map(|_| None).collect();
        let (r, c) = shapes[output.id];
        grads[output.id] = Some(Mat::filled(r, c, T::one()));

        let tracked: Vec<bool> = nodes.iter().map(|n| n.tracked).collect();
        fn acc<T: Real>(grads: &mut [Option<Mat<T>>], tracked: &[bool], id: usize, g: Mat<T>) {
            if !tracked[id] {
                return;
            }
            match &mut grads[id] {
                Some(existing) => existing.add_assign(&g).expect("gradient shape"),
                slot @ None => *slot = Some(g),
            }
        }

        for id in (0..n).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            let val = &node.value;
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let av = &nodes[*a].value;
                    let bv = &nodes[*b].value;
                    if tracked[*a] {
                        acc(
                            &mut grads,
                            &tracked,
                            *a,
                            g.matmul_t(bv).expect("matmul grad"),
                        );
                    }
                    if tracked[*b] {
                        acc(
                            &mut grads,
                            &tracked,
                            *b,
                            av.transpose().matmul(&g).expect("matmul grad"),
                        );
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut grads, &tracked, *a, g.clone());
                    acc(&mut grads, &tracked, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, &tracked, *b, g.scale(-T::one()));
                    acc(&mut grads, &tracked, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = g.hadamard(&nodes[*b].value).expect("mul grad");
                    let gb = g.hadamard(&nodes[*a].value).expect("mul grad");
                    acc(&mut grads, &tracked, *a, ga);
                    acc(&mut grads, &tracked, *b, gb);
                }
                Op::Scale(a, s) => acc(&mut grads, &tracked, *a, g.scale(*s)),
                Op::AddRow(a, row) => {
                    acc(&mut grads, &tracked, *row, g.col_sums());
                    acc(&mut grads, &tracked, *a, g);
                }
                Op::MulRow(a, row) => {
                    let av = &nodes[*a].value;
                    let rv = &nodes[*row].value;
                    let mut ga = g.clone();
                    let mut gr = Mat::zeros(1, rv.cols());
                    for i in 0..g.rows() {
                        for j in 0..g.cols() {
                            ga.set(i, j, g.get(i, j) * rv.get(0, j));
                            let cur = gr.get(0, j);
                            gr.set(0, j, cur + g.get(i, j) * av.get(i, j));
                        }
                    }
                    acc(&mut grads, &tracked, *a, ga);
                    acc(&mut grads, &tracked, *row, gr);
                }
                Op::Transpose(a) => acc(&mut grads, &tracked, *a, g.transpose()),
                Op::SoftmaxRows(a) => {
                    let mut ga = g.clone();
                    for i in 0..g.rows() {
                        let y = val.row(i);
                        let gi = g.row(i);
                        let s = super::dot(y, gi);
                        for (j, out) in ga.row_mut(i).iter_mut().enumerate() {
                            *out = y[j] * (gi[j] - s);
                        }
                    }
                    acc(&mut grads, &tracked, *a, ga);
                }
                Op::LogSoftmaxRows(a) => {
                    let mut ga = g.clone();
                    for i in 0..g.rows() {
                        let y = val.row(i);
                        let gi = g.row(i);
                        let s: T = gi.iter().copied().sum();
                        for (j, out) in ga.row_mut(i).iter_mut().enumerate() {
                            *out = gi[j] - y[j].exp() * s;
                        }
                    }
                    acc(&mut grads, &tracked, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = g
                        .zip_map(val, "tanh", |gi, y| gi * (T::one() - y * y))
                        .unwrap();
                    acc(&mut grads, &tracked, *a, ga);
                }
                Op::Gelu(a) => {
                    let ga = g
                        .zip_map(&nodes[*a].value, "gelu", |gi, x| gi * gelu_derivative(x))
                        .unwrap();
                    acc(&mut grads, &tracked, *a, ga);
                }
                Op::Abs(a) => {
                    let ga = g
                        .zip_map(&nodes[*a].value, "abs", |gi, x| gi * sign(x))
                        .unwrap();
                    acc(&mut grads, &tracked, *a, ga);
                }
                Op::NormalizeRows(a, norms) => {
                    let mut ga = g.clone();
                    for i in 0..g.rows() {
                        let y = val.row(i);
                        let gi = g.row(i);
                        let s = super::dot(y, gi);
                        for (j, out) in ga.row_mut(i).iter_mut().enumerate() {
                            *out = (gi[j] - y[j] * s) / norms[i];
                        }
                    }
                    acc(&mut grads, &tracked, *a, ga);
                }
                Op::LayerNormRows(a, inv_std) => {
                    let mut ga = g.clone();
                    let n = T::from_count(g.cols());
                    for i in 0..g.rows() {
                        let y = val.row(i);
                        let gi = g.row(i);
                        let sg: T = gi.iter().copied().sum();
                        let sgy = super::dot(gi, y);
                        for (j, out) in ga.row_mut(i).iter_mut().enumerate() {
                            *out = inv_std[i] / n * (n * gi[j] - sg - y[j] * sgy);
                        }
                    }
                    acc(&mut grads, &tracked, *a, ga);
                }
                Op::SumAll(a) => {
                    let (r, c) = nodes[*a].value.shape();
                    acc(&mut grads, &tracked, *a, Mat::filled(r, c, g.get(0, 0)));
                }
                Op::RowSums(a) => {
                    let (r, c) = nodes[*a].value.shape();
                    acc(
                        &mut grads,
                        &tracked,
                        *a,
                        Mat::from_fn(r, c, |i, _| g.get(i, 0)),
                    );
                }
                Op::ColSums(a) => {
                    let (r, c) = nodes[*a].value.shape();
                    acc(
                        &mut grads,
                        &tracked,
                        *a,
                        Mat::from_fn(r, c, |_, j| g.get(0, j)),
                    );
                }
                Op::SelectRows(a, idx) => {
                    let (r, c) = nodes[*a].value.shape();
                    let mut ga = Mat::zeros(r, c);
                    for (k, &src) in idx.iter().enumerate() {
                        for (o, &x) in ga.row_mut(src).iter_mut().zip(g.row(k)) {
                            *o += x;
                        }
                    }
                    acc(&mut grads, &tracked, *a, ga);
                }
                Op::SelectCols(a, idx) => {
                    let (r, c) = nodes[*a].value.shape();
                    let mut ga = Mat::zeros(r, c);
                    for i in 0..r {
                        for (k, &src) in idx.iter().enumerate() {
                            let cur = ga.get(i, src);
                            ga.set(i, src, cur + g.get(i, k));
                        }
                    }
                    acc(&mut grads, &tracked, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pc = nodes[p].value.cols();
                        let idx: Vec<usize> = (offset..offset + pc).collect();
                        acc(&mut grads, &tracked, p, g.select_cols(&idx).unwrap());
                        offset += pc;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pr = nodes[p].value.rows();
                        let idx: Vec<usize> = (offset..offset + pr).collect();
                        acc(&mut grads, &tracked, p, g.select_rows(&idx).unwrap());
                        offset += pr;
                    }
                }
                Op::FrobNorm(a) => {
                    let av = &nodes[*a].value;
                    let norm = val.get(0, 0);
                    let ga = if norm > T::zero() {
                        av.scale(g.get(0, 0) / norm)
                    } else {
                        Mat::zeros(av.rows(), av.cols())
                    };
                    acc(&mut grads, &tracked, *a, ga);
                }
                Op::Focal {
                    logits,
                    targets,
                    alpha,
                    gamma,
                } => {
                    let sv = &nodes[*logits].value;
                    let g0 = g.get(0, 0);
                    let ga = sv
                        .zip_map(targets, "focal", |s, t| {
                            g0 * focal_term_grad(s, t, *alpha, *gamma)
                        })
                        .unwrap();
                    acc(&mut grads, &tracked, *logits, ga);
                }
            }
        }
        Grads { grads, shapes }
    }
}

#[inline]
fn sign<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044715;

pub(crate) fn gelu<T: Real>(x: T) -> T {
    let u = T::lit(GELU_C) * (x + T::lit(GELU_K) * x * x * x);
    T::lit(0.5) * x * (T::one() + u.tanh())
}

fn gelu_derivative<T: Real>(x: T) -> T {
    let c = T::lit(GELU_C);
    let k = T::lit(GELU_K);
    let u = c * (x + k * x * x * x);
    let th = u.tanh();
    let half = T::lit(0.5);
    half * (T::one() + th)
        + half * x * (T::one() - th * th) * c * (T::one() + T::lit(3.0) * k * x * x)
}

/// `ln σ(s)`, stable for large |s|.
#[inline]
pub(crate) fn log_sigmoid<T: Real>(s: T) -> T {
    if s >= T::zero() {
        -(-s).exp().ln_1p()
    } else {
        s - s.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid<T: Real>(s: T) -> T {
    if s >= T::zero() {
        T::one() / (T::one() + (-s).exp())
    } else {
        let e = s.exp();
        e / (T::one() + e)
    }
}

/// Sigmoid focal term for one logit and a binary target.
pub(crate) fn focal_term<T: Real>(s: T, target: T, alpha: T, gamma: T) -> T {
    let p = sigmoid(s);
    if target > T::lit(0.5) {
        -alpha * (T::one() - p).powf(gamma) * log_sigmoid(s)
    } else {
        -(T::one() - alpha) * p.powf(gamma) * log_sigmoid(-s)
    }
}

pub(crate) fn focal_term_grad<T: Real>(s: T, target: T, alpha: T, gamma: T) -> T {
    let p = sigmoid(s);
    let q = sigmoid(-s);
    if target > T::lit(0.5) {
        alpha * q.powf(gamma) * (gamma * p * log_sigmoid(s) - q)
    } else {
        (T::one() - alpha) * p.powf(gamma) * (p - gamma * q * log_sigmoid(-s))
    }
}

// Methods rather than operator traits: shape errors panic with the op name.
#[allow(clippy::should_implement_trait)]
impl<'t, T: Real> Var<'t, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Mat<T>> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value().shape()
    }

    /// Scalar value of a `1×1` node.
    pub fn item(&self) -> T {
        let v = self.value();
        assert_eq!(v.shape(), (1, 1), "item() on non-scalar");
        v.get(0, 0)
    }

    fn unary(self, value: Mat<T>, op: Op<T>) -> Var<'t, T> {
        self.tape.push(value, op)
    }

    pub fn matmul(self, other: Var<'t, T>) -> Var<'t, T> {
        let v = self
            .value()
            .matmul(&other.value())
            .expect("tape matmul shape");
        self.unary(v, Op::MatMul(self.id, other.id))
    }

    pub fn add(self, other: Var<'t, T>) -> Var<'t, T> {
        let v = self.value().add(&other.value()).expect("tape add shape");
        self.unary(v, Op::Add(self.id, other.id))
    }

    pub fn sub(self, other: Var<'t, T>) -> Var<'t, T> {
        let v = self.value().sub(&other.value()).expect("tape sub shape");
        self.unary(v, Op::Sub(self.id, other.id))
    }

    pub fn mul(self, other: Var<'t, T>) -> Var<'t, T> {
        let v = self
            .value()
            .hadamard(&other.value())
            .expect("tape mul shape");
        self.unary(v, Op::Mul(self.id, other.id))
    }

    pub fn scale(self, s: T) -> Var<'t, T> {
        let v = self.value().scale(s);
        self.unary(v, Op::Scale(self.id, s))
    }

    /// Adds a `1×c` row to every row.
    pub fn add_row(self, row: Var<'t, T>) -> Var<'t, T> {
        let a = self.value();
        let r = row.value();
        assert_eq!(r.shape(), (1, a.cols()), "add_row shape");
        let v = Mat::from_fn(a.rows(), a.cols(), |i, j| a.get(i, j) + r.get(0, j));
        self.unary(v, Op::AddRow(self.id, row.id))
    }

    /// Multiplies every row elementwise by a `1×c` row.
    pub fn mul_row(self, row: Var<'t, T>) -> Var<'t, T> {
        let a = self.value();
        let r = row.value();
        assert_eq!(r.shape(), (1, a.cols()), "mul_row shape");
        let v = Mat::from_fn(a.rows(), a.cols(), |i, j| a.get(i, j) * r.get(0, j));
        self.unary(v, Op::MulRow(self.id, row.id))
    }

    pub fn t(self) -> Var<'t, T> {
        let v = self.value().transpose();
        self.unary(v, Op::Transpose(self.id))
    }

    pub fn softmax_rows(self) -> Var<'t, T> {
        let a = self.value();
        let mut out = Mat::zeros(a.rows(), a.cols());
        for i in 0..a.rows() {
            let p = super::softmax_row(a.row(i), T::one()).expect("unit temperature");
            out.row_mut(i).copy_from_slice(&p);
        }
        self.unary(out, Op::SoftmaxRows(self.id))
    }

    pub fn log_softmax_rows(self) -> Var<'t, T> {
        let a = self.value();
        let mut out = Mat::zeros(a.rows(), a.cols());
        for i in 0..a.rows() {
            let row = a.row(i);
            let max = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<T>().ln();
            for (o, &x) in out.row_mut(i).iter_mut().zip(row) {
                *o = x - lse;
            }
        }
        self.unary(out, Op::LogSoftmaxRows(self.id))
    }

    pub fn tanh(self) -> Var<'t, T> {
        let v = self.value().map(|x| x.tanh());
        self.unary(v, Op::Tanh(self.id))
    }

    pub fn gelu(self) -> Var<'t, T> {
        let v = self.value().map(gelu);
        self.unary(v, Op::Gelu(self.id))
    }

    pub fn abs(self) -> Var<'t, T> {
        let v = self.value().map(|x| x.abs());
        self.unary(v, Op::Abs(self.id))
    }

    /// Rows scaled to unit norm. Panics on a zero row.
    pub fn normalize_rows(self) -> Var<'t, T> {
        let a = self.value();
        let norms: Vec<T> = (0..a.rows()).map(|i| a.row_norm(i)).collect();
        assert!(
            norms.iter().all(|&n| n > T::zero()),
            "zero-norm row on tape"
        );
        let v = Mat::from_fn(a.rows(), a.cols(), |i, j| a.get(i, j) / norms[i]);
        self.unary(v, Op::NormalizeRows(self.id, norms))
    }

    /// Per-row standardization (zero mean, unit variance, eps 1e-5), no affine part.
    pub fn layer_norm_rows(self) -> Var<'t, T> {
        let a = self.value();
        let n = T::from_count(a.cols());
        let eps = T::lit(1e-5);
        let mut out = Mat::zeros(a.rows(), a.cols());
        let mut inv_std = Vec::with_capacity(a.rows());
        for i in 0..a.rows() {
            let row = a.row(i);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
            let inv = T::one() / (var + eps).sqrt();
            for (o, &x) in out.row_mut(i).iter_mut().zip(row) {
                *o = (x - mean) * inv;
            }
            inv_std.push(inv);
        }
        self.unary(out, Op::LayerNormRows(self.id, inv_std))
    }

    pub fn sum(self) -> Var<'t, T> {
        let v = Mat::filled(1, 1, self.value().sum());
        self.unary(v, Op::SumAll(self.id))
    }

    /// `r×1` vector of row sums.
    pub fn row_sums(self) -> Var<'t, T> {
        let a = self.value();
        let v = Mat::from_fn(a.rows(), 1, |i, _| a.row(i).iter().copied().sum());
        self.unary(v, Op::RowSums(self.id))
    }

    /// `1×c` vector of column sums.
    pub fn col_sums(self) -> Var<'t, T> {
        let a = self.value();
        let v = a.col_sums();
        self.unary(v, Op::ColSums(self.id))
    }

    pub fn select_rows(self, idx: &[usize]) -> Var<'t, T> {
        let v = self.value().select_rows(idx).expect("tape select_rows");
        self.unary(v, Op::SelectRows(self.id, idx.to_vec()))
    }

    pub fn select_cols(self, idx: &[usize]) -> Var<'t, T> {
        let v = self.value().select_cols(idx).expect("tape select_cols");
        self.unary(v, Op::SelectCols(self.id, idx.to_vec()))
    }

    pub fn concat_cols(parts: &[Var<'t, T>]) -> Var<'t, T> {
        let tape = parts[0].tape;
        let vals: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let refs: Vec<&Mat<T>> = vals.iter().map(|v| v.as_ref()).collect();
        let v = Mat::concat_cols(&refs).expect("tape concat_cols");
        tape.push(v, Op::ConcatCols(parts.iter().map(|p| p.id).collect()))
    }

    pub fn concat_rows(parts: &[Var<'t, T>]) -> Var<'t, T> {
        let tape = parts[0].tape;
        let vals: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let refs: Vec<&Mat<T>> = vals.iter().map(|v| v.as_ref()).collect();
        let v = Mat::concat_rows(&refs).expect("tape concat_rows");
        tape.push(v, Op::ConcatRows(parts.iter().map(|p| p.id).collect()))
    }

    /// Frobenius norm as a `1×1` value; its gradient is zero at the origin.
    pub fn frobenius_norm(self) -> Var<'t, T> {
        let v = Mat::filled(1, 1, self.value().frobenius_norm());
        self.unary(v, Op::FrobNorm(self.id))
    }

    /// Sum of sigmoid focal terms over all entries, against binary `targets`.
    pub fn focal_sum(self, targets: &Mat<T>, alpha: T, gamma: T) -> Var<'t, T> {
        let s = self.value();
        let total = s
            .zip_map(targets, "focal", |x, t| focal_term(x, t, alpha, gamma))
            .expect("focal shape")
            .sum();
        self.unary(
            Mat::filled(1, 1, total),
            Op::Focal {
                logits: self.id,
                targets: targets.clone(),
                alpha,
                gamma,
            },
        )
    }

    /// Row-wise cosine similarity `(self_i · other_j) / (‖self_i‖‖other_j‖)`.
    pub fn cosine_rows(self, other: Var<'t, T>) -> Var<'t, T> {
        self.normalize_rows().matmul(other.normalize_rows().t())
    }

    /// Mean over rows of `KL(softmax(self/τ) ‖ target)` where `target_log` holds
    /// the (floored) log-probabilities of the reference distribution.
    pub fn row_kl_to(self, target_log: &Mat<T>, tau: T) -> Var<'t, T> {
        let scaled = self.scale(T::one() / tau);
        let p = scaled.softmax_rows();
        let logp = scaled.log_softmax_rows();
        let logq = self.tape.constant(target_log.clone());
        let rows = T::from_count(self.shape().0.max(1));
        p.mul(logp.sub(logq)).sum().scale(T::one() / rows)
    }
}
