//! Tape-based reverse-mode differentiation over [`Mat`] values.
//!
//! A [`Graph`] records every operation of one forward pass. Parameters are
//! referenced from a borrowed [`ParamStore`] rather than copied onto the tape,
//! so building a graph per sample stays cheap.

use std::rc::Rc;

use super::mat::gemm_into;
use super::param::{Grads, ParamId, ParamStore};
use super::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unary {
    Relu,
    Sigmoid,
    Tanh,
    Silu,
    Softplus,
    Exp,
    Log,
    Abs,
    Neg,
    Gelu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

/// Hand-written operation with its own backward rule.
pub trait CustomOp {
    fn name(&self) -> &'static str;
    /// One entry per input; `None` means no gradient flows to that input.
    fn backward(&self, inputs: &[&Mat], output: &Mat, grad: &Mat) -> Vec<Option<Mat>>;
}

enum Op {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Binary { kind: Binary, a: Var, b: Var },
    Scale { a: Var, s: f64 },
    AddScalar { a: Var },
    Unary { kind: Unary, a: Var },
    Softmax { a: Var },
    NormRows { a: Var, inv_std: Vec<f64> },
    NormCols { a: Var, inv_std: Vec<f64> },
    ConcatCols { parts: Vec<Var> },
    ConcatRows { parts: Vec<Var> },
    SliceCols { a: Var, start: usize },
    GatherRows { a: Var, idx: Vec<usize> },
    Transpose { a: Var },
    Reshape { a: Var },
    Sum { a: Var },
    Clamp { a: Var, lo: f64, hi: f64 },
    Custom { op: Box<dyn CustomOp>, inputs: Vec<Var> },
}

struct Node {
    value: Option<Mat>,
    param: Option<ParamId>,
    op: Op,
    needs_grad: bool,
}

/// One forward pass worth of recorded operations.
pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    track_params: bool,
}

/// Gradients of one scalar with respect to every differentiable leaf.
pub struct Gradients {
    leaves: Vec<Option<Mat>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Mat> {
        self.leaves.get(v.0).and_then(Option::as_ref)
    }

    /// Adds every parameter gradient into `grads`.
    pub fn accumulate_into(self, grads: &mut Grads) {
        let mut leaves = self.leaves;
        for (id, node) in self.params {
            if let Some(g) = leaves[node].take() {
                grads.accumulate_owned(id, g);
            }
        }
    }

    /// Gradient of a parameter summed over every node that reads it.
    pub fn param_grad(&self, id: ParamId) -> Option<Mat> {
        let mut total: Option<Mat> = None;
        for g in self.params.iter().filter(|(p, _)| *p == id).filter_map(|(_, n)| self.leaves[*n].as_ref()) {
            match &mut total {
                Some(t) => t.add_assign(g),
                None => total = Some(g.clone()),
            }
        }
        total
    }
}

fn bcast_ok(a: (usize, usize), b: (usize, usize)) -> bool {
    (b.0 == a.0 || b.0 == 1) && (b.1 == a.1 || b.1 == 1)
}

/// Sums `g` (shape of `a`) down to the broadcast shape `b`.
fn reduce_to(g: &Mat, b: (usize, usize)) -> Mat {
    if g.shape() == b {
        return g.clone();
    }
    let mut out = Mat::zeros(b.0, b.1);
    let (rows, cols) = g.shape();
    for r in 0..rows {
        let br = if b.0 == 1 { 0 } else { r };
        for c in 0..cols {
            let bc = if b.1 == 1 { 0 } else { c };
            let v = out.get(br, bc) + g.get(r, c);
            out.set(br, bc, v);
        }
    }
    out
}

#[inline]
/// `f(a, b)` elementwise with `b` broadcast to the shape of `a`.
fn bmap(a: &Mat, b: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    let (rows, cols) = a.shape();
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let brow = b.row(if b.rows() == 1 { 0 } else { r });
        if b.cols() == 1 {
            out.extend(a.row(r).iter().map(|&x| f(x, brow[0])));
        } else {
            out.extend(a.row(r).iter().zip(brow).map(|(&x, &y)| f(x, y)));
        }
    }
    Mat::from_vec(rows, cols, out)
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

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn apply_unary(kind: Unary, x: f64) -> f64 {
    match kind {
        Unary::Relu => x.max(0.0),
        Unary::Sigmoid => sigmoid(x),
        Unary::Tanh => x.tanh(),
        Unary::Silu => x * sigmoid(x),
        Unary::Softplus => softplus(x),
        Unary::Exp => x.exp(),
        Unary::Log => x.ln(),
        Unary::Abs => x.abs(),
        Unary::Neg => -x,
        Unary::Gelu => 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()),
    }
}

fn unary_grad(kind: Unary, x: f64, y: f64) -> f64 {
    match kind {
        Unary::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Unary::Sigmoid => y * (1.0 - y),
        Unary::Tanh => 1.0 - y * y,
        Unary::Silu => {
            let s = sigmoid(x);
            s * (1.0 + x * (1.0 - s))
        }
        Unary::Softplus => sigmoid(x),
        Unary::Exp => y,
        Unary::Log => 1.0 / x,
        Unary::Abs => {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
        Unary::Neg => -1.0,
        Unary::Gelu => {
            let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
            0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
        }
    }
}

/// Row softmax; masked (`false`) entries get probability 0 and a fully
/// masked row is all zeros.
pub fn softmax_rows(x: &Mat, mask: Option<&[bool]>) -> Mat {
    let mut out = Mat::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let row = x.row(r);
        let ok = |c: usize| mask.is_none_or(|m| m[r * x.cols() + c]);
        let mut max = f64::NEG_INFINITY;
        for (c, &v) in row.iter().enumerate() {
            if ok(c) && v > max {
                max = v;
            }
        }
        if max == f64::NEG_INFINITY {
            continue;
        }
        let mut sum = 0.0;
        let orow = out.row_mut(r);
        for (c, &v) in row.iter().enumerate() {
            if ok(c) {
                let e = (v - max).exp();
                orow[c] = e;
                sum += e;
            }
        }
        for v in orow.iter_mut() {
            *v /= sum;
        }
    }
    out
}

fn normalize_rows(x: &Mat, eps: f64) -> (Mat, Vec<f64>) {
    let (rows, cols) = x.shape();
    let mut out = Mat::zeros(rows, cols);
    let mut inv = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / cols as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let is = 1.0 / (var + eps).sqrt();
        for (o, v) in out.row_mut(r).iter_mut().zip(row) {
            *o = (v - mean) * is;
        }
        inv.push(is);
    }
    (out, inv)
}

fn normalize_rows_backward(y: &Mat, g: &Mat, inv: &[f64]) -> Mat {
    let (rows, cols) = y.shape();
    let n = cols as f64;
    let mut dx = Mat::zeros(rows, cols);
    for r in 0..rows {
        let yr = y.row(r);
        let gr = g.row(r);
        let mg = gr.iter().sum::<f64>() / n;
        let mgy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n;
        for ((d, &gv), &yv) in dx.row_mut(r).iter_mut().zip(gr).zip(yr) {
            *d = inv[r] * (gv - mg - yv * mgy);
        }
    }
    dx
}

impl<'p> Graph<'p> {
    /// `track_params`: whether trainable parameters receive gradients.
    pub fn new(store: &'p ParamStore, track_params: bool) -> Self {
        Self { store, nodes: Vec::with_capacity(1024), track_params }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value: Some(value), param: None, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Mat {
        let node = &self.nodes[v.0];
        match (&node.value, node.param) {
            (Some(m), _) => m,
            (None, Some(id)) => self.store.value(id),
            (None, None) => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "not a scalar");
        m.get(0, 0)
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Differentiable leaf that is not a parameter (for gradient checks).
    pub fn input(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let needs_grad = self.track_params && self.store.is_trainable(id);
        self.nodes.push(Node { value: None, param: Some(id), op: Op::Leaf, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.matmul_t(a, false, b, false)
    }

    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let m = if ta { av.cols() } else { av.rows() };
        let n = if tb { bv.rows() } else { bv.cols() };
        let mut out = Mat::zeros(m, n);
        gemm_into(av, ta, bv, tb, &mut out, 0.0);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::MatMul { a, b, ta, tb }, ng)
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert!(bcast_ok(av.shape(), bv.shape()), "{kind:?}: cannot broadcast {:?} to {:?}", bv.shape(), av.shape());
        let out = match kind {
            Binary::Add => bmap(av, bv, |x, y| x + y),
            Binary::Sub => bmap(av, bv, |x, y| x - y),
            Binary::Mul => bmap(av, bv, |x, y| x * y),
            Binary::Div => bmap(av, bv, |x, y| x / y),
        };
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Binary { kind, a, b }, ng)
    }

    /// `a + b`, with `b` broadcast over rows and/or columns of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Div, a, b)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|v| v * s);
        let ng = self.ng(a);
        self.push(out, Op::Scale { a, s }, ng)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|v| v + s);
        let ng = self.ng(a);
        self.push(out, Op::AddScalar { a }, ng)
    }

    pub fn unary(&mut self, kind: Unary, a: Var) -> Var {
        let out = self.value(a).map(|v| apply_unary(kind, v));
        let ng = self.ng(a);
        self.push(out, Op::Unary { kind, a }, ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Unary::Relu, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Unary::Tanh, a)
    }

    pub fn silu(&mut self, a: Var) -> Var {
        self.unary(Unary::Silu, a)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(Unary::Softplus, a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Unary::Exp, a)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(Unary::Log, a)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(Unary::Abs, a)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(Unary::Neg, a)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        self.unary(Unary::Gelu, a)
    }

    /// Row-wise softmax. `mask` (row-major, same shape) marks allowed entries.
    pub fn softmax_rows(&mut self, a: Var, mask: Option<&[bool]>) -> Var {
        let out = softmax_rows(self.value(a), mask);
        let ng = self.ng(a);
        self.push(out, Op::Softmax { a }, ng)
    }

    /// Zero mean, unit variance per row (biased variance).
    pub fn normalize_rows(&mut self, a: Var, eps: f64) -> Var {
        let (out, inv_std) = normalize_rows(self.value(a), eps);
        let ng = self.ng(a);
        self.push(out, Op::NormRows { a, inv_std }, ng)
    }

    /// Zero mean, unit variance per column, statistics taken over rows.
    pub fn normalize_cols(&mut self, a: Var, eps: f64) -> Var {
        let (t, inv_std) = normalize_rows(&self.value(a).transpose(), eps);
        let ng = self.ng(a);
        self.push(t.transpose(), Op::NormCols { a, inv_std }, ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Mat::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.rows(), rows, "concat_cols row mismatch");
            for r in 0..rows {
                out.row_mut(r)[off..off + v.cols()].copy_from_slice(v.row(r));
            }
            off += v.cols();
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(out, Op::ConcatCols { parts: parts.to_vec() }, ng)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let mats: Vec<&Mat> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Mat::vstack(&mats);
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(out, Op::ConcatRows { parts: parts.to_vec() }, ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a);
        assert!(start + len <= v.cols(), "slice_cols out of range");
        let out = Mat::from_fn(v.rows(), len, |r, c| v.get(r, start + c));
        let ng = self.ng(a);
        self.push(out, Op::SliceCols { a, start }, ng)
    }

    /// Rows of `a` in the order of `idx` (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let out = self.value(a).select_rows(idx);
        let ng = self.ng(a);
        self.push(out, Op::GatherRows { a, idx: idx.to_vec() }, ng)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let idx: Vec<usize> = (start..start + len).collect();
        self.gather_rows(a, &idx)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let ng = self.ng(a);
        self.push(out, Op::Transpose { a }, ng)
    }

    /// Row-major reinterpretation.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let out = self.value(a).clone().reshaped(rows, cols);
        let ng = self.ng(a);
        self.push(out, Op::Reshape { a }, ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Mat::scalar(self.value(a).sum());
        let ng = self.ng(a);
        self.push(out, Op::Sum { a }, ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Gradient passes only where `lo <= x <= hi`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).map(|v| v.clamp(lo, hi));
        let ng = self.ng(a);
        self.push(out, Op::Clamp { a, lo, hi }, ng)
    }

    /// Records an externally computed `value = op(inputs)`.
    pub fn custom(&mut self, op: Box<dyn CustomOp>, inputs: &[Var], value: Mat) -> Var {
        let ng = inputs.iter().any(|&p| self.ng(p));
        self.push(value, Op::Custom { op, inputs: inputs.to_vec() }, ng)
    }

    /// Gradients of the scalar `loss` with respect to every differentiable leaf.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).shape(), (1, 1), "backward needs a scalar loss");
        let n = self.nodes.len();
        let mut grads: Vec<Option<Mat>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(Mat::scalar(1.0));
        let mut leaves: Vec<Option<Mat>> = (0..n).map(|_| None).collect();
        let mut params = Vec::new();

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let y = self.value(Var(i));
            macro_rules! acc {
                ($v:expr, $m:expr) => {{
                    let v: Var = $v;
                    if self.nodes[v.0].needs_grad {
                        let m: Mat = $m;
                        match &mut grads[v.0] {
                            Some(acc) => acc.add_assign(&m),
                            slot @ None => *slot = Some(m),
                        }
                    }
                }};
            }
            match &node.op {
                Op::Leaf => {
                    if let Some(id) = node.param {
                        params.push((id, i));
                    }
                    leaves[i] = Some(g);
                }
                &Op::MatMul { a, b, ta, tb } => {
                    let (av, bv) = (self.value(a), self.value(b));
                    if self.ng(a) {
                        let mut da = Mat::zeros(av.rows(), av.cols());
                        if ta {
                            gemm_into(bv, tb, &g, true, &mut da, 0.0);
                        } else {
                            gemm_into(&g, false, bv, !tb, &mut da, 0.0);
                        }
                        acc!(a, da);
                    }
                    if self.ng(b) {
                        let mut db = Mat::zeros(bv.rows(), bv.cols());
                        if tb {
                            gemm_into(&g, true, av, ta, &mut db, 0.0);
                        } else {
                            gemm_into(av, !ta, &g, false, &mut db, 0.0);
                        }
                        acc!(b, db);
                    }
                }
                &Op::Binary { kind, a, b } => {
                    let (av, bv) = (self.value(a), self.value(b));
                    if self.ng(a) {
                        let da = match kind {
                            Binary::Add | Binary::Sub => g.clone(),
                            Binary::Mul => bmap(&g, bv, |x, y| x * y),
                            Binary::Div => bmap(&g, bv, |x, y| x / y),
                        };
                        acc!(a, da);
                    }
                    if self.ng(b) {
                        let full = match kind {
                            Binary::Add => g.clone(),
                            Binary::Sub => g.map(|v| -v),
                            Binary::Mul => g.zip_map(av, |x, y| x * y),
                            Binary::Div => bmap(&g.zip_map(av, |x, y| x * y), bv, |t, y| -t / (y * y)),
                        };
                        acc!(b, reduce_to(&full, bv.shape()));
                    }
                }
                &Op::Scale { a, s } => acc!(a, g.map(|v| v * s)),
                &Op::AddScalar { a } => acc!(a, g.clone()),
                &Op::Unary { kind, a } => {
                    let x = self.value(a);
                    let mut d = Mat::zeros(g.rows(), g.cols());
                    for (((o, &gv), &xv), &yv) in d.data_mut().iter_mut().zip(g.data()).zip(x.data()).zip(y.data()) {
                        *o = gv * unary_grad(kind, xv, yv);
                    }
                    acc!(a, d);
                }
                &Op::Softmax { a } => {
                    let mut d = Mat::zeros(g.rows(), g.cols());
                    for r in 0..g.rows() {
                        let (pr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = pr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for ((o, &p), &q) in d.row_mut(r).iter_mut().zip(pr).zip(gr) {
                            *o = p * (q - dot);
                        }
                    }
                    acc!(a, d);
                }
                Op::NormRows { a, inv_std } => acc!(*a, normalize_rows_backward(y, &g, inv_std)),
                Op::NormCols { a, inv_std } => {
                    let d = normalize_rows_backward(&y.transpose(), &g.transpose(), inv_std);
                    acc!(*a, d.transpose());
                }
                Op::ConcatCols { parts } => {
                    let mut off = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        if self.ng(p) {
                            acc!(p, Mat::from_fn(g.rows(), w, |r, c| g.get(r, off + c)));
                        }
                        off += w;
                    }
                }
                Op::ConcatRows { parts } => {
                    let mut off = 0;
                    for &p in parts {
                        let h = self.value(p).rows();
                        if self.ng(p) {
                            acc!(p, Mat::from_fn(h, g.cols(), |r, c| g.get(off + r, c)));
                        }
                        off += h;
                    }
                }
                &Op::SliceCols { a, start } => {
                    let av = self.value(a);
                    let mut d = Mat::zeros(av.rows(), av.cols());
                    for r in 0..g.rows() {
                        d.row_mut(r)[start..start + g.cols()].copy_from_slice(g.row(r));
                    }
                    acc!(a, d);
                }
                Op::GatherRows { a, idx } => {
                    let av = self.value(*a);
                    let mut d = Mat::zeros(av.rows(), av.cols());
                    for (i, &r) in idx.iter().enumerate() {
                        for (o, v) in d.row_mut(r).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    acc!(*a, d);
                }
                &Op::Transpose { a } => acc!(a, g.transpose()),
                &Op::Reshape { a } => {
                    let (r, c) = self.value(a).shape();
                    acc!(a, g.clone().reshaped(r, c));
                }
                &Op::Sum { a } => {
                    let (r, c) = self.value(a).shape();
                    acc!(a, Mat::filled(r, c, g.get(0, 0)));
                }
                &Op::Clamp { a, lo, hi } => {
                    let x = self.value(a);
                    acc!(a, g.zip_map(x, |gv, xv| if xv >= lo && xv <= hi { gv } else { 0.0 }));
                }
                Op::Custom { op, inputs } => {
                    let ins: Vec<&Mat> = inputs.iter().map(|&v| self.value(v)).collect();
                    let outs = op.backward(&ins, y, &g);
                    assert_eq!(outs.len(), inputs.len(), "{}: wrong gradient count", op.name());
                    for (&v, d) in inputs.iter().zip(outs) {
                        if let Some(d) = d {
                            assert_eq!(d.shape(), self.value(v).shape(), "{}: gradient shape", op.name());
                            acc!(v, d);
                        }
                    }
                }
            }
        }
        Gradients { leaves, params }
    }
}

/// Shared boolean mask for attention-style ops.
pub type Mask = Rc<[bool]>;

#[cfg(test)]
mod tests {
    use super::*;

    /// Central finite differences of `f` around `x`.
    fn numeric_grad(x: &Mat, f: &dyn Fn(&Mat) -> f64) -> Mat {
        let h = 1e-6;
        let mut out = Mat::zeros(x.rows(), x.cols());
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            out.data_mut()[i] = (f(&xp) - f(&xm)) / (2.0 * h);
        }
        out
    }

    fn check(build: &dyn Fn(&mut Graph, Var) -> Var, x: Mat) {
        let store = ParamStore::new();
        let f = |m: &Mat| {
            let mut g = Graph::new(&store, false);
            let v = g.input(m.clone());
            let out = build(&mut g, v);
            let s = g.sum(out);
            g.scalar(s)
        };
        let mut g = Graph::new(&store, false);
        let v = g.input(x.clone());
        let out = build(&mut g, v);
        let s = g.sum(out);
        let grads = g.backward(s);
        let analytic = grads.wrt(v).unwrap();
        let numeric = numeric_grad(&x, &f);
        let err = analytic.max_abs_diff(&numeric);
        assert!(err < 1e-6, "gradient mismatch {err}: {analytic:?} vs {numeric:?}");
    }

    fn sample(rows: usize, cols: usize) -> Mat {
        Mat::from_fn(rows, cols, |r, c| ((r * 31 + c * 17) % 11) as f64 * 0.2 - 1.05)
    }

    #[test]
    fn unary_gradients() {
        for kind in [Unary::Relu, Unary::Sigmoid, Unary::Tanh, Unary::Silu, Unary::Softplus, Unary::Exp, Unary::Abs, Unary::Neg, Unary::Gelu] {
            check(&|g, v| g.unary(kind, v), sample(3, 4));
        }
        check(&|g, v| g.log(v), sample(3, 4).map(|v| v.abs() + 0.5));
    }

    #[test]
    fn matmul_gradients_all_transposes() {
        let w = sample(4, 5).map(|v| v * 0.7 + 0.1);
        for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
            let wv = w.clone();
            let x = if ta { sample(4, 3) } else { sample(3, 4) };
            check(
                &move |g, v| {
                    let wm = if tb { wv.transpose() } else { wv.clone() };
                    let c = g.constant(wm);
                    let y = g.matmul_t(v, ta, c, tb);
                    g.mul(y, y)
                },
                x,
            );
        }
    }

    #[test]
    fn broadcast_gradients() {
        for shape in [(3, 4), (1, 4), (3, 1), (1, 1)] {
            let bm = sample(shape.0, shape.1).map(|v| v + 2.5);
            let a = sample(3, 4);
            check(&|g, v| { let c = g.constant(a.clone()); let t = g.mul(c, v); g.div(t, v) }, bm.clone());
            check(&|g, v| { let c = g.constant(a.clone()); let t = g.sub(c, v); let u = g.mul(t, t); g.add(u, v) }, bm.clone());
        }
    }

    #[test]
    fn softmax_and_norm_gradients() {
        let weights = sample(3, 5).map(|v| v * 1.3 + 0.2);
        let w2 = weights.clone();
        check(&move |g, v| { let s = g.softmax_rows(v, None); let c = g.constant(w2.clone()); g.mul(s, c) }, sample(3, 5));
        let mask: Vec<bool> = (0..15).map(|i| i % 4 != 1).collect();
        let w3 = weights.clone();
        check(&move |g, v| { let s = g.softmax_rows(v, Some(&mask)); let c = g.constant(w3.clone()); g.mul(s, c) }, sample(3, 5));
        let w4 = weights.clone();
        check(&move |g, v| { let s = g.normalize_rows(v, 1e-5); let c = g.constant(w4.clone()); g.mul(s, c) }, sample(3, 5));
        let w5 = weights;
        check(&move |g, v| { let s = g.normalize_cols(v, 1e-5); let c = g.constant(w5.clone()); g.mul(s, c) }, sample(3, 5));
    }

    #[test]
    fn structural_gradients() {
        check(
            &|g, v| {
                let a = g.slice_cols(v, 1, 2);
                let b = g.gather_rows(v, &[2, 0, 2]);
                let bt = g.transpose(b);
                let r = g.reshape(bt, 3, 4);
                let c = g.concat_cols(&[a, r]);
                let d = g.concat_rows(&[c, c]);
                let e = g.clamp(d, -0.5, 0.5);
                g.mul(e, d)
            },
            sample(3, 4),
        );
    }

    #[test]
    fn fully_masked_softmax_row_is_zero() {
        let x = sample(2, 3);
        let mask = [false, false, false, true, false, true];
        let p = softmax_rows(&x, Some(&mask));
        assert_eq!(p.row(0), &[0.0, 0.0, 0.0]);
        assert!((p.row(1).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(p.get(1, 1), 0.0);
    }

    #[test]
    fn repeated_param_reads_sum_their_gradients() {
        let mut store = ParamStore::new();
        let w = store.add("w", Mat::from_rows(&[vec![3.0]]), super::super::ParamGroup::Task);
        let mut g = Graph::new(&store, true);
        let a = g.param(w);
        let b = g.param(w);
        let y = g.mul(a, b);
        let grads = g.backward(y);
        assert_eq!(grads.param_grad(w).unwrap().data(), &[6.0]);
        let mut acc = Grads::new(&store);
        grads.accumulate_into(&mut acc);
        assert_eq!(acc.get(w).unwrap().data(), &[6.0]);
    }

    #[test]
    fn frozen_params_get_no_gradient() {
        let mut store = ParamStore::new();
        let frozen = store.add("w", Mat::identity(2), super::super::ParamGroup::Backbone);
        let live = store.add("b", Mat::zeros(1, 2), super::super::ParamGroup::Task);
        let mut g = Graph::new(&store, true);
        let x = g.constant(Mat::from_rows(&[vec![1.0, 2.0]]));
        let w = g.param(frozen);
        let b = g.param(live);
        let y = g.matmul(x, w);
        let y = g.add(y, b);
        let s = g.sum(y);
        let grads = g.backward(s);
        assert!(grads.param_grad(frozen).is_none());
        assert_eq!(grads.param_grad(live).unwrap().data(), &[1.0, 1.0]);
    }
}
