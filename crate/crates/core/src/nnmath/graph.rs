//! Reverse-mode tape over a small primitive set.
//!
//! A [`Graph`] borrows a read-only [`ParamStore`], records every forward
//! operation with its value, and on [`Graph::backward`] accumulates
//! parameter gradients into a caller-owned [`Gradients`] buffer. Graphs are
//! append-only, so node ids stay valid for the life of the graph and can be
//! shared between beam hypotheses.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

use super::tensor::{axpy, dot, Gradients, ParamId, ParamStore, Shape};
use super::TensorError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op<F> {
    Input,
    Param(ParamId),
    MatVec(NodeId, NodeId),
    MatMulNt(NodeId, NodeId),
    MatTVec(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRows(NodeId, NodeId),
    Concat(Vec<NodeId>),
    Stack(Vec<NodeId>),
    Row(NodeId, usize),
    Slice(NodeId, usize),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Affine(NodeId, F),
    Softmax(NodeId),
    CrossEntropy(NodeId, usize),
    L2Norm(NodeId),
    Sum(Vec<NodeId>),
    Dropout(NodeId, Vec<F>),
}

#[derive(Debug, Clone)]
struct Node<F> {
    op: Op<F>,
    shape: Shape,
    value: Vec<F>,
    needs_grad: bool,
}

pub struct Graph<'p, F: Scalar> {
    params: &'p ParamStore<F>,
    nodes: Vec<Node<F>>,
    param_nodes: Vec<Option<NodeId>>,
    training: bool,
    rng: ChaCha8Rng,
}

impl<'p, F: Scalar> Graph<'p, F> {
    /// Evaluation-mode graph: dropout is the identity.
    pub fn new(params: &'p ParamStore<F>) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
            training: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    /// Training-mode graph with a seeded dropout stream.
    pub fn training(params: &'p ParamStore<F>, seed: u64) -> Self {
        Graph {
            training: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
            ..Graph::new(params)
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn params(&self) -> &'p ParamStore<F> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id.0].shape
    }

    pub fn value(&self, id: NodeId) -> &[F] {
        let node = &self.nodes[id.0];
        match node.op {
            Op::Param(pid) => &self.params.get(pid).values,
            _ => &node.value,
        }
    }

    /// Scalar value of a `1x1` node.
    pub fn scalar(&self, id: NodeId) -> F {
        self.value(id)[0]
    }

    fn push(&mut self, op: Op<F>, shape: Shape, value: Vec<F>) -> NodeId {
        debug_assert!(matches!(op, Op::Param(_)) || shape.len() == value.len());
        let needs_grad = match &op {
            Op::Input => false,
            Op::Param(_) => true,
            Op::MatVec(a, b)
            | Op::MatMulNt(a, b)
            | Op::MatTVec(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRows(a, b) => self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad,
            Op::Concat(xs) | Op::Stack(xs) | Op::Sum(xs) => xs.iter().any(|x| self.nodes[x.0].needs_grad),
            Op::Row(a, _)
            | Op::Slice(a, _)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Affine(a, _)
            | Op::Softmax(a)
            | Op::CrossEntropy(a, _)
            | Op::L2Norm(a)
            | Op::Dropout(a, _) => self.nodes[a.0].needs_grad,
        };
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            op,
            shape,
            value,
            needs_grad,
        });
        id
    }

    fn mismatch(op: &'static str, a: Shape, b: Shape) -> TensorError {
        TensorError::ShapeMismatch { op, left: a, right: b }
    }

    pub fn input(&mut self, shape: Shape, values: Vec<F>) -> Result<NodeId, TensorError> {
        if shape.len() != values.len() {
            return Err(TensorError::ValueCount {
                shape,
                got: values.len(),
            });
        }
        Ok(self.push(Op::Input, shape, values))
    }

    pub fn zeros(&mut self, n: usize) -> NodeId {
        self.push(Op::Input, Shape::vector(n), vec![F::zero(); n])
    }

    /// Node for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, pid: ParamId) -> NodeId {
        if let Some(id) = self.param_nodes[pid.0] {
            return id;
        }
        let shape = self.params.get(pid).shape;
        let id = self.push(Op::Param(pid), shape, Vec::new());
        self.param_nodes[pid.0] = Some(id);
        id
    }

    /// `W x` for `W: r x c`, `x: c`.
    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> Result<NodeId, TensorError> {
        let (ws, xs) = (self.shape(w), self.shape(x));
        if !xs.is_vector() || ws.cols != xs.rows {
            return Err(Self::mismatch("matvec", ws, xs));
        }
        let wv = self.value(w);
        let xv = self.value(x);
        let out: Vec<F> = (0..ws.rows)
            .map(|i| dot(&wv[i * ws.cols..(i + 1) * ws.cols], xv))
            .collect();
        Ok(self.push(Op::MatVec(w, x), Shape::vector(ws.rows), out))
    }

    /// `A W^T` for `A: n x k`, `W: m x k`.
    pub fn matmul_nt(&mut self, a: NodeId, w: NodeId) -> Result<NodeId, TensorError> {
        let (as_, ws) = (self.shape(a), self.shape(w));
        if as_.cols != ws.cols {
            return Err(Self::mismatch("matmul_nt", as_, ws));
        }
        let (n, k, m) = (as_.rows, as_.cols, ws.rows);
        let av = self.value(a);
        let wv = self.value(w);
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            let ai = &av[i * k..(i + 1) * k];
            for j in 0..m {
                out.push(dot(ai, &wv[j * k..(j + 1) * k]));
            }
        }
        Ok(self.push(Op::MatMulNt(a, w), Shape::matrix(n, m), out))
    }

    /// `M^T a` for `M: n x d`, `a: n`.
    pub fn mat_t_vec(&mut self, m: NodeId, a: NodeId) -> Result<NodeId, TensorError> {
        let (ms, as_) = (self.shape(m), self.shape(a));
        if !as_.is_vector() || ms.rows != as_.rows {
            return Err(Self::mismatch("mat_t_vec", ms, as_));
        }
        let mv = self.value(m);
        let av = self.value(a);
        let mut out = vec![F::zero(); ms.cols];
        for i in 0..ms.rows {
            axpy(av[i], &mv[i * ms.cols..(i + 1) * ms.cols], &mut out);
        }
        Ok(self.push(Op::MatTVec(m, a), Shape::vector(ms.cols), out))
    }

    fn elementwise(
        &mut self,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(F, F) -> F,
        op: Op<F>,
    ) -> Result<NodeId, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Self::mismatch(name, sa, sb));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(self.push(op, sa, out))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.elementwise("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.elementwise("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.elementwise("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds vector `v` to every row of `m`.
    pub fn add_rows(&mut self, m: NodeId, v: NodeId) -> Result<NodeId, TensorError> {
        let (ms, vs) = (self.shape(m), self.shape(v));
        if !vs.is_vector() || vs.rows != ms.cols {
            return Err(Self::mismatch("add_rows", ms, vs));
        }
        let vv = self.value(v);
        let out = self
            .value(m)
            .chunks_exact(ms.cols.max(1))
            .flat_map(|row| row.iter().zip(vv).map(|(&a, &b)| a + b))
            .collect();
        Ok(self.push(Op::AddRows(m, v), ms, out))
    }

    /// Linear layer `W x + b`.
    pub fn linear(&mut self, w: ParamId, b: Option<ParamId>, x: NodeId) -> Result<NodeId, TensorError> {
        let wn = self.param(w);
        let y = self.matvec(wn, x)?;
        match b {
            Some(b) => {
                let bn = self.param(b);
                self.add(y, bn)
            }
            None => Ok(y),
        }
    }

    pub fn concat(&mut self, xs: &[NodeId]) -> Result<NodeId, TensorError> {
        let mut out = Vec::new();
        for &x in xs {
            let s = self.shape(x);
            if !s.is_vector() {
                return Err(Self::mismatch("concat", s, Shape::vector(s.rows)));
            }
            out.extend_from_slice(self.value(x));
        }
        let n = out.len();
        Ok(self.push(Op::Concat(xs.to_vec()), Shape::vector(n), out))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[NodeId]) -> Result<NodeId, TensorError> {
        let first = rows.first().ok_or(TensorError::Empty("stack"))?;
        let width = self.shape(*first);
        let mut out = Vec::with_capacity(rows.len() * width.rows);
        for &r in rows {
            let s = self.shape(r);
            if s != width || !s.is_vector() {
                return Err(Self::mismatch("stack", width, s));
            }
            out.extend_from_slice(self.value(r));
        }
        Ok(self.push(Op::Stack(rows.to_vec()), Shape::matrix(rows.len(), width.rows), out))
    }

    /// Row `i` of a matrix as a vector.
    pub fn row(&mut self, m: NodeId, i: usize) -> Result<NodeId, TensorError> {
        let s = self.shape(m);
        if i >= s.rows {
            return Err(TensorError::IndexOutOfRange { index: i, len: s.rows });
        }
        let out = self.value(m)[i * s.cols..(i + 1) * s.cols].to_vec();
        Ok(self.push(Op::Row(m, i), Shape::vector(s.cols), out))
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId, TensorError> {
        let s = self.shape(x);
        if !s.is_vector() || start + len > s.rows {
            return Err(TensorError::IndexOutOfRange {
                index: start + len,
                len: s.rows,
            });
        }
        let out = self.value(x)[start..start + len].to_vec();
        Ok(self.push(Op::Slice(x, start), Shape::vector(len), out))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let out = self.value(x).iter().map(|&v| sigmoid(v)).collect();
        self.push(Op::Sigmoid(x), self.shape(x), out)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let out = self.value(x).iter().map(|v| v.tanh()).collect();
        self.push(Op::Tanh(x), self.shape(x), out)
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, x: NodeId, scale: F, shift: F) -> NodeId {
        let out = self.value(x).iter().map(|&v| scale * v + shift).collect();
        self.push(Op::Affine(x, scale), self.shape(x), out)
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let s = self.shape(x);
        if !s.is_vector() || s.rows == 0 {
            return Err(TensorError::Empty("softmax"));
        }
        let out = softmax(self.value(x));
        Ok(self.push(Op::Softmax(x), s, out))
    }

    /// `-log softmax(logits)[target]` as a scalar.
    pub fn cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId, TensorError> {
        let s = self.shape(logits);
        if !s.is_vector() || target >= s.rows {
            return Err(TensorError::IndexOutOfRange {
                index: target,
                len: s.rows,
            });
        }
        let v = self.value(logits);
        let loss = log_sum_exp(v) - v[target];
        Ok(self.push(Op::CrossEntropy(logits, target), Shape::scalar(), vec![loss]))
    }

    /// Euclidean norm as a scalar.
    pub fn l2_norm(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).iter().map(|&v| v * v).sum::<F>().sqrt();
        self.push(Op::L2Norm(x), Shape::scalar(), vec![n])
    }

    /// Elementwise sum of equally shaped nodes.
    pub fn sum(&mut self, xs: &[NodeId]) -> Result<NodeId, TensorError> {
        let first = xs.first().ok_or(TensorError::Empty("sum"))?;
        let shape = self.shape(*first);
        let mut out = vec![F::zero(); shape.len()];
        for &x in xs {
            if self.shape(x) != shape {
                return Err(Self::mismatch("sum", shape, self.shape(x)));
            }
            axpy(F::one(), self.value(x), &mut out);
        }
        Ok(self.push(Op::Sum(xs.to_vec()), shape, out))
    }

    pub fn mean(&mut self, xs: &[NodeId]) -> Result<NodeId, TensorError> {
        let s = self.sum(xs)?;
        let n = F::from_usize(xs.len()).unwrap_or_else(F::one);
        Ok(self.affine(s, F::one() / n, F::zero()))
    }

    /// Inverted dropout; identity outside training mode or when `p == 0`.
    pub fn dropout(&mut self, x: NodeId, p: f64) -> NodeId {
        if !self.training || p <= 0.0 {
            return x;
        }
        let keep = 1.0 - p;
        let scale = F::from_f64_lossy(1.0 / keep);
        let n = self.shape(x).len();
        let mask: Vec<F> = (0..n)
            .map(|_| if self.rng.gen::<f64>() < keep { scale } else { F::zero() })
            .collect();
        let out = self.value(x).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        self.push(Op::Dropout(x, mask), self.shape(x), out)
    }

    /// Back-propagates from a scalar node, adding parameter gradients into `grads`.
    pub fn backward(&self, loss: NodeId, grads: &mut Gradients<F>) -> Result<(), TensorError> {
        let ls = self.shape(loss);
        if ls != Shape::scalar() {
            return Err(TensorError::NotScalar(ls));
        }
        let mut g: Vec<Option<Vec<F>>> = vec![None; loss.0 + 1];
        g[loss.0] = Some(vec![F::one()]);
        for idx in (0..=loss.0).rev() {
            let Some(dy) = g[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Input => {}
                Op::Param(pid) => axpy(F::one(), &dy, &mut grads.values[pid.index()]),
                Op::MatVec(w, x) => {
                    let ws = self.shape(*w);
                    let (wv, xv) = (self.value(*w), self.value(*x));
                    if self.nodes[w.0].needs_grad {
                        let gw = slot(&mut g, *w, ws.len());
                        for i in 0..ws.rows {
                            axpy(dy[i], xv, &mut gw[i * ws.cols..(i + 1) * ws.cols]);
                        }
                    }
                    if self.nodes[x.0].needs_grad {
                        let gx = slot(&mut g, *x, ws.cols);
                        for i in 0..ws.rows {
                            axpy(dy[i], &wv[i * ws.cols..(i + 1) * ws.cols], gx);
                        }
                    }
                }
                Op::MatMulNt(a, w) => {
                    let (as_, ws) = (self.shape(*a), self.shape(*w));
                    let (n, k, m) = (as_.rows, as_.cols, ws.rows);
                    let (av, wv) = (self.value(*a), self.value(*w));
                    if self.nodes[a.0].needs_grad {
                        let ga = slot(&mut g, *a, n * k);
                        for i in 0..n {
                            for j in 0..m {
                                axpy(dy[i * m + j], &wv[j * k..(j + 1) * k], &mut ga[i * k..(i + 1) * k]);
                            }
                        }
                    }
                    if self.nodes[w.0].needs_grad {
                        let gw = slot(&mut g, *w, m * k);
                        for i in 0..n {
                            for j in 0..m {
                                axpy(dy[i * m + j], &av[i * k..(i + 1) * k], &mut gw[j * k..(j + 1) * k]);
                            }
                        }
                    }
                }
                Op::MatTVec(mx, a) => {
                    let ms = self.shape(*mx);
                    let (mv, av) = (self.value(*mx), self.value(*a));
                    if self.nodes[mx.0].needs_grad {
                        let gm = slot(&mut g, *mx, ms.len());
                        for i in 0..ms.rows {
                            axpy(av[i], &dy, &mut gm[i * ms.cols..(i + 1) * ms.cols]);
                        }
                    }
                    if self.nodes[a.0].needs_grad {
                        let ga = slot(&mut g, *a, ms.rows);
                        for i in 0..ms.rows {
                            ga[i] += dot(&mv[i * ms.cols..(i + 1) * ms.cols], &dy);
                        }
                    }
                }
                Op::Add(a, b) => {
                    self.acc(&mut g, *a, F::one(), &dy);
                    self.acc(&mut g, *b, F::one(), &dy);
                }
                Op::Sub(a, b) => {
                    self.acc(&mut g, *a, F::one(), &dy);
                    self.acc(&mut g, *b, -F::one(), &dy);
                }
                Op::Mul(a, b) => {
                    if self.nodes[a.0].needs_grad {
                        let bv = self.value(*b);
                        let ga = slot(&mut g, *a, dy.len());
                        for i in 0..dy.len() {
                            ga[i] += dy[i] * bv[i];
                        }
                    }
                    if self.nodes[b.0].needs_grad {
                        let av = self.value(*a);
                        let gb = slot(&mut g, *b, dy.len());
                        for i in 0..dy.len() {
                            gb[i] += dy[i] * av[i];
                        }
                    }
                }
                Op::AddRows(mx, v) => {
                    self.acc(&mut g, *mx, F::one(), &dy);
                    if self.nodes[v.0].needs_grad {
                        let cols = node.shape.cols;
                        let gv = slot(&mut g, *v, cols);
                        for row in dy.chunks_exact(cols.max(1)) {
                            axpy(F::one(), row, gv);
                        }
                    }
                }
                Op::Concat(xs) | Op::Stack(xs) => {
                    let mut off = 0;
                    for &x in xs {
                        let n = self.shape(x).len();
                        self.acc(&mut g, x, F::one(), &dy[off..off + n]);
                        off += n;
                    }
                }
                Op::Row(mx, i) => {
                    if self.nodes[mx.0].needs_grad {
                        let ms = self.shape(*mx);
                        let gm = slot(&mut g, *mx, ms.len());
                        axpy(F::one(), &dy, &mut gm[i * ms.cols..(i + 1) * ms.cols]);
                    }
                }
                Op::Slice(x, start) => {
                    if self.nodes[x.0].needs_grad {
                        let n = self.shape(*x).len();
                        let gx = slot(&mut g, *x, n);
                        axpy(F::one(), &dy, &mut gx[*start..*start + dy.len()]);
                    }
                }
                Op::Sigmoid(x) => {
                    let y = &node.value;
                    let d: Vec<F> = dy.iter().zip(y).map(|(&d, &y)| d * y * (F::one() - y)).collect();
                    self.acc(&mut g, *x, F::one(), &d);
                }
                Op::Tanh(x) => {
                    let y = &node.value;
                    let d: Vec<F> = dy.iter().zip(y).map(|(&d, &y)| d * (F::one() - y * y)).collect();
                    self.acc(&mut g, *x, F::one(), &d);
                }
                Op::Affine(x, scale) => self.acc(&mut g, *x, *scale, &dy),
                Op::Softmax(x) => {
                    let y = &node.value;
                    let s = dot(&dy, y);
                    let d: Vec<F> = dy.iter().zip(y).map(|(&d, &y)| y * (d - s)).collect();
                    self.acc(&mut g, *x, F::one(), &d);
                }
                Op::CrossEntropy(x, t) => {
                    let mut p = softmax(self.value(*x));
                    p[*t] -= F::one();
                    self.acc(&mut g, *x, dy[0], &p);
                }
                Op::L2Norm(x) => {
                    let n = node.value[0];
                    if n > F::zero() {
                        let xv = self.value(*x);
                        self.acc(&mut g, *x, dy[0] / n, xv);
                    }
                }
                Op::Sum(xs) => {
                    for &x in xs {
                        self.acc(&mut g, x, F::one(), &dy);
                    }
                }
                Op::Dropout(x, mask) => {
                    let d: Vec<F> = dy.iter().zip(mask).map(|(&d, &m)| d * m).collect();
                    self.acc(&mut g, *x, F::one(), &d);
                }
            }
        }
        Ok(())
    }

    fn acc(&self, g: &mut [Option<Vec<F>>], id: NodeId, alpha: F, d: &[F]) {
        if self.nodes[id.0].needs_grad {
            axpy(alpha, d, slot(g, id, d.len()));
        }
    }
}

fn slot<F: Scalar>(g: &mut [Option<Vec<F>>], id: NodeId, len: usize) -> &mut Vec<F> {
    g[id.0].get_or_insert_with(|| vec![F::zero(); len])
}

#[inline]
pub fn sigmoid<F: Scalar>(v: F) -> F {
    if v >= F::zero() {
        F::one() / (F::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (F::one() + e)
    }
}

pub fn log_sum_exp<F: Scalar>(v: &[F]) -> F {
    let m = v.iter().copied().fold(F::neg_infinity(), F::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<F>().ln()
}

pub fn softmax<F: Scalar>(v: &[F]) -> Vec<F> {
    let m = v.iter().copied().fold(F::neg_infinity(), F::max);
    let e: Vec<F> = v.iter().map(|&x| (x - m).exp()).collect();
    let s: F = e.iter().copied().sum();
    e.into_iter().map(|x| x / s).collect()
}
