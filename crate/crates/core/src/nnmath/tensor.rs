use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Row-major 2-D shape; vectors are `n x 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub const fn vector(n: usize) -> Self {
        Shape { rows: n, cols: 1 }
    }

    pub const fn matrix(rows: usize, cols: usize) -> Self {
        Shape { rows, cols }
    }

    pub const fn scalar() -> Self {
        Shape { rows: 1, cols: 1 }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_vector(&self) -> bool {
        self.cols == 1
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}x{}]", self.rows, self.cols)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    pub shape: Shape,
    pub values: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            values: vec![F::zero(); shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, values: Vec<F>) -> Self {
        assert_eq!(shape.len(), values.len(), "tensor value count does not match {shape}");
        Tensor { shape, values }
    }

    pub fn row(&self, i: usize) -> &[F] {
        let c = self.shape.cols;
        &self.values[i * c..(i + 1) * c]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Parameter initialisation scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    FanIn(usize),
}

/// Named trainable tensors in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<F> {
    names: Vec<String>,
    tensors: Vec<Tensor<F>>,
    index: HashMap<String, ParamId>,
}

impl<F: Scalar> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: &str, shape: Shape, init: Init, rng: &mut impl Rng) -> ParamId {
        let values = match init {
            Init::Zeros => vec![F::zero(); shape.len()],
            Init::FanIn(fan_in) => {
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                (0..shape.len())
                    .map(|_| F::from_f64_lossy(rng.gen_range(-bound..bound)))
                    .collect()
            }
        };
        self.insert(name, Tensor::from_vec(shape, values))
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor<F>) -> ParamId {
        assert!(!self.index.contains_key(name), "duplicate parameter `{name}`");
        let id = ParamId(self.tensors.len());
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.tensors[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<F>)> {
        self.tensors
            .iter()
            .enumerate()
            .map(|(i, t)| (ParamId(i), self.names[i].as_str(), t))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.values.len()).sum()
    }
}

/// Gradient buffers shaped like a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub values: Vec<Vec<F>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn zeros_like(store: &ParamStore<F>) -> Self {
        Gradients {
            values: store.tensors.iter().map(|t| vec![F::zero(); t.values.len()]).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &[F] {
        &self.values[id.0]
    }

    pub fn clear(&mut self) {
        for v in &mut self.values {
            v.iter_mut().for_each(|x| *x = F::zero());
        }
    }

    pub fn scale(&mut self, s: F) {
        for v in &mut self.values {
            v.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn add_assign(&mut self, other: &Gradients<F>) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            axpy(F::one(), b, a);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

#[inline]
pub(crate) fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [F::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += *x * *y;
    }
    s
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy<F: Scalar>(alpha: F, x: &[F], y: &mut [F]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}
