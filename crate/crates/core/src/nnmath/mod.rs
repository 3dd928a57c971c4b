//! Dense tensors, a reverse-mode tape, Adam and the checkpoint container.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod graph;
mod tensor;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, read_checkpoint_header, save_checkpoint};
pub use graph::{log_sum_exp, sigmoid, softmax, Graph, NodeId};
pub use tensor::{Gradients, Init, ParamId, ParamStore, Shape, Tensor};

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {left} and {right}")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },
    #[error("{got} values do not fill shape {shape}")]
    ValueCount { shape: Shape, got: usize },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("loss must be a scalar, got {0}")]
    NotScalar(Shape),
    #[error("non-finite gradient; update skipped")]
    NonFiniteGradient,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests {
    use super::gradcheck::gradient_check;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn primitive_values() {
        let store = ParamStore::<f64>::new();
        let mut g = Graph::new(&store);
        let z = g.zeros(1);
        let s0 = g.sigmoid(z);
        assert_eq!(g.value(s0)[0], 0.5);
        let z2 = g.zeros(2);
        let s = g.softmax(z2).unwrap();
        assert_eq!(g.value(s), &[0.5, 0.5]);
        let x = g.input(Shape::vector(3), vec![1.0, -2.0, 3.0]).unwrap();
        assert_eq!(g.dropout(x, 0.5), x);
        let n = g.l2_norm(x);
        assert!((g.scalar(n) - 14f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn dropout_scales_kept_units() {
        let store = ParamStore::<f64>::new();
        let mut g = Graph::training(&store, 5);
        let x = g.input(Shape::vector(1000), vec![1.0; 1000]).unwrap();
        let d = g.dropout(x, 0.5);
        let vals = g.value(d);
        assert!(vals.iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = vals.iter().filter(|&&v| v == 2.0).count();
        assert!((400..600).contains(&kept));
    }

    #[test]
    fn square_gradient() {
        let mut store = ParamStore::<f64>::new();
        let w = store.insert("w", Tensor::from_vec(Shape::scalar(), vec![3.0]));
        let mut grads = Gradients::zeros_like(&store);
        let mut g = Graph::new(&store);
        let wn = g.param(w);
        let y = g.mul(wn, wn).unwrap();
        g.backward(y, &mut grads).unwrap();
        assert_eq!(grads.get(w), &[6.0]);
    }

    #[test]
    fn confident_cross_entropy_has_zero_gradient() {
        let mut store = ParamStore::<f64>::new();
        let w = store.insert("logits", Tensor::from_vec(Shape::vector(3), vec![0.0, 800.0, 0.0]));
        let mut grads = Gradients::zeros_like(&store);
        let mut g = Graph::new(&store);
        let l = g.param(w);
        let ce = g.cross_entropy(l, 1).unwrap();
        assert_eq!(g.scalar(ce), 0.0);
        g.backward(ce, &mut grads).unwrap();
        assert!(grads.get(w).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn errors_are_reported() {
        let store = ParamStore::<f64>::new();
        let mut g = Graph::new(&store);
        let a = g.zeros(3);
        let b = g.zeros(2);
        assert!(matches!(g.add(a, b), Err(TensorError::ShapeMismatch { .. })));
        assert!(matches!(g.matvec(a, b), Err(TensorError::ShapeMismatch { .. })));
        let mut grads = Gradients::zeros_like(&store);
        assert!(matches!(g.backward(a, &mut grads), Err(TensorError::NotScalar(_))));
    }

    #[test]
    fn random_graph_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::<f64>::new();
        let w = store.add("w", Shape::matrix(4, 3), Init::FanIn(1), &mut rng);
        let x = store.add("x", Shape::vector(3), Init::FanIn(1), &mut rng);
        let m = store.add("m", Shape::matrix(5, 4), Init::FanIn(1), &mut rng);
        let k = store.add("k", Shape::matrix(2, 4), Init::FanIn(1), &mut rng);
        let report = gradient_check(
            &store,
            |g| {
                let (wn, xn, mn, kn) = (g.param(w), g.param(x), g.param(m), g.param(k));
                let h = g.matvec(wn, xn).unwrap();
                let t = g.tanh(h);
                let s = g.sigmoid(h);
                let u = g.mul(t, s).unwrap();
                let rows = g.add_rows(mn, u).unwrap();
                let proj = g.matmul_nt(rows, kn).unwrap();
                let r0 = g.row(proj, 1).unwrap();
                let scores = g.matvec(mn, u).unwrap();
                let a = g.softmax(scores).unwrap();
                let ctx = g.mat_t_vec(mn, a).unwrap();
                let cat = g.concat(&[ctx, r0]).unwrap();
                let sl = g.slice(cat, 1, 4).unwrap();
                let d = g.sub(sl, u).unwrap();
                let n = g.l2_norm(d);
                let ce = g.cross_entropy(cat, 2).unwrap();
                let st = g.stack(&[u, sl]).unwrap();
                let r1 = g.row(st, 0).unwrap();
                let n2 = g.l2_norm(r1);
                let sc = g.affine(n2, 0.3, 1.0);
                g.sum(&[n, ce, sc]).unwrap()
            },
            1e-4,
            None,
        );
        assert!(report.max_rel_error < 1e-4, "{report:?}");
        assert_eq!(report.checked, 12 + 3 + 20 + 8);
    }
}
