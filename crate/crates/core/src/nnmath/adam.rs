use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::tensor::{Gradients, ParamStore};
use super::TensorError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 coefficient folded into the gradient before the moment updates.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(store: &ParamStore<F>, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<F>> = store.iter().map(|(_, _, t)| vec![F::zero(); t.values.len()]).collect();
        AdamState {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }
}

/// One bias-corrected Adam update. A non-finite gradient leaves every
/// parameter and the moment estimates untouched.
pub fn adam_step<F: Scalar>(
    store: &mut ParamStore<F>,
    grads: &Gradients<F>,
    state: &mut AdamState<F>,
) -> Result<(), TensorError> {
    if grads.values.len() != store.len() || state.m.len() != store.len() {
        return Err(TensorError::Empty("adam: gradient/parameter count mismatch"));
    }
    if !grads.all_finite() {
        return Err(TensorError::NonFiniteGradient);
    }
    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let b1 = F::from_f64_lossy(c.beta1);
    let b2 = F::from_f64_lossy(c.beta2);
    let one = F::one();
    let bc1 = F::from_f64_lossy(1.0 - c.beta1.powi(t));
    let bc2 = F::from_f64_lossy(1.0 - c.beta2.powi(t));
    let lr = F::from_f64_lossy(c.lr);
    let eps = F::from_f64_lossy(c.eps);
    let wd = F::from_f64_lossy(c.weight_decay);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let i = id.index();
        let p = &mut store.get_mut(id).values;
        let g = &grads.values[i];
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for k in 0..p.len() {
            let gk = g[k] + wd * p[k];
            m[k] = b1 * m[k] + (one - b1) * gk;
            v[k] = b2 * v[k] + (one - b2) * gk * gk;
            let mh = m[k] / bc1;
            let vh = v[k] / bc2;
            p[k] -= lr * mh / (vh.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnmath::{Graph, Shape, Tensor};

    fn scalar_store(w: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::from_vec(Shape::scalar(), vec![w]));
        s
    }

    fn square_grad(store: &ParamStore<f64>) -> Gradients<f64> {
        let mut g = Gradients::zeros_like(store);
        let mut graph = Graph::new(store);
        let w = graph.param(store.id("w").unwrap());
        let y = graph.mul(w, w).unwrap();
        graph.backward(y, &mut g).unwrap();
        g
    }

    #[test]
    fn first_step_is_full_learning_rate() {
        let mut store = scalar_store(1.0);
        let g = square_grad(&store);
        assert_eq!(g.values[0][0], 2.0);
        let mut st = AdamState::new(&store, AdamConfig::default());
        adam_step(&mut store, &g, &mut st).unwrap();
        let w = store.get(store.id("w").unwrap()).values[0];
        // bias-corrected m/sqrt(v) is exactly g/|g| at t = 1
        let expected = 1.0 - 1e-3 * 2.00001 / (2.00001 + 1e-8);
        assert!((w - expected).abs() < 1e-12, "{w}");
        assert!((w - (1.0 - 1e-3)).abs() < 1e-8);
    }

    #[test]
    fn zero_gradient_only_decays() {
        let mut store = scalar_store(0.5);
        let zero = Gradients::zeros_like(&store);
        let mut plain = AdamState::new(
            &store,
            AdamConfig {
                weight_decay: 0.0,
                ..AdamConfig::default()
            },
        );
        adam_step(&mut store, &zero, &mut plain).unwrap();
        assert_eq!(store.get(store.id("w").unwrap()).values[0], 0.5);

        let mut decayed = AdamState::new(&store, AdamConfig::default());
        adam_step(&mut store, &zero, &mut decayed).unwrap();
        let w = store.get(store.id("w").unwrap()).values[0];
        assert!(w < 0.5 && w > 0.5 - 1.0001e-3, "{w}");
    }

    #[test]
    fn non_finite_gradient_skips_step() {
        let mut store = scalar_store(1.0);
        let mut g = Gradients::zeros_like(&store);
        g.values[0][0] = f64::NAN;
        let mut st = AdamState::new(&store, AdamConfig::default());
        assert!(matches!(
            adam_step(&mut store, &g, &mut st),
            Err(TensorError::NonFiniteGradient)
        ));
        assert_eq!(st.step, 0);
        assert_eq!(store.get(store.id("w").unwrap()).values[0], 1.0);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut store = scalar_store(3.0);
            let mut st = AdamState::new(&store, AdamConfig::default());
            for _ in 0..50 {
                let g = square_grad(&store);
                adam_step(&mut store, &g, &mut st).unwrap();
            }
            store.get(store.id("w").unwrap()).values[0].to_bits()
        };
        assert_eq!(run(), run());
    }
}
