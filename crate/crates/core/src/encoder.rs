//! Stacked bidirectional GRU problem encoder.
//!
//! The output at each position is the sum of the forward and backward
//! top-layer states; the decoder root is the forward state at the last
//! token plus the backward state at the first token. Layer two reads the
//! summed outputs of layer one, so every layer has width `hidden`.

use rand::Rng;
use thiserror::Error;

use crate::nnmath::{Graph, Init, NodeId, ParamId, ParamStore, Shape, TensorError};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("cannot encode an empty token sequence")]
    EmptyInput,
    #[error("token index {index} outside vocabulary of {vocab}")]
    TokenOutOfRange { index: usize, vocab: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GruParams {
    pub weight_ih: ParamId,
    pub weight_hh: ParamId,
    pub bias_ih: ParamId,
    pub bias_hh: ParamId,
    pub hidden: usize,
}

impl GruParams {
    pub fn register<F: Scalar>(
        store: &mut ParamStore<F>,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        GruParams {
            weight_ih: store.add(
                &format!("{prefix}.weight_ih"),
                Shape::matrix(3 * hidden, input),
                Init::FanIn(input),
                rng,
            ),
            weight_hh: store.add(
                &format!("{prefix}.weight_hh"),
                Shape::matrix(3 * hidden, hidden),
                Init::FanIn(hidden),
                rng,
            ),
            bias_ih: store.add(
                &format!("{prefix}.bias_ih"),
                Shape::vector(3 * hidden),
                Init::Zeros,
                rng,
            ),
            bias_hh: store.add(
                &format!("{prefix}.bias_hh"),
                Shape::vector(3 * hidden),
                Init::Zeros,
                rng,
            ),
            hidden,
        }
    }

    /// Input projections `W_ih x_t + b_ih` for every step at once.
    pub fn project_inputs<F: Scalar>(&self, g: &mut Graph<'_, F>, xs: &[NodeId]) -> Result<Vec<NodeId>, TensorError> {
        let x = g.stack(xs)?;
        let w = g.param(self.weight_ih);
        let b = g.param(self.bias_ih);
        let p = g.matmul_nt(x, w)?;
        let p = g.add_rows(p, b)?;
        (0..xs.len()).map(|t| g.row(p, t)).collect()
    }

    /// One GRU update from a projected input row and the previous state.
    ///
    /// `r = σ(x_r + h_r)`, `z = σ(x_z + h_z)`, `c = tanh(x_n + r ⊙ h_n)`,
    /// `h' = (1 - z) ⊙ c + z ⊙ h`.
    pub fn step<F: Scalar>(&self, g: &mut Graph<'_, F>, xproj: NodeId, h: NodeId) -> Result<NodeId, TensorError> {
        let d = self.hidden;
        let hp = g.linear(self.weight_hh, Some(self.bias_hh), h)?;
        let (xr, xz, xn) = (g.slice(xproj, 0, d)?, g.slice(xproj, d, d)?, g.slice(xproj, 2 * d, d)?);
        let (hr, hz, hn) = (g.slice(hp, 0, d)?, g.slice(hp, d, d)?, g.slice(hp, 2 * d, d)?);
        let r = g.add(xr, hr)?;
        let r = g.sigmoid(r);
        let z = g.add(xz, hz)?;
        let z = g.sigmoid(z);
        let rh = g.mul(r, hn)?;
        let c = g.add(xn, rh)?;
        let c = g.tanh(c);
        let diff = g.sub(h, c)?;
        let zd = g.mul(z, diff)?;
        g.add(c, zd)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub embedding: ParamId,
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    /// `[forward, backward]` per layer.
    pub layers: Vec<[GruParams; 2]>,
}

/// Per-token states and the decoder root.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub states: Vec<NodeId>,
    /// `states` stacked as an `n x hidden` matrix.
    pub matrix: NodeId,
    pub root: NodeId,
    pub forward_top: Vec<NodeId>,
    pub backward_top: Vec<NodeId>,
}

impl EncoderParams {
    pub fn register<F: Scalar>(
        store: &mut ParamStore<F>,
        vocab: usize,
        embed: usize,
        hidden: usize,
        layers: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let embedding = store.add(
            "encoder.embedding",
            Shape::matrix(vocab, embed),
            Init::FanIn(embed),
            rng,
        );
        let layers = (0..layers)
            .map(|l| {
                let input = if l == 0 { embed } else { hidden };
                [
                    GruParams::register(store, &format!("encoder.l{l}.fwd"), input, hidden, rng),
                    GruParams::register(store, &format!("encoder.l{l}.bwd"), input, hidden, rng),
                ]
            })
            .collect();
        EncoderParams {
            embedding,
            vocab,
            embed,
            hidden,
            layers,
        }
    }

    /// Embedding-row lookup.
    pub fn embed<F: Scalar>(&self, g: &mut Graph<'_, F>, tokens: &[usize]) -> Result<Vec<NodeId>, EncoderError> {
        let table = g.param(self.embedding);
        tokens
            .iter()
            .map(|&t| {
                if t >= self.vocab {
                    return Err(EncoderError::TokenOutOfRange {
                        index: t,
                        vocab: self.vocab,
                    });
                }
                Ok(g.row(table, t)?)
            })
            .collect()
    }

    pub fn encode<F: Scalar>(
        &self,
        g: &mut Graph<'_, F>,
        tokens: &[usize],
        dropout: f64,
    ) -> Result<EncoderOutput, EncoderError> {
        if tokens.is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        let embedded = self.embed(g, tokens)?;
        let xs: Vec<NodeId> = embedded.into_iter().map(|x| g.dropout(x, dropout)).collect();
        self.encode_vectors(g, &xs, dropout)
    }

    /// Runs the stacked BiGRU over already-embedded inputs.
    pub fn encode_vectors<F: Scalar>(
        &self,
        g: &mut Graph<'_, F>,
        xs: &[NodeId],
        dropout: f64,
    ) -> Result<EncoderOutput, EncoderError> {
        if xs.is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        let n = xs.len();
        let mut inputs = xs.to_vec();
        let mut fwd = Vec::new();
        let mut bwd = Vec::new();
        for (l, [f, b]) in self.layers.iter().enumerate() {
            if l > 0 {
                inputs = inputs.into_iter().map(|x| g.dropout(x, dropout)).collect();
            }
            let pf = f.project_inputs(g, &inputs)?;
            let pb = b.project_inputs(g, &inputs)?;
            fwd = Vec::with_capacity(n);
            let mut h = g.zeros(self.hidden);
            for p in &pf {
                h = f.step(g, *p, h)?;
                fwd.push(h);
            }
            bwd = vec![h; n];
            let mut h = g.zeros(self.hidden);
            for t in (0..n).rev() {
                h = b.step(g, pb[t], h)?;
                bwd[t] = h;
            }
            inputs = (0..n).map(|t| g.add(fwd[t], bwd[t])).collect::<Result<_, _>>()?;
        }
        let matrix = g.stack(&inputs)?;
        let root = g.add(fwd[n - 1], bwd[0])?;
        Ok(EncoderOutput {
            states: inputs,
            matrix,
            root,
            forward_top: fwd,
            backward_top: bwd,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnmath::gradcheck::gradient_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(vocab: usize, embed: usize, hidden: usize, layers: usize, seed: u64) -> (ParamStore<f64>, EncoderParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let enc = EncoderParams::register(&mut store, vocab, embed, hidden, layers, &mut rng);
        (store, enc)
    }

    #[test]
    fn single_token_root_equals_state() {
        let (store, enc) = setup(5, 4, 6, 2, 1);
        let mut g = Graph::new(&store);
        let out = enc.encode(&mut g, &[3], 0.0).unwrap();
        assert_eq!(out.states.len(), 1);
        let h1 = g.value(out.states[0]).to_vec();
        assert_eq!(g.value(out.root), h1.as_slice());
    }

    #[test]
    fn zero_weights_give_zero_states() {
        let (mut store, enc) = setup(5, 4, 6, 2, 1);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            store.get_mut(id).values.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut g = Graph::new(&store);
        let out = enc.encode(&mut g, &[1, 2, 3, 4], 0.0).unwrap();
        for s in &out.states {
            assert!(g.value(*s).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn three_tokens_root_is_last_forward_plus_first_backward() {
        let (store, enc) = setup(6, 4, 5, 2, 9);
        let mut g = Graph::new(&store);
        let out = enc.encode(&mut g, &[1, 4, 2], 0.0).unwrap();
        let expect: Vec<f64> = g
            .value(out.forward_top[2])
            .iter()
            .zip(g.value(out.backward_top[0]))
            .map(|(a, b)| a + b)
            .collect();
        assert_eq!(g.value(out.root), expect.as_slice());
        for t in 0..3 {
            let sum: Vec<f64> = g
                .value(out.forward_top[t])
                .iter()
                .zip(g.value(out.backward_top[t]))
                .map(|(a, b)| a + b)
                .collect();
            assert_eq!(g.value(out.states[t]), sum.as_slice());
        }
    }

    #[test]
    fn embedding_lookup() {
        let (store, enc) = setup(5, 4, 6, 2, 1);
        let mut g = Graph::new(&store);
        let e = enc.embed(&mut g, &[1, 2, 1]).unwrap();
        assert_eq!(e.len(), 3);
        assert_eq!(g.value(e[0]), g.value(e[2]));
        assert_eq!(g.value(e[0]), store.get(enc.embedding).row(1));
        assert!(matches!(
            enc.embed(&mut g, &[5]),
            Err(EncoderError::TokenOutOfRange { .. })
        ));
        assert!(matches!(enc.encode(&mut g, &[], 0.0), Err(EncoderError::EmptyInput)));
    }

    #[test]
    fn reversed_input_swaps_directions_with_shared_weights() {
        let (mut store, enc) = setup(7, 4, 5, 2, 4);
        for [f, b] in &enc.layers {
            for (src, dst) in [
                (f.weight_ih, b.weight_ih),
                (f.weight_hh, b.weight_hh),
                (f.bias_ih, b.bias_ih),
                (f.bias_hh, b.bias_hh),
            ] {
                let v = store.get(src).clone();
                *store.get_mut(dst) = v;
            }
        }
        let tokens = [1, 5, 2, 6];
        let rev: Vec<usize> = tokens.iter().rev().copied().collect();
        let mut g = Graph::new(&store);
        let a = enc.encode(&mut g, &tokens, 0.0).unwrap();
        let b = enc.encode(&mut g, &rev, 0.0).unwrap();
        for t in 0..4 {
            let fa = g.value(b.forward_top[t]);
            let ba = g.value(a.backward_top[3 - t]);
            for (x, y) in fa.iter().zip(ba) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_check_full_encoder() {
        let (store, enc) = setup(6, 8, 8, 2, 21);
        let report = gradient_check(
            &store,
            |g| {
                let out = enc.encode(g, &[1, 3, 5, 2], 0.0).unwrap();
                let s = g.sum(&out.states).unwrap();
                let s = g.add(s, out.root).unwrap();
                let t = g.tanh(s);
                
                g.l2_norm(t)
            },
            1e-4,
            None,
        );
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
