use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DecoderError;
use crate::encoder::EncoderParams;
use crate::nnmath::{Graph, Init, NodeId, ParamId, ParamStore, Shape, TensorError};
use crate::scalar::Scalar;
use crate::uet::Operator;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Problem-text vocabulary size.
    pub vocab_size: usize,
    pub embed: usize,
    pub hidden: usize,
    /// Number of global constants.
    pub constants: usize,
    #[serde(default = "default_layers")]
    pub encoder_layers: usize,
    /// SSAR attention gets its own weights instead of reusing the decoder's.
    #[serde(default)]
    pub separate_ssar_attention: bool,
}

fn default_layers() -> usize {
    2
}

impl ModelConfig {
    pub fn new(vocab_size: usize, embed: usize, hidden: usize, constants: usize) -> Self {
        ModelConfig {
            vocab_size,
            embed,
            hidden,
            constants,
            encoder_layers: 2,
            separate_ssar_attention: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateTarget {
    /// Left child or root node state, input `g`.
    NodeLeft,
    /// Right child node state, input `[g, t_l]`.
    NodeRight,
    /// Left child goal, input `[n, c, e]`.
    ChildLeft,
    /// Right child goal, input `[n, c, e]`.
    ChildRight,
}

impl GateTarget {
    pub const ALL: [GateTarget; 4] = [
        GateTarget::NodeLeft,
        GateTarget::NodeRight,
        GateTarget::ChildLeft,
        GateTarget::ChildRight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GateTarget::NodeLeft => "n_l",
            GateTarget::NodeRight => "n_r",
            GateTarget::ChildLeft => "g_l",
            GateTarget::ChildRight => "g_r",
        }
    }

    /// Input width in multiples of the hidden size.
    pub fn input_blocks(self) -> usize {
        match self {
            GateTarget::NodeLeft => 1,
            GateTarget::NodeRight => 2,
            GateTarget::ChildLeft | GateTarget::ChildRight => 3,
        }
    }
}

/// `σ(W_q I + b_q) ⊙ tanh(W_Q I + b_Q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateParams {
    pub gate_w: ParamId,
    pub gate_b: ParamId,
    pub value_w: ParamId,
    pub value_b: ParamId,
}

impl GateParams {
    fn register<F: Scalar>(
        store: &mut ParamStore<F>,
        prefix: &str,
        out: usize,
        input: usize,
        rng: &mut impl Rng,
    ) -> Self {
        GateParams {
            gate_w: store.add(
                &format!("{prefix}.wq"),
                Shape::matrix(out, input),
                Init::FanIn(input),
                rng,
            ),
            gate_b: store.add(&format!("{prefix}.bq"), Shape::vector(out), Init::Zeros, rng),
            value_w: store.add(
                &format!("{prefix}.wQ"),
                Shape::matrix(out, input),
                Init::FanIn(input),
                rng,
            ),
            value_b: store.add(&format!("{prefix}.bQ"), Shape::vector(out), Init::Zeros, rng),
        }
    }

    pub fn apply<F: Scalar>(&self, g: &mut Graph<'_, F>, input: NodeId) -> Result<NodeId, TensorError> {
        let q = g.linear(self.gate_w, Some(self.gate_b), input)?;
        let q = g.sigmoid(q);
        let v = g.linear(self.value_w, Some(self.value_b), input)?;
        let v = g.tanh(v);
        g.mul(q, v)
    }
}

/// Additive attention `V_a · tanh(W_a [n, h_s] + b)`, with `W_a` split
/// into its query and key halves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionParams {
    pub query: ParamId,
    pub key: ParamId,
    pub bias: ParamId,
    pub v: ParamId,
}

impl AttentionParams {
    fn register<F: Scalar>(store: &mut ParamStore<F>, prefix: &str, h: usize, rng: &mut impl Rng) -> Self {
        AttentionParams {
            query: store.add(
                &format!("{prefix}.w_query"),
                Shape::matrix(h, h),
                Init::FanIn(2 * h),
                rng,
            ),
            key: store.add(&format!("{prefix}.w_key"), Shape::matrix(h, h), Init::FanIn(2 * h), rng),
            bias: store.add(&format!("{prefix}.bias"), Shape::vector(h), Init::Zeros, rng),
            v: store.add(&format!("{prefix}.v"), Shape::vector(h), Init::FanIn(h), rng),
        }
    }

    /// `states · W_keyᵀ`, computed once per problem.
    pub fn keys<F: Scalar>(&self, g: &mut Graph<'_, F>, states: NodeId) -> Result<NodeId, TensorError> {
        let w = g.param(self.key);
        g.matmul_nt(states, w)
    }

    /// Returns the context vector and the attention weights.
    pub fn attend<F: Scalar>(
        &self,
        g: &mut Graph<'_, F>,
        keys: NodeId,
        states: NodeId,
        query: NodeId,
    ) -> Result<(NodeId, NodeId), TensorError> {
        let q = g.linear(self.query, Some(self.bias), query)?;
        let pre = g.add_rows(keys, q)?;
        let act = g.tanh(pre);
        let v = g.param(self.v);
        let energies = g.matvec(act, v)?;
        let alpha = g.softmax(energies)?;
        let c = g.mat_t_vec(states, alpha)?;
        Ok((c, alpha))
    }
}

/// `V_n · tanh(W_s [n, c, e(y)] + b)`, with `W_s` split into the
/// state part `[n, c]` and the candidate part `e(y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreParams {
    pub state: ParamId,
    pub token: ParamId,
    pub bias: ParamId,
    pub v: ParamId,
}

impl ScoreParams {
    /// `E · W_tokenᵀ` for the stacked candidate embeddings.
    pub fn candidate_terms<F: Scalar>(&self, g: &mut Graph<'_, F>, candidates: NodeId) -> Result<NodeId, TensorError> {
        let w = g.param(self.token);
        g.matmul_nt(candidates, w)
    }

    /// Unnormalized scores of every candidate.
    pub fn logits<F: Scalar>(
        &self,
        g: &mut Graph<'_, F>,
        candidate_terms: NodeId,
        n: NodeId,
        c: NodeId,
    ) -> Result<NodeId, TensorError> {
        let nc = g.concat(&[n, c])?;
        let u = g.linear(self.state, Some(self.bias), nc)?;
        let pre = g.add_rows(candidate_terms, u)?;
        let act = g.tanh(pre);
        let v = g.param(self.v);
        g.matvec(act, v)
    }
}

/// `σ(W_gt [t_l, t_r, e] + b) ⊙ tanh(W_ct [t_l, t_r, e] + b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeParams(pub GateParams);

impl MergeParams {
    pub fn apply<F: Scalar>(
        &self,
        g: &mut Graph<'_, F>,
        op: NodeId,
        left: NodeId,
        right: NodeId,
    ) -> Result<NodeId, TensorError> {
        let input = g.concat(&[left, right, op])?;
        self.0.apply(g, input)
    }
}

/// Two-layer heads `W_2 tanh(W_1 x)` for the text side (`e`) and tree side (`d`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsarParams {
    pub e1: ParamId,
    pub e2: ParamId,
    pub d1: ParamId,
    pub d2: ParamId,
}

impl SsarParams {
    fn head<F: Scalar>(g: &mut Graph<'_, F>, w1: ParamId, w2: ParamId, x: NodeId) -> Result<NodeId, TensorError> {
        let h = g.linear(w1, None, x)?;
        let h = g.tanh(h);
        g.linear(w2, None, h)
    }

    pub fn text_head<F: Scalar>(&self, g: &mut Graph<'_, F>, a: NodeId) -> Result<NodeId, TensorError> {
        Self::head(g, self.e1, self.e2, a)
    }

    pub fn tree_head<F: Scalar>(&self, g: &mut Graph<'_, F>, t: NodeId) -> Result<NodeId, TensorError> {
        Self::head(g, self.d1, self.d2, t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub op_embedding: ParamId,
    pub unknown_embedding: ParamId,
    pub const_embedding: ParamId,
    pub gates: [GateParams; 4],
    pub attention: AttentionParams,
    pub ssar_attention: Option<AttentionParams>,
    pub score: ScoreParams,
    pub merge: MergeParams,
    pub ssar: SsarParams,
}

impl DecoderParams {
    pub fn register<F: Scalar>(store: &mut ParamStore<F>, config: &ModelConfig, rng: &mut impl Rng) -> Self {
        let h = config.hidden;
        let op_embedding = store.add(
            "decoder.op_embedding",
            Shape::matrix(Operator::ALL.len(), h),
            Init::FanIn(h),
            rng,
        );
        let unknown_embedding = store.add("decoder.unknown_embedding", Shape::matrix(2, h), Init::FanIn(h), rng);
        let const_embedding = store.add(
            "decoder.const_embedding",
            Shape::matrix(config.constants.max(1), h),
            Init::FanIn(h),
            rng,
        );
        let gates = GateTarget::ALL.map(|t| {
            GateParams::register(
                store,
                &format!("decoder.gate.{}", t.name()),
                h,
                t.input_blocks() * h,
                rng,
            )
        });
        let attention = AttentionParams::register(store, "decoder.attention", h, rng);
        let ssar_attention = config
            .separate_ssar_attention
            .then(|| AttentionParams::register(store, "decoder.ssar_attention", h, rng));
        let score = ScoreParams {
            state: store.add(
                "decoder.score.w_state",
                Shape::matrix(h, 2 * h),
                Init::FanIn(3 * h),
                rng,
            ),
            token: store.add("decoder.score.w_token", Shape::matrix(h, h), Init::FanIn(3 * h), rng),
            bias: store.add("decoder.score.bias", Shape::vector(h), Init::Zeros, rng),
            v: store.add("decoder.score.v", Shape::vector(h), Init::FanIn(h), rng),
        };
        let merge = MergeParams(GateParams::register(store, "decoder.merge", h, 3 * h, rng));
        let ssar = SsarParams {
            e1: store.add("decoder.ssar.we1", Shape::matrix(h, h), Init::FanIn(h), rng),
            e2: store.add("decoder.ssar.we2", Shape::matrix(h, h), Init::FanIn(h), rng),
            d1: store.add("decoder.ssar.wd1", Shape::matrix(h, h), Init::FanIn(h), rng),
            d2: store.add("decoder.ssar.wd2", Shape::matrix(h, h), Init::FanIn(h), rng),
        };
        DecoderParams {
            op_embedding,
            unknown_embedding,
            const_embedding,
            gates,
            attention,
            ssar_attention,
            score,
            merge,
            ssar,
        }
    }

    pub fn gate(&self, target: GateTarget) -> &GateParams {
        &self.gates[target as usize]
    }

    pub fn ssar_attention(&self) -> &AttentionParams {
        self.ssar_attention.as_ref().unwrap_or(&self.attention)
    }
}

/// Encoder and decoder parameters with their layout.
#[derive(Debug, Clone)]
pub struct Model<F: Scalar> {
    pub config: ModelConfig,
    pub store: ParamStore<F>,
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
}

impl<F: Scalar> Model<F> {
    /// Fresh parameters drawn from a seeded generator.
    pub fn new(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = EncoderParams::register(
            &mut store,
            config.vocab_size,
            config.embed,
            config.hidden,
            config.encoder_layers,
            &mut rng,
        );
        let decoder = DecoderParams::register(&mut store, &config, &mut rng);
        Model {
            config,
            store,
            encoder,
            decoder,
        }
    }

    /// Wraps loaded parameters after checking names and shapes against the layout.
    pub fn from_store(config: ModelConfig, store: ParamStore<F>) -> Result<Self, DecoderError> {
        let template = Model::<F>::new(config, 0);
        if template.store.len() != store.len() {
            return Err(DecoderError::Layout(format!(
                "expected {} tensors, found {}",
                template.store.len(),
                store.len()
            )));
        }
        for (id, name, t) in template.store.iter() {
            match store.id(name) {
                Some(found) if found == id && store.get(found).shape == t.shape => {}
                Some(found) => {
                    return Err(DecoderError::Layout(format!(
                        "{name}: expected {} at #{}, found {} at #{}",
                        t.shape,
                        id.index(),
                        store.get(found).shape,
                        found.index()
                    )))
                }
                None => return Err(DecoderError::Layout(format!("missing tensor {name}"))),
            }
        }
        Ok(Model { store, ..template })
    }

    pub fn parameter_count(&self) -> usize {
        self.store.scalar_count()
    }

    /// Same layout with values converted to another scalar type.
    pub fn cast<G: Scalar>(&self) -> Model<G> {
        let mut store = ParamStore::new();
        for (_, name, t) in self.store.iter() {
            store.insert(
                name,
                crate::nnmath::Tensor::from_vec(
                    t.shape,
                    t.values.iter().map(|v| G::from_f64_lossy(v.to_f64_lossy())).collect(),
                ),
            );
        }
        Model {
            config: self.config.clone(),
            store,
            encoder: self.encoder.clone(),
            decoder: self.decoder.clone(),
        }
    }
}
