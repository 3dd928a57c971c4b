use super::search::{self, SearchSpace};
use super::{DecoderError, GateTarget, Model};
use crate::corpus::{target_vocab, ProblemInstance};
use crate::encoder::EncoderOutput;
use crate::nnmath::{log_sum_exp, softmax, Graph, NodeId};
use crate::scalar::Scalar;
use crate::uet::{Decimal, TargetSymbol};

/// Default cap on emitted symbols in free-running decoding.
pub const DEFAULT_MAX_NODES: usize = 45;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    LeftOrRoot,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GEntry {
    pub state: NodeId,
    pub position: Position,
    /// Embedding of the completed left sibling; set once it is merged.
    pub sibling: Option<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TEntry {
    Operator(NodeId),
    Subtree(NodeId),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecoderStacks {
    pub g: Vec<GEntry>,
    pub t: Vec<TEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeStep {
    pub n: NodeId,
    pub c: NodeId,
    /// Index into the problem's target vocabulary.
    pub symbol: usize,
    pub embedding: NodeId,
    pub children: Option<(NodeId, NodeId)>,
    /// Stack depths after the step.
    pub g_depth: usize,
    pub t_depth: usize,
}

#[derive(Debug, Clone)]
pub enum DecodeMode<'a> {
    Forced(&'a [TargetSymbol]),
    Greedy,
    Beam(usize),
}

/// Per-problem tensors shared by every decoding step.
#[derive(Debug, Clone)]
pub struct Problem<'i> {
    pub instance: &'i ProblemInstance,
    pub target: Vec<TargetSymbol>,
    pub encoder: EncoderOutput,
    /// `e(y|P)` for each target symbol.
    pub embeddings: Vec<NodeId>,
    candidate_terms: NodeId,
    attention_keys: NodeId,
    ssar_keys: NodeId,
}

impl Problem<'_> {
    pub fn index_of(&self, y: &TargetSymbol) -> Option<usize> {
        self.target.iter().position(|s| s == y)
    }
}

#[derive(Debug, Clone)]
pub struct DecodeState {
    pub stacks: DecoderStacks,
    pub steps: Vec<DecodeStep>,
    pub distributions: Vec<Vec<f64>>,
    pub logits: Vec<NodeId>,
    /// Internal-subtree embeddings in completion (post-) order.
    pub subtrees: Vec<NodeId>,
    pub root: Option<NodeId>,
    pending: Option<(NodeId, NodeId)>,
}

#[derive(Debug, Clone)]
pub struct DecodeOutput {
    pub symbols: Vec<usize>,
    pub prefix: Vec<TargetSymbol>,
    pub log_prob: f64,
    pub step_log_probs: Vec<f64>,
    pub state: DecodeState,
}

impl DecodeOutput {
    pub fn root(&self) -> NodeId {
        self.state.root.expect("completed decode has a root")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: NodeId,
    pub nll: NodeId,
    pub ssar: Option<NodeId>,
}

impl<F: Scalar> Model<F> {
    /// Encodes the problem and precomputes candidate embeddings and keys.
    pub fn prepare<'i>(
        &self,
        g: &mut Graph<'_, F>,
        instance: &'i ProblemInstance,
        token_ids: &[usize],
        constants: &[Decimal],
        dropout: f64,
    ) -> Result<Problem<'i>, DecoderError> {
        if constants.len() != self.config.constants {
            return Err(DecoderError::ConstantCount {
                expected: self.config.constants,
                got: constants.len(),
            });
        }
        let encoder = self.encoder.encode(g, token_ids, dropout)?;
        let target = target_vocab(instance, constants);
        let ops = g.param(self.decoder.op_embedding);
        let unknowns = g.param(self.decoder.unknown_embedding);
        let consts = g.param(self.decoder.const_embedding);
        let mut embeddings = Vec::with_capacity(target.len());
        for y in &target {
            let e = match y {
                TargetSymbol::Op(op) => g.row(ops, op.index())?,
                TargetSymbol::Unknown(u) => g.row(unknowns, u.index())?,
                TargetSymbol::Const(c) => {
                    let i = constants
                        .iter()
                        .position(|k| k == c)
                        .expect("constant from the same list");
                    g.row(consts, i)?
                }
                TargetSymbol::Slot(i) => {
                    let position = instance.slots[*i].position;
                    *encoder.states.get(position).ok_or(DecoderError::SlotPosition {
                        slot: *i,
                        position,
                        len: encoder.states.len(),
                    })?
                }
            };
            embeddings.push(e);
        }
        let stacked = g.stack(&embeddings)?;
        let candidate_terms = self.decoder.score.candidate_terms(g, stacked)?;
        let attention_keys = self.decoder.attention.keys(g, encoder.matrix)?;
        let ssar_keys = match &self.decoder.ssar_attention {
            Some(a) => a.keys(g, encoder.matrix)?,
            None => attention_keys,
        };
        Ok(Problem {
            instance,
            target,
            encoder,
            embeddings,
            candidate_terms,
            attention_keys,
            ssar_keys,
        })
    }

    pub fn token_embedding(&self, problem: &Problem<'_>, y: &TargetSymbol) -> Result<NodeId, DecoderError> {
        problem
            .index_of(y)
            .map(|i| problem.embeddings[i])
            .ok_or_else(|| DecoderError::OutsideVocabulary(y.to_string()))
    }

    pub fn gate(&self, g: &mut Graph<'_, F>, target: GateTarget, input: NodeId) -> Result<NodeId, DecoderError> {
        Ok(self.decoder.gate(target).apply(g, input)?)
    }

    /// Context vector and attention weights for a node state.
    pub fn attend(
        &self,
        g: &mut Graph<'_, F>,
        problem: &Problem<'_>,
        n: NodeId,
    ) -> Result<(NodeId, NodeId), DecoderError> {
        Ok(self
            .decoder
            .attention
            .attend(g, problem.attention_keys, problem.encoder.matrix, n)?)
    }

    /// Scores over the problem's target vocabulary.
    pub fn predict(
        &self,
        g: &mut Graph<'_, F>,
        problem: &Problem<'_>,
        n: NodeId,
        c: NodeId,
    ) -> Result<NodeId, DecoderError> {
        Ok(self.decoder.score.logits(g, problem.candidate_terms, n, c)?)
    }

    pub fn subtree_merge(
        &self,
        g: &mut Graph<'_, F>,
        op: NodeId,
        left: NodeId,
        right: NodeId,
    ) -> Result<NodeId, DecoderError> {
        Ok(self.decoder.merge.apply(g, op, left, right)?)
    }

    pub fn begin(&self, problem: &Problem<'_>) -> DecodeState {
        DecodeState {
            stacks: DecoderStacks {
                g: vec![GEntry {
                    state: problem.encoder.root,
                    position: Position::LeftOrRoot,
                    sibling: None,
                }],
                t: Vec::new(),
            },
            steps: Vec::new(),
            distributions: Vec::new(),
            logits: Vec::new(),
            subtrees: Vec::new(),
            root: None,
            pending: None,
        }
    }

    /// Pops the next goal and returns the candidate scores for it.
    pub fn score_step(
        &self,
        g: &mut Graph<'_, F>,
        problem: &Problem<'_>,
        state: &mut DecodeState,
    ) -> Result<NodeId, DecoderError> {
        let entry = state.stacks.g.pop().ok_or(DecoderError::TrailingSymbols {
            used: state.steps.len(),
            len: state.steps.len() + 1,
        })?;
        let n = match entry.position {
            Position::LeftOrRoot => self.gate(g, GateTarget::NodeLeft, entry.state)?,
            Position::Right => {
                let sibling = entry
                    .sibling
                    .expect("right goal popped after its left sibling completed");
                let input = g.concat(&[entry.state, sibling])?;
                self.gate(g, GateTarget::NodeRight, input)?
            }
        };
        let (c, _) = self.attend(g, problem, n)?;
        let logits = self.predict(g, problem, n, c)?;
        state.pending = Some((n, c));
        state.logits.push(logits);
        Ok(logits)
    }

    /// Applies the chosen symbol; returns `true` once `G` is empty.
    pub fn apply_symbol(
        &self,
        g: &mut Graph<'_, F>,
        problem: &Problem<'_>,
        state: &mut DecodeState,
        symbol: usize,
    ) -> Result<bool, DecoderError> {
        let (n, c) = state.pending.take().expect("score_step before apply_symbol");
        let e = problem.embeddings[symbol];
        let mut children = None;
        if problem.target[symbol].is_operator() {
            let input = g.concat(&[n, c, e])?;
            let gl = self.gate(g, GateTarget::ChildLeft, input)?;
            let gr = self.gate(g, GateTarget::ChildRight, input)?;
            state.stacks.g.push(GEntry {
                state: gr,
                position: Position::Right,
                sibling: None,
            });
            state.stacks.g.push(GEntry {
                state: gl,
                position: Position::LeftOrRoot,
                sibling: None,
            });
            state.stacks.t.push(TEntry::Operator(e));
            children = Some((gl, gr));
        } else {
            let mut t = e;
            while let Some(&TEntry::Subtree(left)) = state.stacks.t.last() {
                state.stacks.t.pop();
                let Some(TEntry::Operator(op)) = state.stacks.t.pop() else {
                    unreachable!("completed subtree always sits above an operator");
                };
                t = self.subtree_merge(g, op, left, t)?;
                state.subtrees.push(t);
            }
            if state.stacks.t.is_empty() {
                state.root = Some(t);
            } else {
                state.stacks.t.push(TEntry::Subtree(t));
                let goal = state
                    .stacks
                    .g
                    .last_mut()
                    .expect("pending right goal for an unfinished operator");
                debug_assert_eq!(goal.position, Position::Right);
                goal.sibling = Some(t);
            }
        }
        state.steps.push(DecodeStep {
            n,
            c,
            symbol,
            embedding: e,
            children,
            g_depth: state.stacks.g.len(),
            t_depth: state.stacks.t.len(),
        });
        Ok(state.stacks.g.is_empty())
    }

    pub fn decode(
        &self,
        g: &mut Graph<'_, F>,
        problem: &Problem<'_>,
        mode: DecodeMode<'_>,
        max_nodes: usize,
    ) -> Result<DecodeOutput, DecoderError> {
        match mode {
            DecodeMode::Forced(gold) => self.decode_forced(g, problem, gold),
            DecodeMode::Greedy | DecodeMode::Beam(_) => {
                if max_nodes == 0 {
                    return Err(DecoderError::MaxNodesExceeded(0));
                }
                let init = self.begin(problem);
                let mut space = TreeSearch {
                    model: self,
                    graph: g,
                    problem,
                    max_nodes,
                };
                let found = match mode {
                    DecodeMode::Beam(w) => search::beam_search(&mut space, init, w, max_nodes)?,
                    _ => search::greedy(&mut space, init, max_nodes)?,
                };
                let h = found.ok_or(DecoderError::NoHypothesis(max_nodes))?;
                Ok(DecodeOutput {
                    prefix: h.symbols.iter().map(|&k| problem.target[k].clone()).collect(),
                    symbols: h.symbols,
                    log_prob: h.log_prob,
                    step_log_probs: h.step_log_probs,
                    state: h.state,
                })
            }
        }
    }

    pub fn beam_search(
        &self,
        g: &mut Graph<'_, F>,
        problem: &Problem<'_>,
        beam_width: usize,
        max_nodes: usize,
    ) -> Result<DecodeOutput, DecoderError> {
        self.decode(g, problem, DecodeMode::Beam(beam_width), max_nodes)
    }

    fn decode_forced(
        &self,
        g: &mut Graph<'_, F>,
        problem: &Problem<'_>,
        gold: &[TargetSymbol],
    ) -> Result<DecodeOutput, DecoderError> {
        let mut state = self.begin(problem);
        let mut symbols = Vec::with_capacity(gold.len());
        let mut step_log_probs = Vec::with_capacity(gold.len());
        for (i, y) in gold.iter().enumerate() {
            let k = problem
                .index_of(y)
                .ok_or_else(|| DecoderError::OutsideVocabulary(y.to_string()))?;
            let logits = self.score_step(g, problem, &mut state)?;
            let values: Vec<f64> = g.value(logits).iter().map(|v| v.to_f64_lossy()).collect();
            step_log_probs.push(values[k] - log_sum_exp(&values));
            state.distributions.push(softmax(&values));
            symbols.push(k);
            if self.apply_symbol(g, problem, &mut state, k)? && i + 1 < gold.len() {
                return Err(DecoderError::TrailingSymbols {
                    used: i + 1,
                    len: gold.len(),
                });
            }
        }
        if !state.stacks.g.is_empty() {
            return Err(DecoderError::IncompletePrefix);
        }
        Ok(DecodeOutput {
            symbols,
            prefix: gold.to_vec(),
            log_prob: step_log_probs.iter().sum(),
            step_log_probs,
            state,
        })
    }

    /// Mean `‖d_sa − e_sa‖₂` over the given subtree embeddings; `None` if empty.
    pub fn ssar_loss(
        &self,
        g: &mut Graph<'_, F>,
        problem: &Problem<'_>,
        subtrees: &[NodeId],
    ) -> Result<Option<NodeId>, DecoderError> {
        if subtrees.is_empty() {
            return Ok(None);
        }
        let attention = self.decoder.ssar_attention();
        let mut norms = Vec::with_capacity(subtrees.len());
        for &t in subtrees {
            let (a, _) = attention.attend(g, problem.ssar_keys, problem.encoder.matrix, t)?;
            let e = self.decoder.ssar.text_head(g, a)?;
            let d = self.decoder.ssar.tree_head(g, t)?;
            let diff = g.sub(d, e)?;
            norms.push(g.l2_norm(diff));
        }
        Ok(Some(g.mean(&norms)?))
    }

    /// Gold-forced negative log-likelihood plus `lambda` times SSAR.
    pub fn training_loss(
        &self,
        g: &mut Graph<'_, F>,
        problem: &Problem<'_>,
        gold: &[TargetSymbol],
        lambda: f64,
    ) -> Result<LossTerms, DecoderError> {
        let out = self.decode_forced(g, problem, gold)?;
        let terms: Vec<NodeId> = out
            .state
            .logits
            .iter()
            .zip(&out.symbols)
            .map(|(&l, &k)| g.cross_entropy(l, k))
            .collect::<Result<_, _>>()?;
        let nll = g.sum(&terms)?;
        let ssar = if lambda > 0.0 {
            self.ssar_loss(g, problem, &out.state.subtrees)?
        } else {
            None
        };
        let total = match ssar {
            Some(s) => {
                let scaled = g.affine(s, F::from_f64_lossy(lambda), F::zero());
                g.add(nll, scaled)?
            }
            None => nll,
        };
        Ok(LossTerms { total, nll, ssar })
    }
}

/// Free-running search adapter; forbids operators once the tree could no
/// longer close within `max_nodes`.
struct TreeSearch<'m, 'g, 'p, 'i, F: Scalar> {
    model: &'m Model<F>,
    graph: &'g mut Graph<'p, F>,
    problem: &'m Problem<'i>,
    max_nodes: usize,
}

impl<F: Scalar> SearchSpace for TreeSearch<'_, '_, '_, '_, F> {
    type State = DecodeState;
    type Error = DecoderError;

    fn scores(&mut self, state: &mut DecodeState) -> Result<Vec<f64>, DecoderError> {
        let emitted = state.steps.len();
        let logits = self.model.score_step(self.graph, self.problem, state)?;
        let open = state.stacks.g.len();
        let leaf_ok = emitted + 1 + open <= self.max_nodes;
        let op_ok = emitted + 1 + open + 2 <= self.max_nodes;
        let mut values: Vec<f64> = self.graph.value(logits).iter().map(|v| v.to_f64_lossy()).collect();
        for (v, y) in values.iter_mut().zip(&self.problem.target) {
            let ok = if y.is_operator() { op_ok } else { leaf_ok };
            if !ok {
                *v = f64::NEG_INFINITY;
            }
        }
        if values.iter().all(|v| *v == f64::NEG_INFINITY) {
            state.distributions.push(vec![0.0; values.len()]);
            return Ok(values);
        }
        let lse = log_sum_exp(&values);
        let lp: Vec<f64> = values.iter().map(|v| v - lse).collect();
        state.distributions.push(lp.iter().map(|v| v.exp()).collect());
        Ok(lp)
    }

    fn advance(&mut self, state: &mut DecodeState, symbol: usize) -> Result<bool, DecoderError> {
        self.model.apply_symbol(self.graph, self.problem, state, symbol)
    }
}
