//! Tree decoder: gated node states, attention, problem-specific scoring,
//! bottom-up subtree merging, SSAR and the training objective.

mod decode;
mod params;
pub mod search;
#[cfg(test)]
mod tests;

use thiserror::Error;

use crate::encoder::EncoderError;
use crate::nnmath::TensorError;

pub use decode::{
    DecodeMode, DecodeOutput, DecodeState, DecodeStep, DecoderStacks, GEntry, LossTerms, Position, Problem, TEntry,
    DEFAULT_MAX_NODES,
};
pub use params::{
    AttentionParams, DecoderParams, GateParams, GateTarget, MergeParams, Model, ModelConfig, ScoreParams, SsarParams,
};

#[derive(Debug, Error)]
pub enum DecoderError {
    #[error("symbol {0} is outside the problem's target vocabulary")]
    OutsideVocabulary(String),
    #[error("decoding exceeded {0} nodes")]
    MaxNodesExceeded(usize),
    #[error("no hypothesis completed within {0} nodes")]
    NoHypothesis(usize),
    #[error("forced prefix is incomplete")]
    IncompletePrefix,
    #[error("forced prefix completes after {used} of {len} symbols")]
    TrailingSymbols { used: usize, len: usize },
    #[error("slot {slot} points at token {position} beyond the {len} encoded tokens")]
    SlotPosition { slot: usize, position: usize, len: usize },
    #[error("model expects {expected} constants, got {got}")]
    ConstantCount { expected: usize, got: usize },
    #[error("parameter layout mismatch: {0}")]
    Layout(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
