//! Datasets, number mapping, vocabularies and cross-validation splits.

mod equation;
pub mod fixtures;
mod loader;
mod number;
mod split;
mod stats;
mod vocab;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::uet::{self, Decimal, Operator, TargetSymbol, UetError, Unknown};

pub use equation::map_equation;
pub use loader::{
    build_instances, load_raw, read_preprocessed, write_preprocessed, DatasetFormat, LoadReport, RawRecord,
};
pub use number::{parse_number_literal, rational_to_decimal, NumberLiteral};
pub use split::split_kfold;
pub use stats::{dataset_stats, DatasetStats};
pub use vocab::{build_vocab, Vocabulary, NUM_TOKEN, PAD_TOKEN, UNK_TOKEN};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("equation: {0}")]
    Equation(#[from] UetError),
    #[error("constant {0} is not in the constant list")]
    ConstantOutsideVocabulary(String),
    #[error("slot n{0} does not exist in the problem")]
    UnknownSlot(usize),
    #[error("equation uses more than two unknowns: {0:?}")]
    TooManyUnknowns(Vec<String>),
    #[error("equation has no unknown")]
    NoUnknown,
    #[error("record {index}: {reason}")]
    BadRecord { index: usize, reason: String },
    #[error("cannot split {len} problems into {k} folds")]
    BadSplit { len: usize, k: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// One number occurrence in the problem text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub index: usize,
    pub literal: String,
    pub value: Decimal,
    /// Token position of the `NUM` marker in the mapped text.
    pub position: usize,
    #[serde(default)]
    pub is_fraction: bool,
}

/// Default constant list used by the target vocabulary.
pub fn default_constants() -> Vec<Decimal> {
    ["1", "2", "3", "4", "3.14"]
        .iter()
        .map(|s| Decimal::parse(s).expect("valid constant"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceRepr", into = "InstanceRepr")]
pub struct ProblemInstance {
    pub id: String,
    pub tokens: Vec<String>,
    pub slots: Vec<Slot>,
    pub gold_prefix: Vec<TargetSymbol>,
    pub gold_answers: Vec<f64>,
    pub unknown_count: usize,
}

#[derive(Serialize, Deserialize)]
struct InstanceRepr {
    id: String,
    tokens: Vec<String>,
    slots: Vec<Slot>,
    gold_prefix: String,
    gold_answers: Vec<f64>,
    unknown_count: usize,
}

impl TryFrom<InstanceRepr> for ProblemInstance {
    type Error = UetError;

    fn try_from(r: InstanceRepr) -> Result<Self, Self::Error> {
        Ok(ProblemInstance {
            id: r.id,
            tokens: r.tokens,
            slots: r.slots,
            gold_prefix: uet::parse_prefix(&r.gold_prefix)?,
            gold_answers: r.gold_answers,
            unknown_count: r.unknown_count,
        })
    }
}

impl From<ProblemInstance> for InstanceRepr {
    fn from(p: ProblemInstance) -> Self {
        InstanceRepr {
            gold_prefix: uet::format_prefix(&p.gold_prefix),
            id: p.id,
            tokens: p.tokens,
            slots: p.slots,
            gold_answers: p.gold_answers,
            unknown_count: p.unknown_count,
        }
    }
}

impl ProblemInstance {
    pub fn slot_values(&self) -> Vec<Decimal> {
        self.slots.iter().map(|s| s.value.clone()).collect()
    }

    /// Checks gold symbols against this problem's target vocabulary.
    pub fn validate(&self, constants: &[Decimal]) -> Result<(), CorpusError> {
        uet::from_prefix(&self.gold_prefix)?;
        for sym in &self.gold_prefix {
            match sym {
                TargetSymbol::Slot(i) if *i >= self.slots.len() => return Err(CorpusError::UnknownSlot(*i)),
                TargetSymbol::Const(c) if !constants.contains(c) => {
                    return Err(CorpusError::ConstantOutsideVocabulary(c.to_string()))
                }
                TargetSymbol::Unknown(u) if u.index() >= self.unknown_count => {
                    return Err(CorpusError::TooManyUnknowns(vec![u.name().to_string()]))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Unknown count implied by the symbols used in a gold prefix.
pub fn unknowns_used(prefix: &[TargetSymbol]) -> usize {
    prefix
        .iter()
        .filter_map(|s| match s {
            TargetSymbol::Unknown(u) => Some(u.index() + 1),
            _ => None,
        })
        .max()
        .unwrap_or(0)
}

/// Problem-specific target vocabulary: operators, unknowns, constants, slots.
pub fn target_vocab(p: &ProblemInstance, constants: &[Decimal]) -> Vec<TargetSymbol> {
    let mut out: Vec<TargetSymbol> = Operator::ALL.iter().map(|&op| TargetSymbol::Op(op)).collect();
    out.extend(
        Unknown::ALL[..p.unknown_count.clamp(1, 2)]
            .iter()
            .map(|&u| TargetSymbol::Unknown(u)),
    );
    out.extend(constants.iter().cloned().map(TargetSymbol::Const));
    out.extend((0..p.slots.len()).map(TargetSymbol::Slot));
    out
}

/// Replaces every number token by `NUM` and records it as a slot.
pub fn number_map(raw: &[String]) -> (Vec<String>, Vec<Slot>) {
    let mut tokens = Vec::with_capacity(raw.len());
    let mut slots = Vec::new();
    for (pos, tok) in raw.iter().enumerate() {
        match parse_number_literal(tok) {
            Some(num) => {
                slots.push(Slot {
                    index: slots.len(),
                    literal: num.literal,
                    value: num.value,
                    position: pos,
                    is_fraction: num.is_fraction,
                });
                tokens.push(NUM_TOKEN.to_string());
            }
            None => tokens.push(tok.clone()),
        }
    }
    (tokens, slots)
}
