//! Universal expression trees.
//!
//! Every equation set is one binary tree over the operators
//! `+ - * / ^ = ;`. The lowest-priority `;` glues single equations into a
//! left-deep chain, so a two-unknown system and a one-unknown equation share
//! the same representation and the same pre-order decoding procedure.

mod decimal;
mod infix;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use decimal::Decimal;
pub use infix::{parse_infix, to_infix, to_infix_symbolic};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UetError {
    #[error("malformed number literal `{0}`")]
    MalformedNumber(String),
    #[error("malformed token `{token}` at byte {pos}")]
    MalformedToken { token: String, pos: usize },
    #[error("unbalanced parentheses")]
    UnbalancedParens,
    #[error("equation `{0}` has no `=`")]
    MissingEquals(String),
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("prefix sequence ends before every operator has two operands")]
    Incomplete,
    #[error("{trailing} trailing token(s) after a complete tree")]
    TrailingTokens { trailing: usize },
    #[error("empty sequence")]
    Empty,
    #[error("tree is not rooted at `=`")]
    NotAnEquation,
    #[error("slot n{index} is outside the slot table of size {count}")]
    SlotOutOfRange { index: usize, count: usize },
    #[error("operator `{0}` cannot be a leaf")]
    OperatorLeaf(Operator),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operator {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Eq,
    Seq,
}

impl Operator {
    /// Fixed operator vocabulary, in target-vocabulary order.
    pub const ALL: [Operator; 7] = [
        Operator::Add,
        Operator::Sub,
        Operator::Mul,
        Operator::Div,
        Operator::Pow,
        Operator::Eq,
        Operator::Seq,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Operator::Add => "+",
            Operator::Sub => "-",
            Operator::Mul => "*",
            Operator::Div => "/",
            Operator::Pow => "^",
            Operator::Eq => "=",
            Operator::Seq => ";",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "+" => Operator::Add,
            "-" | "−" => Operator::Sub,
            "*" => Operator::Mul,
            "/" => Operator::Div,
            "^" => Operator::Pow,
            "=" => Operator::Eq,
            ";" => Operator::Seq,
            _ => return None,
        })
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            Operator::Seq => 0,
            Operator::Eq => 1,
            Operator::Add | Operator::Sub => 2,
            Operator::Mul | Operator::Div => 3,
            Operator::Pow => 4,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unknown {
    X,
    Y,
}

impl Unknown {
    pub const ALL: [Unknown; 2] = [Unknown::X, Unknown::Y];

    pub fn name(self) -> &'static str {
        match self {
            Unknown::X => "x",
            Unknown::Y => "y",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "x" => Some(Unknown::X),
            "y" => Some(Unknown::Y),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One entry of a target vocabulary: operator, unknown, constant or number slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TargetSymbol {
    Op(Operator),
    Unknown(Unknown),
    Const(Decimal),
    Slot(usize),
}

impl TargetSymbol {
    pub fn is_operator(&self) -> bool {
        matches!(self, TargetSymbol::Op(_))
    }

    /// Parses one whitespace-free prefix token.
    pub fn parse_token(tok: &str) -> Result<Self, UetError> {
        if let Some(op) = Operator::from_symbol(tok) {
            return Ok(TargetSymbol::Op(op));
        }
        if let Some(u) = Unknown::from_name(tok) {
            return Ok(TargetSymbol::Unknown(u));
        }
        if let Some(idx) = parse_slot_name(tok) {
            return Ok(TargetSymbol::Slot(idx));
        }
        match Decimal::parse(tok) {
            Ok(d) => Ok(TargetSymbol::Const(d)),
            Err(_) => Err(UetError::MalformedToken {
                token: tok.to_string(),
                pos: 0,
            }),
        }
    }
}

impl fmt::Display for TargetSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetSymbol::Op(op) => f.write_str(op.symbol()),
            TargetSymbol::Unknown(u) => f.write_str(u.name()),
            TargetSymbol::Const(d) => write!(f, "{d}"),
            TargetSymbol::Slot(i) => write!(f, "n{i}"),
        }
    }
}

pub(crate) fn parse_slot_name(tok: &str) -> Option<usize> {
    let rest = tok.strip_prefix('n').or_else(|| tok.strip_prefix('N'))?;
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}

/// Binary expression tree node. Operators always carry two children and
/// operands never carry any.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExprNode {
    symbol: TargetSymbol,
    children: Option<Box<(ExprNode, ExprNode)>>,
}

/// Borrowed view for pattern matching on a node.
#[derive(Debug, Clone, Copy)]
pub enum ExprView<'a> {
    Leaf(&'a TargetSymbol),
    Binary(Operator, &'a ExprNode, &'a ExprNode),
}

impl ExprNode {
    pub fn leaf(symbol: TargetSymbol) -> Result<Self, UetError> {
        if let TargetSymbol::Op(op) = symbol {
            return Err(UetError::OperatorLeaf(op));
        }
        Ok(ExprNode { symbol, children: None })
    }

    pub fn unknown(u: Unknown) -> Self {
        ExprNode {
            symbol: TargetSymbol::Unknown(u),
            children: None,
        }
    }

    pub fn constant(d: Decimal) -> Self {
        ExprNode {
            symbol: TargetSymbol::Const(d),
            children: None,
        }
    }

    pub fn slot(index: usize) -> Self {
        ExprNode {
            symbol: TargetSymbol::Slot(index),
            children: None,
        }
    }

    pub fn binary(op: Operator, left: ExprNode, right: ExprNode) -> Self {
        ExprNode {
            symbol: TargetSymbol::Op(op),
            children: Some(Box::new((left, right))),
        }
    }

    pub fn symbol(&self) -> &TargetSymbol {
        &self.symbol
    }

    pub fn operator(&self) -> Option<Operator> {
        match self.symbol {
            TargetSymbol::Op(op) => Some(op),
            _ => None,
        }
    }

    pub fn children(&self) -> Option<(&ExprNode, &ExprNode)> {
        self.children.as_deref().map(|(l, r)| (l, r))
    }

    pub fn view(&self) -> ExprView<'_> {
        match (&self.symbol, self.children.as_deref()) {
            (TargetSymbol::Op(op), Some((l, r))) => ExprView::Binary(*op, l, r),
            (sym, _) => ExprView::Leaf(sym),
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    /// Number of nodes, equal to the prefix length.
    pub fn size(&self) -> usize {
        match self.children() {
            Some((l, r)) => 1 + l.size() + r.size(),
            None => 1,
        }
    }

    /// Visits every symbol in pre-order.
    pub fn for_each_symbol<'a>(&'a self, f: &mut impl FnMut(&'a TargetSymbol)) {
        f(&self.symbol);
        if let Some((l, r)) = self.children() {
            l.for_each_symbol(f);
            r.for_each_symbol(f);
        }
    }

    /// Splits a `;` chain into its equations, in reading order.
    pub fn equations(&self) -> Vec<&ExprNode> {
        let mut out = Vec::new();
        collect_equations(self, &mut out);
        out
    }

    /// Whether `;` only occurs on the left spine and each equation is rooted at `=`.
    pub fn is_valid_uet(&self) -> bool {
        fn has_seq(n: &ExprNode) -> bool {
            n.operator() == Some(Operator::Seq) || n.children().is_some_and(|(l, r)| has_seq(l) || has_seq(r))
        }
        fn has_eq(n: &ExprNode) -> bool {
            n.operator() == Some(Operator::Eq) || n.children().is_some_and(|(l, r)| has_eq(l) || has_eq(r))
        }
        let mut node = self;
        loop {
            match node.view() {
                ExprView::Binary(Operator::Seq, l, r) => {
                    if has_seq(r) {
                        return false;
                    }
                    if !valid_equation(r) {
                        return false;
                    }
                    node = l;
                }
                _ => return valid_equation(node),
            }
        }
        fn valid_equation(n: &ExprNode) -> bool {
            match n.view() {
                ExprView::Binary(Operator::Eq, l, r) => !has_seq(l) && !has_seq(r) && !has_eq(l) && !has_eq(r),
                _ => false,
            }
        }
    }
}

fn collect_equations<'a>(node: &'a ExprNode, out: &mut Vec<&'a ExprNode>) {
    match node.view() {
        ExprView::Binary(Operator::Seq, l, r) => {
            collect_equations(l, out);
            collect_equations(r, out);
        }
        _ => out.push(node),
    }
}

/// Folds equation trees into one left-deep `;` chain.
pub fn integrate(trees: Vec<ExprNode>) -> Result<ExprNode, UetError> {
    let mut iter = trees.into_iter();
    let first = iter.next().ok_or(UetError::Empty)?;
    if first.operator() != Some(Operator::Eq) {
        return Err(UetError::NotAnEquation);
    }
    iter.try_fold(first, |acc, t| {
        if t.operator() != Some(Operator::Eq) {
            return Err(UetError::NotAnEquation);
        }
        Ok(ExprNode::binary(Operator::Seq, acc, t))
    })
}

pub fn to_prefix(tree: &ExprNode) -> Vec<TargetSymbol> {
    let mut out = Vec::with_capacity(tree.size());
    tree.for_each_symbol(&mut |s| out.push(s.clone()));
    out
}

pub fn from_prefix(tokens: &[TargetSymbol]) -> Result<ExprNode, UetError> {
    if tokens.is_empty() {
        return Err(UetError::Empty);
    }
    let mut pos = 0;
    let tree = build(tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(UetError::TrailingTokens {
            trailing: tokens.len() - pos,
        });
    }
    Ok(tree)
}

fn build(tokens: &[TargetSymbol], pos: &mut usize) -> Result<ExprNode, UetError> {
    let sym = tokens.get(*pos).ok_or(UetError::Incomplete)?;
    *pos += 1;
    match sym {
        TargetSymbol::Op(op) => {
            let left = build(tokens, pos)?;
            let right = build(tokens, pos)?;
            Ok(ExprNode::binary(*op, left, right))
        }
        leaf => ExprNode::leaf(leaf.clone()),
    }
}

/// Running count of operands still owed; a prefix is a complete tree iff
/// this reaches zero exactly at its last token.
pub fn pending_operands(tokens: &[TargetSymbol]) -> Option<usize> {
    let mut need: usize = 1;
    for t in tokens {
        if need == 0 {
            return None;
        }
        if t.is_operator() {
            need += 1;
        } else {
            need -= 1;
        }
    }
    Some(need)
}

/// Operator-rooted subtrees in post-order.
pub fn enumerate_internal_subtrees(tree: &ExprNode) -> Vec<&ExprNode> {
    fn walk<'a>(n: &'a ExprNode, out: &mut Vec<&'a ExprNode>) {
        if let Some((l, r)) = n.children() {
            walk(l, out);
            walk(r, out);
            out.push(n);
        }
    }
    let mut out = Vec::new();
    walk(tree, &mut out);
    out
}

pub fn format_prefix(tokens: &[TargetSymbol]) -> String {
    tokens.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn parse_prefix(s: &str) -> Result<Vec<TargetSymbol>, UetError> {
    s.split_whitespace().map(TargetSymbol::parse_token).collect()
}
